#pragma once

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <istream>
#include <map>
#include <optional>
#include <set>
#include <stdexcept>
#include <string>
#include <vector>

#include <gcrit/compliance.hpp>
#include <gcrit/csv.hpp>
#include <gcrit/date.hpp>
#include <gcrit/kb.hpp>
#include <gcrit/patient.hpp>

namespace gcrit {

enum class CommentScope { InScope, OutOfScope, Insight };
enum class Correctness { Correct, PartiallyCorrect, NotCorrect };

inline std::string to_string(CommentScope s) {
    switch (s) {
        case CommentScope::InScope: return "in-scope";
        case CommentScope::OutOfScope: return "out-of-scope";
        case CommentScope::Insight: return "insight";
    }
    return "?";
}

inline std::string to_string(Correctness c) {
    switch (c) {
        case Correctness::Correct: return "correct";
        case Correctness::PartiallyCorrect: return "partially-correct";
        case Correctness::NotCorrect: return "not-correct";
    }
    return "?";
}

struct ExpertComment {
    std::string expert_id;
    std::string patient_id;
    Date event_date;
    std::string comment_type; // a CommentType wire name or free text
    Severity importance = Severity::Important;
    std::string issue_id; // non-empty for in-scope comments
    CommentScope scope = CommentScope::InScope;
    std::string text;

    bool operator==(const ExpertComment&) const = default;
};

struct SupportEntry {
    std::set<std::string> experts; // non-empty
    bool detected_by_system = false;

    bool operator==(const SupportEntry&) const = default;
};

using SupportTable = std::map<std::string, SupportEntry>; // issue_id -> entry

struct Verdict {
    std::string expert_id;
    std::string system_comment_id;
    Correctness correctness = Correctness::Correct;
    Severity importance = Severity::Important;
    std::string note;

    bool operator==(const Verdict&) const = default;
};

struct KappaResult {
    double kappa = 0;
    std::vector<std::vector<double>> weights_used;
    double observed_disagreement = 0;
    double expected_disagreement = 0;
};

struct ZTestResult {
    double z = 0;
    double p_two_sided = 1;
    double pooled_proportion = 0;
};

struct SummaryRow {
    std::string label;
    double completeness = 0; // fraction in (0,1]
    double correctness = 0;
    double harmonic_mean = 0;    // full precision
    double harmonic_mean_2dp = 0;
};

// Integer percentage as printed in the report tables.
inline int pct_half_up(double fraction) {
    return static_cast<int>(std::floor(fraction * 100.0 + 0.5));
}

inline double round2(double v) { return std::floor(v * 100.0 + 0.5) / 100.0; }

// ---------------------------------------------------------------------------
// Annotation file loaders
// ---------------------------------------------------------------------------

inline const char* kExpertCommentsHeader =
    "expert_id,patient_id,event_date,comment_type,importance,issue_id,scope,text";
inline const char* kVerdictsHeader = "expert_id,system_comment_id,correctness,importance,note";
inline const char* kSupportTableHeader = "issue_id,experts,detected_by_system";
inline const char* kMentionsHeader = "system_comment_id,experts";

namespace detail {

inline std::optional<Severity> parse_importance(const std::string& s) {
    if (s == "important") return Severity::Important;
    if (s == "less-important") return Severity::LessImportant;
    return std::nullopt;
}

inline void expect_header(CsvReader& reader, const char* want, const char* what) {
    auto header = reader.next();
    if (!header || csv_join(header->fields) != want)
        throw std::runtime_error(std::string(what) + ": expected header \"" + want + "\"");
}

} // namespace detail

struct ExpertCommentsFile {
    std::vector<ExpertComment> comments;
    std::vector<RejectedRow> errors;
};

inline ExpertCommentsFile load_expert_comments(std::istream& in) {
    ExpertCommentsFile out;
    CsvReader reader(in);
    detail::expect_header(reader, kExpertCommentsHeader, "expert comments");
    while (auto row = reader.next()) {
        const auto& f = row->fields;
        auto reject = [&](std::string why) { out.errors.push_back({row->line_no, std::move(why)}); };
        if (f.size() != 8) { reject("expected 8 fields"); continue; }
        ExpertComment c;
        c.expert_id = f[0];
        c.patient_id = f[1];
        auto date = Date::parse(f[2]);
        if (c.expert_id.empty()) { reject("empty expert_id"); continue; }
        if (!date) { reject("bad event_date \"" + f[2] + "\""); continue; }
        c.event_date = *date;
        c.comment_type = f[3];
        auto imp = detail::parse_importance(f[4]);
        if (!imp) { reject("bad importance \"" + f[4] + "\""); continue; }
        c.importance = *imp;
        c.issue_id = f[5];
        if (f[6] == "in-scope") c.scope = CommentScope::InScope;
        else if (f[6] == "out-of-scope") c.scope = CommentScope::OutOfScope;
        else if (f[6] == "insight") c.scope = CommentScope::Insight;
        else { reject("bad scope \"" + f[6] + "\""); continue; }
        if (c.scope == CommentScope::InScope && c.issue_id.empty()) {
            reject("in-scope comment without issue_id");
            continue;
        }
        c.text = f[7];
        out.comments.push_back(std::move(c));
    }
    return out;
}

struct VerdictsFile {
    std::vector<Verdict> verdicts;
    std::vector<RejectedRow> errors;
};

inline VerdictsFile load_verdicts(std::istream& in) {
    VerdictsFile out;
    CsvReader reader(in);
    detail::expect_header(reader, kVerdictsHeader, "verdicts");
    std::set<std::pair<std::string, std::string>> seen;
    while (auto row = reader.next()) {
        const auto& f = row->fields;
        auto reject = [&](std::string why) { out.errors.push_back({row->line_no, std::move(why)}); };
        if (f.size() != 5) { reject("expected 5 fields"); continue; }
        Verdict v;
        v.expert_id = f[0];
        v.system_comment_id = f[1];
        if (v.expert_id.empty() || v.system_comment_id.empty()) { reject("empty id"); continue; }
        if (f[2] == "correct") v.correctness = Correctness::Correct;
        else if (f[2] == "partially-correct") v.correctness = Correctness::PartiallyCorrect;
        else if (f[2] == "not-correct") v.correctness = Correctness::NotCorrect;
        else { reject("bad correctness \"" + f[2] + "\""); continue; }
        auto imp = detail::parse_importance(f[3]);
        if (!imp) { reject("bad importance \"" + f[3] + "\""); continue; }
        v.importance = *imp;
        v.note = f[4];
        if (!seen.insert({v.expert_id, v.system_comment_id}).second) {
            reject("duplicate verdict for (" + v.expert_id + ", " + v.system_comment_id + ")");
            continue;
        }
        out.verdicts.push_back(std::move(v));
    }
    return out;
}

struct SupportTableFile {
    SupportTable table;
    std::vector<RejectedRow> errors;
};

inline SupportTableFile load_support_table(std::istream& in) {
    SupportTableFile out;
    CsvReader reader(in);
    detail::expect_header(reader, kSupportTableHeader, "support table");
    while (auto row = reader.next()) {
        const auto& f = row->fields;
        auto reject = [&](std::string why) { out.errors.push_back({row->line_no, std::move(why)}); };
        if (f.size() != 3) { reject("expected 3 fields"); continue; }
        if (f[0].empty()) { reject("empty issue_id"); continue; }
        if (out.table.count(f[0])) { reject("duplicate issue_id \"" + f[0] + "\""); continue; }
        SupportEntry e;
        std::size_t pos = 0;
        while (pos <= f[1].size() && !f[1].empty()) {
            auto sep = f[1].find(';', pos);
            std::string id = f[1].substr(pos, sep == std::string::npos ? std::string::npos : sep - pos);
            if (!id.empty()) e.experts.insert(id);
            if (sep == std::string::npos) break;
            pos = sep + 1;
        }
        if (e.experts.empty()) { reject("empty expert set"); continue; }
        if (f[2] == "0") e.detected_by_system = false;
        else if (f[2] == "1") e.detected_by_system = true;
        else { reject("bad detected_by_system \"" + f[2] + "\""); continue; }
        out.table.emplace(f[0], std::move(e));
    }
    return out;
}

struct MentionsFile {
    std::map<std::string, std::set<std::string>> experts_by_comment; // system comment id -> experts
    std::vector<RejectedRow> errors;
};

inline MentionsFile load_mentions(std::istream& in) {
    MentionsFile out;
    CsvReader reader(in);
    detail::expect_header(reader, kMentionsHeader, "mentions");
    while (auto row = reader.next()) {
        const auto& f = row->fields;
        auto reject = [&](std::string why) { out.errors.push_back({row->line_no, std::move(why)}); };
        if (f.size() != 2) { reject("expected 2 fields"); continue; }
        if (f[0].empty()) { reject("empty system_comment_id"); continue; }
        if (out.experts_by_comment.count(f[0])) { reject("duplicate comment id"); continue; }
        std::set<std::string> experts;
        std::size_t pos = 0;
        while (pos <= f[1].size() && !f[1].empty()) {
            auto sep = f[1].find(';', pos);
            std::string id = f[1].substr(pos, sep == std::string::npos ? std::string::npos : sep - pos);
            if (!id.empty()) experts.insert(id);
            if (sep == std::string::npos) break;
            pos = sep + 1;
        }
        out.experts_by_comment.emplace(f[0], std::move(experts));
    }
    return out;
}

// ---------------------------------------------------------------------------
// Statistics
// ---------------------------------------------------------------------------

struct CompletenessRow {
    int level = 0; // number of experts that mentioned the issue
    std::size_t issues = 0;
    std::size_t detected = 0;
    double exact_frac = 0;
    double cumulative_frac = 0; // over issues with support >= level
    int exact_pct = 0;
    int cumulative_pct = 0;
};

// Detection rate of expert-identified issues, broken down by how many
// experts raised each issue. Rows are returned for levels 1..n_experts.
inline std::vector<CompletenessRow> completeness_by_support(const SupportTable& table,
                                                            int n_experts = 3) {
    if (table.empty()) throw std::invalid_argument("completeness_by_support: empty table");
    std::vector<CompletenessRow> rows(static_cast<std::size_t>(n_experts));
    for (int lvl = 1; lvl <= n_experts; ++lvl) rows[lvl - 1].level = lvl;
    for (const auto& [id, entry] : table) {
        int lvl = static_cast<int>(entry.experts.size());
        if (lvl < 1 || lvl > n_experts)
            throw std::invalid_argument("completeness_by_support: issue \"" + id +
                                        "\" has unsupported expert count");
        auto& row = rows[lvl - 1];
        ++row.issues;
        if (entry.detected_by_system) ++row.detected;
    }
    for (int lvl = n_experts; lvl >= 1; --lvl) {
        auto& row = rows[lvl - 1];
        std::size_t cum_issues = 0, cum_detected = 0;
        for (int k = lvl; k <= n_experts; ++k) {
            cum_issues += rows[k - 1].issues;
            cum_detected += rows[k - 1].detected;
        }
        row.exact_frac = row.issues ? static_cast<double>(row.detected) / row.issues : 0.0;
        row.cumulative_frac = cum_issues ? static_cast<double>(cum_detected) / cum_issues : 0.0;
        row.exact_pct = pct_half_up(row.exact_frac);
        row.cumulative_pct = pct_half_up(row.cumulative_frac);
    }
    return rows;
}

// Pooled two-proportion z-test, two-sided p from the normal approximation
// with no continuity correction.
inline ZTestResult two_prop_z(std::size_t x1, std::size_t n1, std::size_t x2, std::size_t n2) {
    if (n1 == 0 || n2 == 0 || x1 > n1 || x2 > n2)
        throw std::invalid_argument("two_prop_z: bad counts");
    double pooled = static_cast<double>(x1 + x2) / (n1 + n2);
    if (pooled <= 0.0 || pooled >= 1.0)
        throw std::invalid_argument("two_prop_z: degenerate pooled proportion");
    double p1 = static_cast<double>(x1) / n1;
    double p2 = static_cast<double>(x2) / n2;
    double se = std::sqrt(pooled * (1.0 - pooled) * (1.0 / n1 + 1.0 / n2));
    ZTestResult r;
    r.pooled_proportion = pooled;
    r.z = (p1 - p2) / se;
    r.p_two_sided = std::erfc(std::abs(r.z) / std::sqrt(2.0));
    return r;
}

struct CorrectnessGroupRow {
    std::string label; // e.g. "correct+correct"
    std::size_t count = 0;
    int pct = 0;
    int cumulative_pct = 0;
    double frac = 0;
    double cumulative_frac = 0;
};

namespace detail {

// Pairs verdicts per system comment; exactly two experts per comment.
inline std::map<std::string, std::pair<Verdict, Verdict>> pair_verdicts(
    const std::vector<Verdict>& verdicts) {
    std::map<std::string, std::vector<Verdict>> by_comment;
    for (const auto& v : verdicts) by_comment[v.system_comment_id].push_back(v);
    std::string bad;
    std::map<std::string, std::pair<Verdict, Verdict>> out;
    for (auto& [id, vs] : by_comment) {
        if (vs.size() != 2 || vs[0].expert_id == vs[1].expert_id) {
            bad += bad.empty() ? id : ", " + id;
            continue;
        }
        if (vs[1].expert_id < vs[0].expert_id) std::swap(vs[0], vs[1]);
        out.emplace(id, std::make_pair(vs[0], vs[1]));
    }
    if (!bad.empty())
        throw std::invalid_argument("need exactly two expert verdicts per comment: " + bad);
    if (out.empty()) throw std::invalid_argument("no verdicts");
    return out;
}

} // namespace detail

// Six combination rows ordered from most to least correct; cumulative % is
// the share of comments at least as correct as the row.
inline std::vector<CorrectnessGroupRow> correctness_groups(const std::vector<Verdict>& verdicts) {
    auto paired = detail::pair_verdicts(verdicts);
    // cell index: ordered pair {min,max} over C=0, P=1, N=2
    auto cell = [](Correctness a, Correctness b) {
        int x = static_cast<int>(a), y = static_cast<int>(b);
        if (x > y) std::swap(x, y);
        if (x == 0 && y == 0) return 0; // C+C
        if (x == 0 && y == 1) return 1; // C+P
        if (x == 1 && y == 1) return 2; // P+P
        if (x == 0 && y == 2) return 3; // C+N
        if (x == 1 && y == 2) return 4; // P+N
        return 5;                       // N+N
    };
    static const char* kLabels[6] = {"correct+correct",   "correct+partially", "partially+partially",
                                     "correct+not",       "partially+not",     "not+not"};
    std::size_t counts[6] = {0, 0, 0, 0, 0, 0};
    for (const auto& [id, pair] : paired)
        ++counts[cell(pair.first.correctness, pair.second.correctness)];

    std::size_t total = paired.size(), running = 0;
    std::vector<CorrectnessGroupRow> rows;
    for (int i = 0; i < 6; ++i) {
        running += counts[i];
        CorrectnessGroupRow r;
        r.label = kLabels[i];
        r.count = counts[i];
        r.frac = static_cast<double>(counts[i]) / total;
        r.cumulative_frac = static_cast<double>(running) / total;
        r.pct = pct_half_up(r.frac);
        r.cumulative_pct = pct_half_up(r.cumulative_frac);
        rows.push_back(std::move(r));
    }
    return rows;
}

struct ImportanceSummary {
    std::size_t both_important = 0;
    std::size_t one_important = 0;
    std::size_t none_important = 0;
    int both_pct = 0, one_pct = 0, none_pct = 0;
    std::size_t important_votes = 0;
    std::size_t total_votes = 0;
    double voting_frac = 0;
    int voting_pct = 0;
};

inline ImportanceSummary importance_summary(const std::vector<Verdict>& verdicts) {
    auto paired = detail::pair_verdicts(verdicts);
    ImportanceSummary s;
    for (const auto& [id, pair] : paired) {
        int n = (pair.first.importance == Severity::Important ? 1 : 0) +
                (pair.second.importance == Severity::Important ? 1 : 0);
        if (n == 2) ++s.both_important;
        else if (n == 1) ++s.one_important;
        else ++s.none_important;
        s.important_votes += n;
    }
    std::size_t total = paired.size();
    s.total_votes = 2 * total;
    s.both_pct = pct_half_up(static_cast<double>(s.both_important) / total);
    s.one_pct = pct_half_up(static_cast<double>(s.one_important) / total);
    s.none_pct = pct_half_up(static_cast<double>(s.none_important) / total);
    s.voting_frac = static_cast<double>(s.important_votes) / s.total_votes;
    s.voting_pct = pct_half_up(s.voting_frac);
    return s;
}

// System comments both experts accepted, at least one of them as fully
// correct. This is the population the indirect completeness figures use.
inline std::set<std::string> jointly_correct_ids(const std::vector<Verdict>& verdicts) {
    std::set<std::string> out;
    for (const auto& [id, pair] : detail::pair_verdicts(verdicts)) {
        bool none_wrong = pair.first.correctness != Correctness::NotCorrect &&
                          pair.second.correctness != Correctness::NotCorrect;
        bool one_full = pair.first.correctness == Correctness::Correct ||
                        pair.second.correctness == Correctness::Correct;
        if (none_wrong && one_full) out.insert(id);
    }
    return out;
}

// Confusion matrix of the paired correctness verdicts. Rows follow the
// lexically first expert of each pair, columns the second; categories are
// ordered correct / partially-correct / not-correct.
inline std::vector<std::vector<std::size_t>> correctness_matrix(
    const std::vector<Verdict>& verdicts) {
    std::vector<std::vector<std::size_t>> m(3, std::vector<std::size_t>(3, 0));
    for (const auto& [id, pair] : detail::pair_verdicts(verdicts))
        ++m[static_cast<std::size_t>(pair.first.correctness)]
           [static_cast<std::size_t>(pair.second.correctness)];
    return m;
}

// Same pairing for the two-level importance judgement, important first.
inline std::vector<std::vector<std::size_t>> importance_matrix(
    const std::vector<Verdict>& verdicts) {
    std::vector<std::vector<std::size_t>> m(2, std::vector<std::size_t>(2, 0));
    for (const auto& [id, pair] : detail::pair_verdicts(verdicts))
        ++m[pair.first.importance == Severity::Important ? 0 : 1]
           [pair.second.importance == Severity::Important ? 0 : 1];
    return m;
}

inline std::vector<std::vector<double>> linear_weights(std::size_t k) {
    std::vector<std::vector<double>> w(k, std::vector<double>(k, 0.0));
    for (std::size_t i = 0; i < k; ++i)
        for (std::size_t j = 0; j < k; ++j)
            w[i][j] = static_cast<double>(i > j ? i - j : j - i);
    return w;
}

inline std::vector<std::vector<double>> unit_weights(std::size_t k) {
    std::vector<std::vector<double>> w(k, std::vector<double>(k, 1.0));
    for (std::size_t i = 0; i < k; ++i) w[i][i] = 0.0;
    return w;
}

// Cohen's kappa in the disagreement form: kappa = 1 - sum(w*O) / sum(w*E),
// with O the observed proportions and E the marginal product. Unit weights
// give the unweighted kappa.
inline KappaResult weighted_kappa(const std::vector<std::vector<std::size_t>>& counts,
                                  const std::vector<std::vector<double>>& weights) {
    std::size_t k = counts.size();
    if (k == 0 || weights.size() != k)
        throw std::invalid_argument("weighted_kappa: dimension mismatch");
    for (std::size_t i = 0; i < k; ++i)
        if (counts[i].size() != k || weights[i].size() != k)
            throw std::invalid_argument("weighted_kappa: not square");
    for (std::size_t i = 0; i < k; ++i) {
        if (weights[i][i] != 0.0) throw std::invalid_argument("weighted_kappa: nonzero diagonal weight");
        for (std::size_t j = 0; j < k; ++j) {
            if (weights[i][j] < 0 || weights[i][j] != weights[j][i])
                throw std::invalid_argument("weighted_kappa: weights must be symmetric and non-negative");
        }
    }

    double total = 0;
    std::vector<double> row(k, 0.0), col(k, 0.0);
    for (std::size_t i = 0; i < k; ++i)
        for (std::size_t j = 0; j < k; ++j) {
            total += static_cast<double>(counts[i][j]);
            row[i] += static_cast<double>(counts[i][j]);
            col[j] += static_cast<double>(counts[i][j]);
        }
    if (total <= 0) throw std::invalid_argument("weighted_kappa: empty matrix");

    double observed = 0, expected = 0;
    for (std::size_t i = 0; i < k; ++i)
        for (std::size_t j = 0; j < k; ++j) {
            observed += weights[i][j] * (counts[i][j] / total);
            expected += weights[i][j] * (row[i] / total) * (col[j] / total);
        }
    if (expected == 0)
        throw std::invalid_argument("weighted_kappa: zero expected disagreement");

    KappaResult r;
    r.weights_used = weights;
    r.observed_disagreement = observed;
    r.expected_disagreement = expected;
    r.kappa = 1.0 - observed / expected;
    return r;
}

// Raters needed (given the current panel size) to reach the target
// reliability, via the classical prophecy multiplier.
inline double spearman_brown_multiplier(double kappa_observed, double kappa_target) {
    if (!(kappa_observed > 0.0 && kappa_observed < 1.0) ||
        !(kappa_target > 0.0 && kappa_target < 1.0))
        throw std::invalid_argument("spearman_brown_multiplier: kappas must be in (0,1)");
    return kappa_target * (1.0 - kappa_observed) / (kappa_observed * (1.0 - kappa_target));
}

inline int spearman_brown_required(int current_raters, double kappa_observed,
                                   double kappa_target) {
    double m = spearman_brown_multiplier(kappa_observed, kappa_target);
    return static_cast<int>(std::ceil(current_raters * m - 1e-9));
}

struct IndirectCorrectnessRow {
    std::string expert_id;
    std::size_t comments = 0;
    // histogram[n] = comments whose issue was mentioned by n other agents
    std::vector<std::size_t> with_system;    // other agents include the system
    std::vector<std::size_t> experts_only;
    double frac_with_system = 0;  // share mentioned by at least one other agent
    double frac_experts_only = 0;
    int pct_with_system = 0;
    int pct_experts_only = 0;
};

// For each expert: how often other agents raised the same issue. Counted
// twice, with the system included as an agent and without it.
inline std::vector<IndirectCorrectnessRow> indirect_correctness(
    const std::vector<ExpertComment>& comments, const SupportTable& table) {
    std::map<std::string, IndirectCorrectnessRow> rows;
    for (const auto& c : comments) {
        if (c.scope != CommentScope::InScope) continue;
        auto it = table.find(c.issue_id);
        if (it == table.end())
            throw std::invalid_argument("indirect_correctness: issue \"" + c.issue_id +
                                        "\" missing from support table");
        if (!it->second.experts.count(c.expert_id))
            throw std::invalid_argument("indirect_correctness: support table does not list \"" +
                                        c.expert_id + "\" for issue \"" + c.issue_id + "\"");
        auto& row = rows[c.expert_id];
        row.expert_id = c.expert_id;
        std::size_t others = it->second.experts.size() - 1;
        std::size_t with_sys = others + (it->second.detected_by_system ? 1 : 0);
        row.with_system.resize(std::max(row.with_system.size(), with_sys + 1), 0);
        row.experts_only.resize(std::max(row.experts_only.size(), others + 1), 0);
        ++row.with_system[with_sys];
        ++row.experts_only[others];
        ++row.comments;
    }
    std::vector<IndirectCorrectnessRow> out;
    for (auto& [id, row] : rows) {
        std::size_t lonely_sys = row.with_system.empty() ? 0 : row.with_system[0];
        std::size_t lonely_exp = row.experts_only.empty() ? 0 : row.experts_only[0];
        row.frac_with_system =
            static_cast<double>(row.comments - lonely_sys) / row.comments;
        row.frac_experts_only =
            static_cast<double>(row.comments - lonely_exp) / row.comments;
        row.pct_with_system = pct_half_up(row.frac_with_system);
        row.pct_experts_only = pct_half_up(row.frac_experts_only);
        out.push_back(std::move(row));
    }
    return out; // map iteration: sorted by expert_id
}

struct IndirectCompletenessResult {
    struct Row {
        std::string expert_id;
        std::size_t mentioned = 0;
        double frac = 0;
        int pct = 0;
    };
    std::vector<Row> rows;
    std::size_t jointly_correct = 0;
    std::size_t mentioned_total = 0;
    double combined_frac = 0;
    int combined_pct = 0;
};

// Share of the jointly-correct system comments each expert also raised.
inline IndirectCompletenessResult indirect_completeness(
    const std::set<std::string>& jointly_correct,
    const std::map<std::string, std::set<std::string>>& mentions_by_expert) {
    if (jointly_correct.empty())
        throw std::invalid_argument("indirect_completeness: empty jointly-correct set");
    IndirectCompletenessResult out;
    out.jointly_correct = jointly_correct.size();
    for (const auto& [expert, mentioned] : mentions_by_expert) {
        for (const auto& id : mentioned)
            if (!jointly_correct.count(id))
                throw std::invalid_argument("indirect_completeness: \"" + id +
                                            "\" mentioned but not jointly correct");
        IndirectCompletenessResult::Row row;
        row.expert_id = expert;
        row.mentioned = mentioned.size();
        row.frac = static_cast<double>(row.mentioned) / out.jointly_correct;
        row.pct = pct_half_up(row.frac);
        out.mentioned_total += row.mentioned;
        out.rows.push_back(std::move(row));
    }
    std::size_t denom = out.jointly_correct * mentions_by_expert.size();
    out.combined_frac = denom ? static_cast<double>(out.mentioned_total) / denom : 0.0;
    out.combined_pct = pct_half_up(out.combined_frac);
    return out;
}

// Harmonic mean of completeness and correctness per agent.
inline std::vector<SummaryRow> summary_profile(
    const std::vector<std::tuple<std::string, double, double>>& rows) {
    std::vector<SummaryRow> out;
    for (const auto& [label, completeness, correctness] : rows) {
        if (!(completeness > 0.0) || !(correctness > 0.0) || completeness > 1.0 ||
            correctness > 1.0)
            throw std::invalid_argument("summary_profile: values must be in (0,1]");
        SummaryRow r;
        r.label = label;
        r.completeness = completeness;
        r.correctness = correctness;
        r.harmonic_mean = 2.0 * completeness * correctness / (completeness + correctness);
        r.harmonic_mean_2dp = round2(r.harmonic_mean);
        out.push_back(std::move(r));
    }
    return out;
}

} // namespace gcrit
