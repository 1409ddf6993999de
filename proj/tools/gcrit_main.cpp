// Command-line front end for the gcrit library. The subcommands cover the
// whole batch workflow: validate a knowledge base, ingest raw CSV exports
// into a cohort file, audit a cohort for compliance, compute evaluation
// statistics from expert annotation files, and render a stored comment
// stream as a per-patient report.
//
// Exit codes follow one convention everywhere: 0 on success, 1 for a domain
// error (well-formed invocation, bad content), 2 for usage or I/O errors.

#include <cstdarg>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include <gcrit/compliance.hpp>
#include <gcrit/digest.hpp>
#include <gcrit/evalstats.hpp>
#include <gcrit/kb.hpp>
#include <gcrit/patient.hpp>
#include <gcrit/runner.hpp>

namespace {

using namespace gcrit;

std::optional<std::string> slurp(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) return std::nullopt;
    std::ostringstream ss;
    ss << in.rdbuf();
    if (in.bad()) return std::nullopt;
    return std::move(ss).str();
}

bool spill(const std::string& path, const std::string& content) {
    std::ofstream out(path, std::ios::binary);
    if (!out) return false;
    out << content;
    out.flush();
    return out.good();
}

int io_error(const std::string& msg) {
    std::cerr << "gcrit: " << msg << "\n";
    return 2;
}

int domain_error(const std::string& msg) {
    std::cerr << "gcrit: " << msg << "\n";
    return 1;
}

void appendf(std::string& out, const char* fmt, ...) {
    char buf[512];
    va_list args;
    va_start(args, fmt);
    std::vsnprintf(buf, sizeof(buf), fmt, args);
    va_end(args);
    out += buf;
}

// Reads and fully checks a KB file. Unreadable file sets rc 2, invalid
// content rc 1; on success rc is 0 and the KB is returned.
std::optional<GuidelineKB> load_kb_file(const std::string& path, int& rc) {
    auto text = slurp(path);
    if (!text) {
        rc = io_error("cannot read " + path);
        return std::nullopt;
    }
    try {
        rc = 0;
        return parse_kb(*text);
    } catch (const KbError& e) {
        rc = domain_error(path + ": " + e.what());
        return std::nullopt;
    }
}

// ---------------------------------------------------------------------------
// kb validate
// ---------------------------------------------------------------------------

int run_kb_validate(const std::string& path) {
    auto text = slurp(path);
    if (!text) return io_error("cannot read " + path);
    GuidelineKB kb;
    try {
        kb = parse_kb(*text);
    } catch (const KbError& e) {
        std::cerr << path << ": " << e.what() << "\n";
        return 1;
    }
    // parse_kb throws on error-level findings, so only warnings can remain.
    for (const auto& d : validate_kb(kb))
        std::cerr << path << ": warning: " << d.location << ": " << d.message << "\n";
    return 0;
}

// ---------------------------------------------------------------------------
// Cohort input loading, shared by ingest and analyze
// ---------------------------------------------------------------------------

struct LoadedInputs {
    Cohort cohort;
    std::vector<std::pair<std::string, std::string>> digests; // path, content hash
    std::vector<std::string> reject_lines; // new rejects as "path:line: reason"
};

// Pulls every cohort file (saved-cohort JSON or transaction CSV, sniffed by
// the leading byte) plus demographics CSVs into one merged cohort. Rejects
// carried inside a saved cohort were already reported when it was built and
// only count toward the report totals, not toward reject_lines.
int load_cohort_inputs(const GuidelineKB& kb, const std::vector<std::string>& cohort_paths,
                       const std::vector<std::string>& demo_paths, IngestMode mode,
                       LoadedInputs& out) {
    for (const auto& path : cohort_paths) {
        auto text = slurp(path);
        if (!text) return io_error("cannot read " + path);
        out.digests.emplace_back(path, fnv1a64_hex(*text));

        auto first = text->find_first_not_of(" \t\r\n");
        bool saved = first != std::string::npos && (*text)[first] == '{';
        Cohort part;
        try {
            if (saved) {
                part = load_cohort(*text);
            } else {
                std::istringstream in(*text);
                part = ingest_transactions(in, kb, mode);
            }
        } catch (const std::exception& e) {
            return domain_error(path + ": " + e.what());
        }
        if (!saved)
            for (const auto& r : part.report.rejected)
                out.reject_lines.push_back(path + ":" + std::to_string(r.line_no) + ": " +
                                           r.reason);
        merge_into(out.cohort, std::move(part));
    }

    for (const auto& path : demo_paths) {
        auto text = slurp(path);
        if (!text) return io_error("cannot read " + path);
        out.digests.emplace_back(path, fnv1a64_hex(*text));
        std::istringstream in(*text);
        std::vector<RejectedRow> rejected;
        try {
            rejected = apply_demographics(out.cohort, in);
        } catch (const std::exception& e) {
            return domain_error(path + ": " + e.what());
        }
        for (auto& r : rejected) {
            out.reject_lines.push_back(path + ":" + std::to_string(r.line_no) + ": " + r.reason);
            out.cohort.report.rejected.push_back(std::move(r));
        }
    }
    return 0;
}

// ---------------------------------------------------------------------------
// ingest
// ---------------------------------------------------------------------------

struct IngestArgs {
    std::string kb_path;
    std::vector<std::string> transactions;
    std::vector<std::string> demographics;
    std::string out_path;
    bool lenient = false;
};

int run_ingest(const IngestArgs& a) {
    int rc = 0;
    auto kb = load_kb_file(a.kb_path, rc);
    if (!kb) return rc;

    LoadedInputs in;
    rc = load_cohort_inputs(*kb, a.transactions, a.demographics,
                            a.lenient ? IngestMode::Lenient : IngestMode::Strict, in);
    if (rc) return rc;

    for (const auto& line : in.reject_lines) std::cerr << line << "\n";
    if (!a.lenient && !in.reject_lines.empty()) return 1;

    auto text = save_cohort(in.cohort);
    if (a.out_path.empty()) {
        std::cout << text;
        return 0;
    }
    if (!spill(a.out_path, text)) return io_error("cannot write " + a.out_path);
    return 0;
}

// ---------------------------------------------------------------------------
// analyze
// ---------------------------------------------------------------------------

// The config file is a JSON object whose keys match the RunConfig fields.
// Command-line flags override whatever the file sets.
int apply_config_file(const std::string& path, RunConfig& cfg) {
    auto text = slurp(path);
    if (!text) return io_error("cannot read " + path);
    json doc;
    try {
        doc = json::parse(*text);
    } catch (const json::parse_error& e) {
        return io_error(path + ": " + e.what());
    }
    if (!doc.is_object()) return io_error(path + ": expected a top-level object");
    try {
        for (const auto& [key, value] : doc.items()) {
            if (key == "kb_path") cfg.kb_path = value.get<std::string>();
            else if (key == "cohort_paths") cfg.cohort_paths = value.get<std::vector<std::string>>();
            else if (key == "demographics_paths")
                cfg.demographics_paths = value.get<std::vector<std::string>>();
            else if (key == "output_dir") cfg.output_dir = value.get<std::string>();
            else if (key == "adherence_threshold") cfg.adherence_threshold = value.get<double>();
            else if (key == "drug_active_lapse_days")
                cfg.drug_active_lapse_days = value.get<int>();
            else if (key == "strict_ingestion") cfg.strict_ingestion = value.get<bool>();
            else if (key == "parallelism") cfg.parallelism = value.get<int>();
            else return io_error(path + ": unknown key \"" + key + "\"");
        }
    } catch (const json::exception& e) {
        return io_error(path + ": " + e.what());
    }
    return 0;
}

int run_analyze(const CLI::App& cmd, const std::string& config_path, const RunConfig& flags) {
    RunConfig cfg;
    if (!config_path.empty()) {
        int rc = apply_config_file(config_path, cfg);
        if (rc) return rc;
    }
    if (cmd.count("--kb-path")) cfg.kb_path = flags.kb_path;
    if (cmd.count("--cohort-paths")) cfg.cohort_paths = flags.cohort_paths;
    if (cmd.count("--demographics-paths")) cfg.demographics_paths = flags.demographics_paths;
    if (cmd.count("--output-dir")) cfg.output_dir = flags.output_dir;
    if (cmd.count("--adherence-threshold")) cfg.adherence_threshold = flags.adherence_threshold;
    if (cmd.count("--drug-active-lapse-days"))
        cfg.drug_active_lapse_days = flags.drug_active_lapse_days;
    if (cmd.count("--strict-ingestion")) cfg.strict_ingestion = flags.strict_ingestion;
    if (cmd.count("--parallelism")) cfg.parallelism = flags.parallelism;

    if (cfg.kb_path.empty() || cfg.cohort_paths.empty() || cfg.output_dir.empty())
        return io_error("analyze needs --kb-path, --cohort-paths and --output-dir "
                        "(as flags or config-file keys)");
    try {
        validate(cfg);
    } catch (const std::invalid_argument& e) {
        return io_error(e.what());
    }

    auto kb_text = slurp(cfg.kb_path);
    if (!kb_text) return io_error("cannot read " + cfg.kb_path);
    GuidelineKB kb;
    try {
        kb = parse_kb(*kb_text);
    } catch (const KbError& e) {
        return domain_error(cfg.kb_path + ": " + e.what());
    }

    LoadedInputs in;
    in.digests.emplace_back(cfg.kb_path, fnv1a64_hex(*kb_text));
    int rc = load_cohort_inputs(kb, cfg.cohort_paths, cfg.demographics_paths,
                                cfg.strict_ingestion ? IngestMode::Strict : IngestMode::Lenient,
                                in);
    if (rc) return rc;
    for (const auto& line : in.reject_lines) std::cerr << line << "\n";
    if (cfg.strict_ingestion && !in.reject_lines.empty()) return 1;

    AnalysisResult result;
    try {
        result = analyze_cohort(kb, in.cohort, cfg);
    } catch (const std::exception& e) {
        return domain_error(e.what());
    }

    std::error_code ec;
    std::filesystem::create_directories(cfg.output_dir, ec);
    if (ec) return io_error("cannot create " + cfg.output_dir + ": " + ec.message());
    auto in_dir = [&](const char* name) {
        return (std::filesystem::path(cfg.output_dir) / name).string();
    };
    if (!spill(in_dir("comments.jsonl"), render_comment_stream(result.comments)))
        return io_error("cannot write comments.jsonl");
    if (!spill(in_dir("report.txt"), render_patient_report(result.comments)))
        return io_error("cannot write report.txt");
    if (!spill(in_dir("manifest.json"),
               render_manifest(cfg, in.digests, in.cohort.report, result)))
        return io_error("cannot write manifest.json");
    return 0;
}

// ---------------------------------------------------------------------------
// eval
// ---------------------------------------------------------------------------

struct EvalArgs {
    std::string support_path;
    std::string verdicts_path;
    std::string comments_path; // expert comments, optional
    std::string mentions_path; // optional
    std::string stream_path;   // system comment stream, optional
    std::string out_dir;       // optional
    double sb_target = 0.7;
    int n_experts = 3;
};

json z_to_json(const ZTestResult& r) {
    json j = json::object();
    j["z"] = r.z;
    j["p_two_sided"] = r.p_two_sided;
    j["pooled_proportion"] = r.pooled_proportion;
    return j;
}

json kappa_to_json(const KappaResult& r) {
    json j = json::object();
    j["kappa"] = r.kappa;
    j["observed_disagreement"] = r.observed_disagreement;
    j["expected_disagreement"] = r.expected_disagreement;
    return j;
}

int run_eval(const EvalArgs& a) {
    if (a.n_experts < 1) return io_error("--experts must be >= 1");
    if (!(a.sb_target > 0.0) || a.sb_target >= 1.0)
        return io_error("--sb-target must be in (0,1)");

    std::vector<std::string> row_errors;
    auto note_errors = [&](const std::string& path, const std::vector<RejectedRow>& errs) {
        for (const auto& r : errs)
            row_errors.push_back(path + ":" + std::to_string(r.line_no) + ": " + r.reason);
    };

    SupportTable support;
    {
        auto text = slurp(a.support_path);
        if (!text) return io_error("cannot read " + a.support_path);
        std::istringstream in(*text);
        try {
            auto file = load_support_table(in);
            note_errors(a.support_path, file.errors);
            support = std::move(file.table);
        } catch (const std::exception& e) {
            return domain_error(a.support_path + ": " + e.what());
        }
    }

    std::vector<Verdict> verdicts;
    {
        auto text = slurp(a.verdicts_path);
        if (!text) return io_error("cannot read " + a.verdicts_path);
        std::istringstream in(*text);
        try {
            auto file = load_verdicts(in);
            note_errors(a.verdicts_path, file.errors);
            verdicts = std::move(file.verdicts);
        } catch (const std::exception& e) {
            return domain_error(a.verdicts_path + ": " + e.what());
        }
    }

    std::vector<ExpertComment> expert_comments;
    bool have_comments = !a.comments_path.empty();
    if (have_comments) {
        auto text = slurp(a.comments_path);
        if (!text) return io_error("cannot read " + a.comments_path);
        std::istringstream in(*text);
        try {
            auto file = load_expert_comments(in);
            note_errors(a.comments_path, file.errors);
            expert_comments = std::move(file.comments);
        } catch (const std::exception& e) {
            return domain_error(a.comments_path + ": " + e.what());
        }
    }

    MentionsFile mentions;
    bool have_mentions = !a.mentions_path.empty();
    if (have_mentions) {
        auto text = slurp(a.mentions_path);
        if (!text) return io_error("cannot read " + a.mentions_path);
        std::istringstream in(*text);
        try {
            mentions = load_mentions(in);
            note_errors(a.mentions_path, mentions.errors);
        } catch (const std::exception& e) {
            return domain_error(a.mentions_path + ": " + e.what());
        }
    }

    if (!row_errors.empty()) {
        for (const auto& line : row_errors) std::cerr << line << "\n";
        return 1;
    }

    std::string tables;
    json stats = json::object();

    // Detection of expert-raised issues, split by how many experts raised
    // each. Printed top support level first. Adjacent levels get a pooled
    // two-proportion z-test; degenerate splits are reported, not fatal.
    std::vector<CompletenessRow> comp;
    try {
        comp = completeness_by_support(support, a.n_experts);
    } catch (const std::invalid_argument& e) {
        return domain_error(a.support_path + ": " + e.what());
    }
    tables += "completeness by expert support\n";
    tables += "  level  issues  detected  exact  cumulative\n";
    json comp_rows = json::array();
    for (int lvl = a.n_experts; lvl >= 1; --lvl) {
        const auto& r = comp[static_cast<std::size_t>(lvl - 1)];
        appendf(tables, "  %5d  %6zu  %8zu  %4d%%  %9d%%\n", r.level, r.issues, r.detected,
                r.exact_pct, r.cumulative_pct);
        json row = json::object();
        row["level"] = r.level;
        row["issues"] = r.issues;
        row["detected"] = r.detected;
        row["exact_frac"] = r.exact_frac;
        row["cumulative_frac"] = r.cumulative_frac;
        row["exact_pct"] = r.exact_pct;
        row["cumulative_pct"] = r.cumulative_pct;
        comp_rows.push_back(std::move(row));
    }
    stats["completeness"] = std::move(comp_rows);

    json z_rows = json::array();
    for (int lvl = a.n_experts; lvl >= 2; --lvl) {
        const auto& hi = comp[static_cast<std::size_t>(lvl - 1)];
        const auto& lo = comp[static_cast<std::size_t>(lvl - 2)];
        json row = json::object();
        row["levels"] = std::to_string(lvl) + " vs " + std::to_string(lvl - 1);
        try {
            auto r = two_prop_z(hi.detected, hi.issues, lo.detected, lo.issues);
            appendf(tables, "  detection level %d vs %d: z = %.2f, p = %.3f\n", lvl, lvl - 1,
                    r.z, r.p_two_sided);
            row["test"] = z_to_json(r);
        } catch (const std::invalid_argument& e) {
            appendf(tables, "  detection level %d vs %d: not computable (%s)\n", lvl, lvl - 1,
                    e.what());
            row["error"] = e.what();
        }
        z_rows.push_back(std::move(row));
    }
    stats["detection_z_tests"] = std::move(z_rows);

    // Paired verdicts: correctness combinations, importance votes, agreement.
    std::vector<CorrectnessGroupRow> groups;
    try {
        groups = correctness_groups(verdicts);
    } catch (const std::invalid_argument& e) {
        return domain_error(a.verdicts_path + ": " + e.what());
    }
    std::size_t total_pairs = 0;
    for (const auto& g : groups) total_pairs += g.count;

    tables += "\nverdict pairs by correctness\n";
    json group_rows = json::array();
    for (const auto& g : groups) {
        appendf(tables, "  %-19s  %5zu  %3d%%  cumulative %3d%%\n", g.label.c_str(), g.count,
                g.pct, g.cumulative_pct);
        json row = json::object();
        row["label"] = g.label;
        row["count"] = g.count;
        row["frac"] = g.frac;
        row["cumulative_frac"] = g.cumulative_frac;
        row["pct"] = g.pct;
        row["cumulative_pct"] = g.cumulative_pct;
        group_rows.push_back(std::move(row));
    }
    stats["correctness_groups"] = std::move(group_rows);

    auto imp = importance_summary(verdicts);
    tables += "\nimportance votes on system comments\n";
    appendf(tables, "  both important     %5zu  %3d%%\n", imp.both_important, imp.both_pct);
    appendf(tables, "  one important      %5zu  %3d%%\n", imp.one_important, imp.one_pct);
    appendf(tables, "  neither important  %5zu  %3d%%\n", imp.none_important, imp.none_pct);
    appendf(tables, "  important votes: %zu/%zu (%d%%)\n", imp.important_votes, imp.total_votes,
            imp.voting_pct);
    {
        json j = json::object();
        j["both_important"] = imp.both_important;
        j["one_important"] = imp.one_important;
        j["none_important"] = imp.none_important;
        j["both_pct"] = imp.both_pct;
        j["one_pct"] = imp.one_pct;
        j["none_pct"] = imp.none_pct;
        j["important_votes"] = imp.important_votes;
        j["total_votes"] = imp.total_votes;
        j["voting_frac"] = imp.voting_frac;
        j["voting_pct"] = imp.voting_pct;
        stats["importance"] = std::move(j);
    }

    // Agreement coefficients are soft: a degenerate matrix (for example all
    // verdicts fully correct) leaves the rest of the run usable.
    tables += "\ninter-rater agreement\n";
    json agreement = json::object();
    try {
        auto kw = weighted_kappa(correctness_matrix(verdicts), linear_weights(3));
        appendf(tables, "  correctness, linear weights: kappa = %.3f\n", kw.kappa);
        agreement["correctness_weighted"] = kappa_to_json(kw);
    } catch (const std::invalid_argument& e) {
        appendf(tables, "  correctness, linear weights: not computable (%s)\n", e.what());
        agreement["correctness_weighted"] = json{{"error", e.what()}};
    }
    try {
        auto ku = weighted_kappa(correctness_matrix(verdicts), unit_weights(3));
        appendf(tables, "  correctness, unweighted: kappa = %.3f\n", ku.kappa);
        agreement["correctness_unweighted"] = kappa_to_json(ku);
    } catch (const std::invalid_argument& e) {
        appendf(tables, "  correctness, unweighted: not computable (%s)\n", e.what());
        agreement["correctness_unweighted"] = json{{"error", e.what()}};
    }
    try {
        auto ki = weighted_kappa(importance_matrix(verdicts), unit_weights(2));
        appendf(tables, "  importance, unweighted: kappa = %.3f\n", ki.kappa);
        agreement["importance"] = kappa_to_json(ki);
        // Rater projection from the two-rater importance agreement.
        try {
            double mult = spearman_brown_multiplier(ki.kappa, a.sb_target);
            int required = spearman_brown_required(2, ki.kappa, a.sb_target);
            appendf(tables, "  raters needed for importance kappa >= %.2f: %d (multiplier %.2f)\n",
                    a.sb_target, required, mult);
            json sb = json::object();
            sb["target"] = a.sb_target;
            sb["multiplier"] = mult;
            sb["current_raters"] = 2;
            sb["required_raters"] = required;
            agreement["rater_projection"] = std::move(sb);
        } catch (const std::invalid_argument& e) {
            appendf(tables, "  rater projection: not computable (%s)\n", e.what());
            agreement["rater_projection"] = json{{"error", e.what()}};
        }
    } catch (const std::invalid_argument& e) {
        appendf(tables, "  importance, unweighted: not computable (%s)\n", e.what());
        agreement["importance"] = json{{"error", e.what()}};
    }
    stats["agreement"] = std::move(agreement);

    auto jointly = jointly_correct_ids(verdicts);
    stats["jointly_correct"] = jointly.size();

    // Cross-corroboration of the experts' own comments, against the issue
    // support table, counted with and without the system as an extra agent.
    std::vector<IndirectCorrectnessRow> t4;
    if (have_comments) {
        try {
            t4 = indirect_correctness(expert_comments, support);
        } catch (const std::invalid_argument& e) {
            return domain_error(a.comments_path + ": " + e.what());
        }
        tables += "\nexpert comments corroborated by other agents\n";
        tables += "  expert    comments  with system  experts only\n";
        json rows = json::array();
        for (const auto& r : t4) {
            appendf(tables, "  %-8s  %8zu  %10d%%  %11d%%\n", r.expert_id.c_str(), r.comments,
                    r.pct_with_system, r.pct_experts_only);
            json row = json::object();
            row["expert_id"] = r.expert_id;
            row["comments"] = r.comments;
            row["frac_with_system"] = r.frac_with_system;
            row["frac_experts_only"] = r.frac_experts_only;
            row["pct_with_system"] = r.pct_with_system;
            row["pct_experts_only"] = r.pct_experts_only;
            rows.push_back(std::move(row));
        }
        // The raw shares matter when a percentage sits next to a rounding
        // boundary, so each row's fractions are spelled out once.
        for (const auto& r : t4) {
            std::size_t ws = r.comments - (r.with_system.empty() ? 0 : r.with_system[0]);
            std::size_t eo = r.comments - (r.experts_only.empty() ? 0 : r.experts_only[0]);
            appendf(tables,
                    "  note: %s raw shares: with system %zu/%zu = %.2f%%, experts only "
                    "%zu/%zu = %.2f%%\n",
                    r.expert_id.c_str(), ws, r.comments, 100.0 * r.frac_with_system, eo,
                    r.comments, 100.0 * r.frac_experts_only);
        }
        stats["indirect_correctness"] = std::move(rows);
    }

    // Share of the jointly-correct system comments each expert also raised.
    // Mention rows for comments outside that population are ignored.
    std::optional<IndirectCompletenessResult> t5;
    if (have_mentions) {
        std::map<std::string, std::set<std::string>> by_expert;
        for (const auto& [cid, experts] : mentions.experts_by_comment)
            for (const auto& ex : experts) by_expert[ex]; // keep zero-mention experts visible
        for (const auto& [cid, experts] : mentions.experts_by_comment) {
            if (!jointly.count(cid)) continue;
            for (const auto& ex : experts) by_expert[ex].insert(cid);
        }
        tables += "\njointly correct comments also raised by each expert\n";
        json j = json::object();
        try {
            t5 = indirect_completeness(jointly, by_expert);
            appendf(tables, "  population: %zu comments both experts accepted\n",
                    t5->jointly_correct);
            json rows = json::array();
            for (const auto& r : t5->rows) {
                appendf(tables, "  %-8s  %5zu  %3d%%\n", r.expert_id.c_str(), r.mentioned,
                        r.pct);
                json row = json::object();
                row["expert_id"] = r.expert_id;
                row["mentioned"] = r.mentioned;
                row["frac"] = r.frac;
                row["pct"] = r.pct;
                rows.push_back(std::move(row));
            }
            appendf(tables, "  combined: %zu/%zu (%d%%)\n", t5->mentioned_total,
                    t5->jointly_correct * t5->rows.size(), t5->combined_pct);
            j["rows"] = std::move(rows);
            j["jointly_correct"] = t5->jointly_correct;
            j["mentioned_total"] = t5->mentioned_total;
            j["combined_frac"] = t5->combined_frac;
            j["combined_pct"] = t5->combined_pct;
        } catch (const std::invalid_argument& e) {
            appendf(tables, "  not computable (%s)\n", e.what());
            j["error"] = e.what();
        }
        stats["indirect_completeness"] = std::move(j);
    }

    // Closing profile: completeness and correctness per agent with their
    // harmonic mean. The system's completeness covers issues raised by at
    // least two experts; its correctness is the jointly-accepted share of
    // paired verdicts. Expert rows reuse the two indirect tables.
    if (!t4.empty() && t5 && !t5->rows.empty()) {
        std::vector<std::tuple<std::string, double, double>> profile;
        int sys_level = std::min(2, a.n_experts);
        double sys_comp = comp[static_cast<std::size_t>(sys_level - 1)].cumulative_frac;
        double sys_corr =
            total_pairs ? static_cast<double>(jointly.size()) / total_pairs : 0.0;
        profile.emplace_back("system", sys_comp, sys_corr);
        std::map<std::string, const IndirectCorrectnessRow*> t4_by_id;
        for (const auto& r : t4) t4_by_id[r.expert_id] = &r;
        for (const auto& r : t5->rows) {
            auto it = t4_by_id.find(r.expert_id);
            if (it == t4_by_id.end()) continue;
            profile.emplace_back(r.expert_id, r.frac, it->second->frac_with_system);
        }

        tables += "\nsummary of completeness and correctness\n";
        tables += "  agent     completeness  correctness  harmonic mean\n";
        json j = json::object();
        try {
            auto rows = summary_profile(profile);
            json out_rows = json::array();
            for (const auto& r : rows) {
                appendf(tables, "  %-8s  %12.2f  %11.2f  %13.2f\n", r.label.c_str(),
                        r.completeness, r.correctness, r.harmonic_mean_2dp);
                json row = json::object();
                row["label"] = r.label;
                row["completeness"] = r.completeness;
                row["correctness"] = r.correctness;
                row["harmonic_mean"] = r.harmonic_mean;
                row["harmonic_mean_2dp"] = r.harmonic_mean_2dp;
                out_rows.push_back(std::move(row));
            }
            tables += "  (system completeness covers issues raised by at least two experts; "
                      "expert correctness counts corroboration including the system)\n";
            j["rows"] = std::move(out_rows);
        } catch (const std::invalid_argument& e) {
            appendf(tables, "  not computable (%s)\n", e.what());
            j["error"] = e.what();
        }
        stats["summary"] = std::move(j);
    }

    // Optional system comment stream: tallied by type. The stream carries no
    // comment ids, so it cannot be joined against the verdicts.
    if (!a.stream_path.empty()) {
        auto text = slurp(a.stream_path);
        if (!text) return io_error("cannot read " + a.stream_path);
        std::map<std::string, std::size_t> by_type;
        std::size_t total = 0;
        std::istringstream in(*text);
        std::string line;
        std::size_t line_no = 0;
        while (std::getline(in, line)) {
            ++line_no;
            if (line.empty()) continue;
            try {
                auto c = parse_comment_line(line);
                ++by_type[to_string(c.comment_type)];
                ++total;
            } catch (const std::exception& e) {
                return domain_error(a.stream_path + ":" + std::to_string(line_no) + ": " +
                                    e.what());
            }
        }
        tables += "\nsystem comment stream\n";
        appendf(tables, "  comments: %zu", total);
        if (!by_type.empty()) {
            tables += " (";
            bool first = true;
            for (const auto& [type, n] : by_type) {
                if (!first) tables += ", ";
                appendf(tables, "%s %zu", type.c_str(), n);
                first = false;
            }
            tables += ")";
        }
        tables += "\n";
        json j = json::object();
        j["total"] = total;
        json bt = json::object();
        for (const auto& [type, n] : by_type) bt[type] = n;
        j["by_type"] = std::move(bt);
        stats["comment_stream"] = std::move(j);
    }

    std::cout << tables;
    if (!a.out_dir.empty()) {
        std::error_code ec;
        std::filesystem::create_directories(a.out_dir, ec);
        if (ec) return io_error("cannot create " + a.out_dir + ": " + ec.message());
        auto in_dir = [&](const char* name) {
            return (std::filesystem::path(a.out_dir) / name).string();
        };
        if (!spill(in_dir("tables.txt"), tables)) return io_error("cannot write tables.txt");
        if (!spill(in_dir("stats.json"), stats.dump(2) + "\n"))
            return io_error("cannot write stats.json");
    }
    return 0;
}

// ---------------------------------------------------------------------------
// report
// ---------------------------------------------------------------------------

int run_report(const std::string& stream_path, const std::string& out_path) {
    auto text = slurp(stream_path);
    if (!text) return io_error("cannot read " + stream_path);
    std::vector<CritiqueComment> comments;
    std::istringstream in(*text);
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty()) continue;
        try {
            comments.push_back(parse_comment_line(line));
        } catch (const std::exception& e) {
            return domain_error(stream_path + ":" + std::to_string(line_no) + ": " + e.what());
        }
    }
    auto report = render_patient_report(comments);
    if (out_path.empty()) {
        std::cout << report;
        return 0;
    }
    if (!spill(out_path, report)) return io_error("cannot write " + out_path);
    return 0;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"guideline compliance audit toolkit", "gcrit"};
    app.require_subcommand(1);

    auto* kb_cmd = app.add_subcommand("kb", "knowledge-base utilities");
    kb_cmd->require_subcommand(1);
    std::string kb_file;
    auto* kb_validate_cmd = kb_cmd->add_subcommand("validate", "parse and check a knowledge base");
    kb_validate_cmd->add_option("kb_file", kb_file, "knowledge-base JSON file")->required();

    IngestArgs ing;
    auto* ingest_cmd = app.add_subcommand("ingest", "build a cohort file from CSV exports");
    ingest_cmd->add_option("--kb", ing.kb_path, "knowledge-base JSON file")->required();
    ingest_cmd->add_option("--transactions", ing.transactions, "transaction CSV files")
        ->required();
    ingest_cmd->add_option("--demographics", ing.demographics, "demographics CSV files");
    ingest_cmd->add_option("--out", ing.out_path, "output cohort file (default: stdout)");
    ingest_cmd->add_flag("--lenient", ing.lenient,
                         "keep unmapped codes and only warn about malformed rows");

    std::string config_path;
    RunConfig flag_cfg;
    auto* analyze_cmd = app.add_subcommand("analyze", "audit a cohort against a knowledge base");
    analyze_cmd->add_option("--config", config_path, "JSON run-configuration file");
    analyze_cmd->add_option("--kb-path", flag_cfg.kb_path, "knowledge-base JSON file");
    analyze_cmd->add_option("--cohort-paths", flag_cfg.cohort_paths,
                            "cohort inputs (transaction CSV or saved cohort JSON)");
    analyze_cmd->add_option("--demographics-paths", flag_cfg.demographics_paths,
                            "demographics CSV files");
    analyze_cmd->add_option("--output-dir", flag_cfg.output_dir, "directory for run outputs");
    analyze_cmd->add_option("--adherence-threshold", flag_cfg.adherence_threshold,
                            "possession-ratio threshold in (0,1]");
    analyze_cmd->add_option("--drug-active-lapse-days", flag_cfg.drug_active_lapse_days,
                            "coverage lapse that ends a drug episode");
    analyze_cmd->add_flag("--strict-ingestion,!--no-strict-ingestion", flag_cfg.strict_ingestion,
                          "reject cohort CSVs with unmapped or malformed rows");
    analyze_cmd->add_option("--parallelism", flag_cfg.parallelism, "worker count (>= 1)");

    EvalArgs ev;
    auto* eval_cmd = app.add_subcommand("eval", "evaluation statistics from annotation files");
    eval_cmd->add_option("--support-table", ev.support_path, "issue support CSV")->required();
    eval_cmd->add_option("--verdicts", ev.verdicts_path, "per-comment verdict CSV")->required();
    eval_cmd->add_option("--expert-comments", ev.comments_path, "expert comment CSV");
    eval_cmd->add_option("--mentions", ev.mentions_path, "comment-mention CSV");
    eval_cmd->add_option("--comments", ev.stream_path, "system comment stream (tallied only)");
    eval_cmd->add_option("--out-dir", ev.out_dir, "directory for tables.txt and stats.json");
    eval_cmd->add_option("--sb-target", ev.sb_target,
                         "target agreement for the rater projection");
    eval_cmd->add_option("--experts", ev.n_experts, "panel size behind the support table");

    std::string rep_stream, rep_out;
    auto* report_cmd =
        app.add_subcommand("report", "render a comment stream as a per-patient report");
    report_cmd->add_option("--comments", rep_stream, "comment stream file")->required();
    report_cmd->add_option("--out", rep_out, "output file (default: stdout)");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        int code = app.exit(e);
        return code == 0 ? 0 : 2; // help and version land here with code 0
    }

    if (kb_validate_cmd->parsed()) return run_kb_validate(kb_file);
    if (ingest_cmd->parsed()) return run_ingest(ing);
    if (analyze_cmd->parsed()) return run_analyze(*analyze_cmd, config_path, flag_cfg);
    if (eval_cmd->parsed()) return run_eval(ev);
    if (report_cmd->parsed()) return run_report(rep_stream, rep_out);
    return 2;
}
