#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

namespace gcrit {

using json = nlohmann::ordered_json;

class KbError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// Malformed document text (not valid JSON).
class KbSyntaxError : public KbError {
public:
    using KbError::KbError;
};

// Structurally valid document that does not match the KB schema:
// unknown field, missing field, wrong type, malformed duration.
class KbSchemaError : public KbError {
public:
    using KbError::KbError;
};

// Schema-valid document whose content violates KB invariants:
// dangling references, bin gaps/overlaps, negative durations.
class KbValidationError : public KbError {
public:
    using KbError::KbError;
};

enum class ConceptKind { RawNumeric, RawCategorical, MedicationClass, AbstractState };
enum class Severity { Important, LessImportant };
enum class CodeSystem { Local, Atc };
enum class CompareOp { Lt, Le, Gt, Ge, Eq };

struct ConceptDef {
    std::string id;
    ConceptKind kind = ConceptKind::RawNumeric;
    std::string canonical_unit; // empty for non-numeric concepts
    std::string description;

    bool operator==(const ConceptDef&) const = default;
};

// One state bin: [lower, upper) with +-infinity at the edges.
struct AbstractionBin {
    double lower = 0;
    double upper = 0;
    std::string state;

    bool operator==(const AbstractionBin&) const = default;
};

struct AbstractionRule {
    std::string id;
    std::string input_concept;
    std::vector<AbstractionBin> bins;
    int max_gap_days = 0;

    bool operator==(const AbstractionRule&) const = default;
};

struct TermMapping {
    CodeSystem source_system = CodeSystem::Local;
    std::string source_code_or_prefix;
    std::string target_concept;
    double unit_factor = 1.0;  // canonical = raw * factor + offset
    double unit_offset = 0.0;

    bool operator==(const TermMapping&) const = default;

    std::string ref() const {
        return (source_system == CodeSystem::Local ? "LOCAL:" : "ATC:") + source_code_or_prefix;
    }
};

// Boolean expression tree over patient-data atoms, evaluated at a single
// date. Atom payload fields are used according to `kind`; combinator nodes
// use `children` only.
struct Condition {
    enum class Kind {
        StateHolds,         // abstraction `ref_id` is in state `state_label` at the date
        LatestValueCompare, // latest value of concept `ref_id` within lookback vs threshold
        RecordExists,       // any transaction of concept `ref_id` within lookback
        RecordAbsent,       // negation of RecordExists
        AgeCompare,         // patient age in years vs threshold
        And,                // empty And is the constant true
        Or,                 // empty Or is the constant false
        Not
    };

    Kind kind = Kind::And;
    std::string ref_id;
    std::string state_label;
    CompareOp op = CompareOp::Lt;
    double threshold = 0;
    std::optional<int> lookback_days; // nullopt = unbounded lookback
    std::vector<Condition> children;

    bool operator==(const Condition&) const = default;

    static Condition always() { return Condition{}; }
};

struct MonitoringSpec {
    std::string id;
    std::string action_concept;
    int period_days = 0;                         // re-anchor stride after a missed due date
    std::optional<int> earliest_start_offset_days; // absent: early actions are never flagged
    int latest_start_offset_days = 0;            // due offset from the anchor
    int grace_days = 0;
    Severity severity = Severity::Important;
    Condition applicability;

    bool operator==(const MonitoringSpec&) const = default;
};

struct DrugStep {
    std::string id;
    std::string intention_label;
    std::vector<std::string> drug_mappings; // refs of the form "ATC:A10B" / "LOCAL:code"
    Condition indication;
    Condition contraindication;
    int expected_within_days = 0; // window from indication onset to the expected action
    int grace_days = 0;
    Severity severity = Severity::Important;

    bool operator==(const DrugStep&) const = default;
};

struct KbMeta {
    std::string name;
    std::string version;
    std::string scope_notes;

    bool operator==(const KbMeta&) const = default;
};

struct GuidelineKB {
    KbMeta meta;
    std::vector<ConceptDef> concepts;
    std::vector<AbstractionRule> abstractions;
    std::vector<TermMapping> mappings;
    std::vector<MonitoringSpec> monitoring;
    std::vector<DrugStep> drug_steps;

    bool operator==(const GuidelineKB&) const = default;

    const ConceptDef* find_concept(std::string_view id) const {
        for (const auto& c : concepts)
            if (c.id == id) return &c;
        return nullptr;
    }

    const AbstractionRule* find_abstraction(std::string_view id) const {
        for (const auto& a : abstractions)
            if (a.id == id) return &a;
        return nullptr;
    }

    const TermMapping* find_mapping(std::string_view ref) const {
        for (const auto& m : mappings)
            if (m.ref() == ref) return &m;
        return nullptr;
    }

    // Distinct drug concept ids a step may act through, in mapping order.
    std::vector<std::string> step_drug_concepts(const DrugStep& step) const {
        std::vector<std::string> out;
        for (const auto& ref : step.drug_mappings) {
            if (const auto* m = find_mapping(ref)) {
                if (std::find(out.begin(), out.end(), m->target_concept) == out.end())
                    out.push_back(m->target_concept);
            }
        }
        return out;
    }
};

struct Diagnostic {
    enum class Level { Error, Warning };
    Level level = Level::Error;
    std::string location; // dotted path into the document, e.g. "monitoring[0].action_concept"
    std::string message;

    bool operator==(const Diagnostic&) const = default;
};

inline std::string to_string(Severity s) {
    return s == Severity::Important ? "important" : "less-important";
}

inline std::string to_string(CodeSystem s) {
    return s == CodeSystem::Local ? "LOCAL" : "ATC";
}

inline std::string to_string(CompareOp op) {
    switch (op) {
        case CompareOp::Lt: return "<";
        case CompareOp::Le: return "<=";
        case CompareOp::Gt: return ">";
        case CompareOp::Ge: return ">=";
        case CompareOp::Eq: return "=";
    }
    return "?";
}

inline std::string to_string(ConceptKind k) {
    switch (k) {
        case ConceptKind::RawNumeric: return "raw-numeric";
        case ConceptKind::RawCategorical: return "raw-categorical";
        case ConceptKind::MedicationClass: return "medication-class";
        case ConceptKind::AbstractState: return "abstract-state";
    }
    return "?";
}

inline bool compare(double lhs, CompareOp op, double rhs) {
    switch (op) {
        case CompareOp::Lt: return lhs < rhs;
        case CompareOp::Le: return lhs <= rhs;
        case CompareOp::Gt: return lhs > rhs;
        case CompareOp::Ge: return lhs >= rhs;
        case CompareOp::Eq: return lhs == rhs;
    }
    return false;
}

namespace detail {

[[noreturn]] inline void schema_fail(const std::string& path, const std::string& what) {
    throw KbSchemaError("schema error at " + path + ": " + what);
}

inline void check_keys(const json& obj, const std::string& path,
                       std::initializer_list<std::string_view> allowed) {
    for (auto it = obj.begin(); it != obj.end(); ++it) {
        bool known = false;
        for (auto k : allowed)
            if (it.key() == k) { known = true; break; }
        if (!known) schema_fail(path, "unknown field \"" + it.key() + "\"");
    }
}

inline const json* opt_field(const json& obj, const char* key) {
    auto it = obj.find(key);
    return it == obj.end() ? nullptr : &*it;
}

inline const json& req_field(const json& obj, const std::string& path, const char* key) {
    auto it = obj.find(key);
    if (it == obj.end()) schema_fail(path, std::string("missing field \"") + key + "\"");
    return *it;
}

inline std::string get_string(const json& j, const std::string& path) {
    if (!j.is_string()) schema_fail(path, "expected string");
    return j.get<std::string>();
}

inline double get_number(const json& j, const std::string& path) {
    if (!j.is_number()) schema_fail(path, "expected number");
    return j.get<double>();
}

// Durations are written as whole days with a "d" suffix, e.g. "90d".
inline int parse_duration(const json& j, const std::string& path) {
    std::string s = get_string(j, path);
    if (s.size() < 2 || s.back() != 'd') schema_fail(path, "expected duration like \"90d\"");
    std::size_t i = 0;
    bool neg = false;
    if (s[0] == '-') { neg = true; i = 1; }
    if (s.size() - 1 == i) schema_fail(path, "expected duration like \"90d\"");
    long v = 0;
    for (; i + 1 < s.size(); ++i) {
        if (s[i] < '0' || s[i] > '9') schema_fail(path, "expected duration like \"90d\"");
        v = v * 10 + (s[i] - '0');
        if (v > 1000000) schema_fail(path, "duration out of range");
    }
    return neg ? static_cast<int>(-v) : static_cast<int>(v);
}

// Bin bounds are numbers or the literals "-inf" / "+inf".
inline double parse_bound(const json& j, const std::string& path) {
    if (j.is_number()) return j.get<double>();
    if (j.is_string()) {
        std::string s = j.get<std::string>();
        if (s == "-inf") return -std::numeric_limits<double>::infinity();
        if (s == "+inf") return std::numeric_limits<double>::infinity();
    }
    schema_fail(path, "expected number or \"-inf\"/\"+inf\"");
}

inline json bound_to_json(double v) {
    if (std::isinf(v)) return v > 0 ? json("+inf") : json("-inf");
    return json(v);
}

inline Severity parse_severity(const json& j, const std::string& path) {
    std::string s = get_string(j, path);
    if (s == "important") return Severity::Important;
    if (s == "less-important") return Severity::LessImportant;
    schema_fail(path, "expected \"important\" or \"less-important\"");
}

inline CodeSystem parse_code_system(const json& j, const std::string& path) {
    std::string s = get_string(j, path);
    if (s == "LOCAL") return CodeSystem::Local;
    if (s == "ATC") return CodeSystem::Atc;
    schema_fail(path, "expected \"LOCAL\" or \"ATC\"");
}

inline CompareOp parse_op(const json& j, const std::string& path) {
    std::string s = get_string(j, path);
    if (s == "<") return CompareOp::Lt;
    if (s == "<=") return CompareOp::Le;
    if (s == ">") return CompareOp::Gt;
    if (s == ">=") return CompareOp::Ge;
    if (s == "=") return CompareOp::Eq;
    schema_fail(path, "expected one of <, <=, >, >=, =");
}

inline Condition parse_condition(const json& j, const std::string& path) {
    if (!j.is_object()) schema_fail(path, "expected condition object");
    std::string kind = get_string(req_field(j, path, "kind"), path + ".kind");
    Condition c;
    if (kind == "state-holds") {
        check_keys(j, path, {"kind", "abstraction", "state"});
        c.kind = Condition::Kind::StateHolds;
        c.ref_id = get_string(req_field(j, path, "abstraction"), path + ".abstraction");
        c.state_label = get_string(req_field(j, path, "state"), path + ".state");
    } else if (kind == "latest-value-compare") {
        check_keys(j, path, {"kind", "concept", "op", "threshold", "lookback"});
        c.kind = Condition::Kind::LatestValueCompare;
        c.ref_id = get_string(req_field(j, path, "concept"), path + ".concept");
        c.op = parse_op(req_field(j, path, "op"), path + ".op");
        c.threshold = get_number(req_field(j, path, "threshold"), path + ".threshold");
        if (const json* lb = opt_field(j, "lookback"))
            c.lookback_days = parse_duration(*lb, path + ".lookback");
    } else if (kind == "record-exists" || kind == "record-absent") {
        check_keys(j, path, {"kind", "concept", "lookback"});
        c.kind = kind == "record-exists" ? Condition::Kind::RecordExists
                                         : Condition::Kind::RecordAbsent;
        c.ref_id = get_string(req_field(j, path, "concept"), path + ".concept");
        if (const json* lb = opt_field(j, "lookback"))
            c.lookback_days = parse_duration(*lb, path + ".lookback");
    } else if (kind == "age-compare") {
        check_keys(j, path, {"kind", "op", "years"});
        c.kind = Condition::Kind::AgeCompare;
        c.op = parse_op(req_field(j, path, "op"), path + ".op");
        c.threshold = get_number(req_field(j, path, "years"), path + ".years");
    } else if (kind == "and" || kind == "or") {
        check_keys(j, path, {"kind", "args"});
        c.kind = kind == "and" ? Condition::Kind::And : Condition::Kind::Or;
        const json& args = req_field(j, path, "args");
        if (!args.is_array()) schema_fail(path + ".args", "expected array");
        for (std::size_t i = 0; i < args.size(); ++i)
            c.children.push_back(parse_condition(args[i], path + ".args[" + std::to_string(i) + "]"));
    } else if (kind == "not") {
        check_keys(j, path, {"kind", "arg"});
        c.kind = Condition::Kind::Not;
        c.children.push_back(parse_condition(req_field(j, path, "arg"), path + ".arg"));
    } else {
        schema_fail(path + ".kind", "unknown condition kind \"" + kind + "\"");
    }
    return c;
}

inline json condition_to_json(const Condition& c) {
    json j = json::object();
    switch (c.kind) {
        case Condition::Kind::StateHolds:
            j["kind"] = "state-holds";
            j["abstraction"] = c.ref_id;
            j["state"] = c.state_label;
            break;
        case Condition::Kind::LatestValueCompare:
            j["kind"] = "latest-value-compare";
            j["concept"] = c.ref_id;
            j["op"] = to_string(c.op);
            j["threshold"] = c.threshold;
            if (c.lookback_days) j["lookback"] = std::to_string(*c.lookback_days) + "d";
            break;
        case Condition::Kind::RecordExists:
        case Condition::Kind::RecordAbsent:
            j["kind"] = c.kind == Condition::Kind::RecordExists ? "record-exists" : "record-absent";
            j["concept"] = c.ref_id;
            if (c.lookback_days) j["lookback"] = std::to_string(*c.lookback_days) + "d";
            break;
        case Condition::Kind::AgeCompare:
            j["kind"] = "age-compare";
            j["op"] = to_string(c.op);
            j["years"] = c.threshold;
            break;
        case Condition::Kind::And:
        case Condition::Kind::Or: {
            j["kind"] = c.kind == Condition::Kind::And ? "and" : "or";
            json args = json::array();
            for (const auto& ch : c.children) args.push_back(condition_to_json(ch));
            j["args"] = std::move(args);
            break;
        }
        case Condition::Kind::Not:
            j["kind"] = "not";
            j["arg"] = condition_to_json(c.children.at(0));
            break;
    }
    return j;
}

// Collects dangling references inside a condition tree.
inline void validate_condition(const GuidelineKB& kb, const Condition& c,
                               const std::string& location, std::vector<Diagnostic>& out) {
    using K = Condition::Kind;
    switch (c.kind) {
        case K::StateHolds: {
            const auto* rule = kb.find_abstraction(c.ref_id);
            if (!rule) {
                out.push_back({Diagnostic::Level::Error, location,
                               "unknown abstraction \"" + c.ref_id + "\""});
            } else {
                bool found = false;
                for (const auto& b : rule->bins)
                    if (b.state == c.state_label) { found = true; break; }
                if (!found)
                    out.push_back({Diagnostic::Level::Error, location,
                                   "abstraction \"" + c.ref_id + "\" has no state \"" +
                                       c.state_label + "\""});
            }
            break;
        }
        case K::LatestValueCompare:
        case K::RecordExists:
        case K::RecordAbsent:
            if (!kb.find_concept(c.ref_id))
                out.push_back({Diagnostic::Level::Error, location,
                               "unknown concept \"" + c.ref_id + "\""});
            if (c.lookback_days && *c.lookback_days <= 0)
                out.push_back({Diagnostic::Level::Error, location, "lookback must be positive"});
            break;
        case K::AgeCompare:
            break;
        case K::And:
        case K::Or:
        case K::Not:
            for (const auto& ch : c.children) validate_condition(kb, ch, location, out);
            break;
    }
}

} // namespace detail

// Full invariant check. Returns an empty list iff the KB is well-formed;
// diagnostics come out in document order.
inline std::vector<Diagnostic> validate_kb(const GuidelineKB& kb) {
    using detail::validate_condition;
    std::vector<Diagnostic> out;
    auto err = [&](std::string loc, std::string msg) {
        out.push_back({Diagnostic::Level::Error, std::move(loc), std::move(msg)});
    };

    for (std::size_t i = 0; i < kb.concepts.size(); ++i) {
        const auto& c = kb.concepts[i];
        std::string loc = "concepts[" + std::to_string(i) + "]";
        if (c.id.empty()) err(loc, "empty concept id");
        for (std::size_t j = 0; j < i; ++j)
            if (kb.concepts[j].id == c.id) err(loc, "duplicate concept id \"" + c.id + "\"");
        if (c.kind == ConceptKind::RawNumeric && c.canonical_unit.empty())
            err(loc, "raw-numeric concept \"" + c.id + "\" needs a canonical_unit");
    }

    for (std::size_t i = 0; i < kb.abstractions.size(); ++i) {
        const auto& a = kb.abstractions[i];
        std::string loc = "abstractions[" + std::to_string(i) + "]";
        for (std::size_t j = 0; j < i; ++j)
            if (kb.abstractions[j].id == a.id) err(loc, "duplicate abstraction id \"" + a.id + "\"");
        const auto* input = kb.find_concept(a.input_concept);
        if (!input)
            err(loc, "unknown concept \"" + a.input_concept + "\"");
        else if (input->kind != ConceptKind::RawNumeric)
            err(loc, "input concept \"" + a.input_concept + "\" is not raw-numeric");
        if (a.max_gap_days <= 0) err(loc, "max_gap must be positive");
        if (a.bins.empty()) {
            err(loc, "bins must be non-empty");
        } else {
            auto fmt = [](double v) {
                if (std::isinf(v)) return std::string(v > 0 ? "+inf" : "-inf");
                char buf[32];
                std::snprintf(buf, sizeof(buf), "%g", v);
                return std::string(buf);
            };
            if (!std::isinf(a.bins.front().lower) || a.bins.front().lower > 0)
                err(loc, "bins must start at -inf");
            if (!std::isinf(a.bins.back().upper) || a.bins.back().upper < 0)
                err(loc, "bins must end at +inf");
            for (std::size_t b = 0; b < a.bins.size(); ++b) {
                if (!(a.bins[b].lower < a.bins[b].upper))
                    err(loc, "bin " + std::to_string(b) + " is empty");
                if (b > 0) {
                    double prev = a.bins[b - 1].upper, cur = a.bins[b].lower;
                    if (cur > prev)
                        err(loc, "gap [" + fmt(prev) + "," + fmt(cur) + ") between bins");
                    else if (cur < prev)
                        err(loc, "overlap [" + fmt(cur) + "," + fmt(prev) + ") between bins");
                }
            }
        }
    }

    for (std::size_t i = 0; i < kb.mappings.size(); ++i) {
        const auto& m = kb.mappings[i];
        std::string loc = "mappings[" + std::to_string(i) + "]";
        if (m.source_code_or_prefix.empty()) err(loc, "empty source code");
        if (!kb.find_concept(m.target_concept))
            err(loc, "unknown concept \"" + m.target_concept + "\"");
        if (m.unit_factor == 0) err(loc, "unit_factor must be non-zero");
        for (std::size_t j = 0; j < i; ++j) {
            const auto& p = kb.mappings[j];
            if (p.source_system == m.source_system &&
                p.source_code_or_prefix == m.source_code_or_prefix)
                err(loc, "duplicate mapping for " + m.ref());
        }
    }

    for (std::size_t i = 0; i < kb.monitoring.size(); ++i) {
        const auto& s = kb.monitoring[i];
        std::string loc = "monitoring[" + std::to_string(i) + "]";
        for (std::size_t j = 0; j < i; ++j)
            if (kb.monitoring[j].id == s.id) err(loc, "duplicate monitoring id \"" + s.id + "\"");
        if (!kb.find_concept(s.action_concept))
            err(loc, "unknown concept \"" + s.action_concept + "\"");
        if (s.period_days <= 0) err(loc, "period must be positive");
        if (s.latest_start_offset_days <= 0) err(loc, "latest_start_offset must be positive");
        if (s.grace_days < 0) err(loc, "grace must be non-negative");
        if (s.earliest_start_offset_days) {
            if (*s.earliest_start_offset_days < 0)
                err(loc, "earliest_start_offset must be non-negative");
            if (*s.earliest_start_offset_days > s.latest_start_offset_days)
                err(loc, "earliest_start_offset exceeds latest_start_offset");
        }
        validate_condition(kb, s.applicability, loc + ".applicability", out);
    }

    for (std::size_t i = 0; i < kb.drug_steps.size(); ++i) {
        const auto& s = kb.drug_steps[i];
        std::string loc = "drug_steps[" + std::to_string(i) + "]";
        for (std::size_t j = 0; j < i; ++j)
            if (kb.drug_steps[j].id == s.id) err(loc, "duplicate drug step id \"" + s.id + "\"");
        if (s.intention_label.empty()) err(loc, "empty intention_label");
        if (s.drug_mappings.empty()) err(loc, "drug_mappings must be non-empty");
        for (const auto& ref : s.drug_mappings) {
            const auto* m = kb.find_mapping(ref);
            if (!m) {
                err(loc, "unknown mapping ref \"" + ref + "\"");
            } else if (const auto* c = kb.find_concept(m->target_concept);
                       c && c->kind != ConceptKind::MedicationClass) {
                err(loc, "mapping \"" + ref + "\" does not target a medication-class concept");
            }
        }
        if (s.expected_within_days <= 0) err(loc, "expected_within must be positive");
        if (s.grace_days < 0) err(loc, "grace must be non-negative");
        validate_condition(kb, s.indication, loc + ".indication", out);
        validate_condition(kb, s.contraindication, loc + ".contraindication", out);
    }

    return out;
}

// Parses and fully validates a KB document. Throws KbSyntaxError /
// KbSchemaError / KbValidationError; on success the returned KB passes
// validate_kb with no diagnostics.
inline GuidelineKB parse_kb(std::string_view text) {
    using namespace detail;

    json doc;
    try {
        doc = json::parse(text);
    } catch (const json::parse_error& e) {
        throw KbSyntaxError("syntax error at byte " + std::to_string(e.byte) + ": " + e.what());
    }
    if (!doc.is_object()) throw KbSchemaError("schema error at $: expected top-level object");
    check_keys(doc, "$", {"meta", "concepts", "abstractions", "mappings", "monitoring", "drug_steps"});

    GuidelineKB kb;

    if (const json* meta = opt_field(doc, "meta")) {
        check_keys(*meta, "meta", {"name", "version", "scope_notes"});
        if (const json* v = opt_field(*meta, "name")) kb.meta.name = get_string(*v, "meta.name");
        if (const json* v = opt_field(*meta, "version")) kb.meta.version = get_string(*v, "meta.version");
        if (const json* v = opt_field(*meta, "scope_notes"))
            kb.meta.scope_notes = get_string(*v, "meta.scope_notes");
    }

    auto section = [&](const char* key) -> const json* {
        const json* s = opt_field(doc, key);
        if (s && !s->is_array()) schema_fail(key, "expected array");
        return s;
    };

    if (const json* arr = section("concepts")) {
        for (std::size_t i = 0; i < arr->size(); ++i) {
            std::string path = "concepts[" + std::to_string(i) + "]";
            const json& j = (*arr)[i];
            if (!j.is_object()) schema_fail(path, "expected object");
            check_keys(j, path, {"id", "kind", "canonical_unit", "description"});
            ConceptDef c;
            c.id = get_string(req_field(j, path, "id"), path + ".id");
            std::string kind = get_string(req_field(j, path, "kind"), path + ".kind");
            if (kind == "raw-numeric") c.kind = ConceptKind::RawNumeric;
            else if (kind == "raw-categorical") c.kind = ConceptKind::RawCategorical;
            else if (kind == "medication-class") c.kind = ConceptKind::MedicationClass;
            else if (kind == "abstract-state") c.kind = ConceptKind::AbstractState;
            else schema_fail(path + ".kind", "unknown concept kind \"" + kind + "\"");
            if (const json* v = opt_field(j, "canonical_unit"))
                c.canonical_unit = get_string(*v, path + ".canonical_unit");
            if (const json* v = opt_field(j, "description"))
                c.description = get_string(*v, path + ".description");
            kb.concepts.push_back(std::move(c));
        }
    }

    if (const json* arr = section("abstractions")) {
        for (std::size_t i = 0; i < arr->size(); ++i) {
            std::string path = "abstractions[" + std::to_string(i) + "]";
            const json& j = (*arr)[i];
            if (!j.is_object()) schema_fail(path, "expected object");
            check_keys(j, path, {"id", "input_concept", "bins", "max_gap"});
            AbstractionRule a;
            a.id = get_string(req_field(j, path, "id"), path + ".id");
            a.input_concept =
                get_string(req_field(j, path, "input_concept"), path + ".input_concept");
            a.max_gap_days = parse_duration(req_field(j, path, "max_gap"), path + ".max_gap");
            const json& bins = req_field(j, path, "bins");
            if (!bins.is_array()) schema_fail(path + ".bins", "expected array");
            for (std::size_t b = 0; b < bins.size(); ++b) {
                std::string bpath = path + ".bins[" + std::to_string(b) + "]";
                const json& bj = bins[b];
                if (!bj.is_object()) schema_fail(bpath, "expected object");
                check_keys(bj, bpath, {"lower", "upper", "state"});
                AbstractionBin bin;
                bin.lower = parse_bound(req_field(bj, bpath, "lower"), bpath + ".lower");
                bin.upper = parse_bound(req_field(bj, bpath, "upper"), bpath + ".upper");
                bin.state = get_string(req_field(bj, bpath, "state"), bpath + ".state");
                a.bins.push_back(std::move(bin));
            }
            kb.abstractions.push_back(std::move(a));
        }
    }

    if (const json* arr = section("mappings")) {
        for (std::size_t i = 0; i < arr->size(); ++i) {
            std::string path = "mappings[" + std::to_string(i) + "]";
            const json& j = (*arr)[i];
            if (!j.is_object()) schema_fail(path, "expected object");
            check_keys(j, path,
                       {"source_system", "source_code_or_prefix", "target_concept", "unit_factor",
                        "unit_offset"});
            TermMapping m;
            m.source_system =
                parse_code_system(req_field(j, path, "source_system"), path + ".source_system");
            m.source_code_or_prefix = get_string(req_field(j, path, "source_code_or_prefix"),
                                                 path + ".source_code_or_prefix");
            m.target_concept =
                get_string(req_field(j, path, "target_concept"), path + ".target_concept");
            if (const json* v = opt_field(j, "unit_factor"))
                m.unit_factor = get_number(*v, path + ".unit_factor");
            if (const json* v = opt_field(j, "unit_offset"))
                m.unit_offset = get_number(*v, path + ".unit_offset");
            kb.mappings.push_back(std::move(m));
        }
    }

    if (const json* arr = section("monitoring")) {
        for (std::size_t i = 0; i < arr->size(); ++i) {
            std::string path = "monitoring[" + std::to_string(i) + "]";
            const json& j = (*arr)[i];
            if (!j.is_object()) schema_fail(path, "expected object");
            check_keys(j, path,
                       {"id", "action_concept", "period", "earliest_start_offset",
                        "latest_start_offset", "grace", "severity", "applicability"});
            MonitoringSpec s;
            s.id = get_string(req_field(j, path, "id"), path + ".id");
            s.action_concept =
                get_string(req_field(j, path, "action_concept"), path + ".action_concept");
            s.period_days = parse_duration(req_field(j, path, "period"), path + ".period");
            if (const json* v = opt_field(j, "earliest_start_offset"))
                s.earliest_start_offset_days =
                    parse_duration(*v, path + ".earliest_start_offset");
            if (const json* v = opt_field(j, "latest_start_offset"))
                s.latest_start_offset_days = parse_duration(*v, path + ".latest_start_offset");
            else
                s.latest_start_offset_days = s.period_days;
            s.grace_days = parse_duration(req_field(j, path, "grace"), path + ".grace");
            s.severity = parse_severity(req_field(j, path, "severity"), path + ".severity");
            if (const json* v = opt_field(j, "applicability"))
                s.applicability = parse_condition(*v, path + ".applicability");
            kb.monitoring.push_back(std::move(s));
        }
    }

    if (const json* arr = section("drug_steps")) {
        for (std::size_t i = 0; i < arr->size(); ++i) {
            std::string path = "drug_steps[" + std::to_string(i) + "]";
            const json& j = (*arr)[i];
            if (!j.is_object()) schema_fail(path, "expected object");
            check_keys(j, path,
                       {"id", "intention_label", "drug_mappings", "indication", "contraindication",
                        "expected_within", "grace", "severity"});
            DrugStep s;
            s.id = get_string(req_field(j, path, "id"), path + ".id");
            s.intention_label =
                get_string(req_field(j, path, "intention_label"), path + ".intention_label");
            const json& refs = req_field(j, path, "drug_mappings");
            if (!refs.is_array()) schema_fail(path + ".drug_mappings", "expected array");
            for (std::size_t r = 0; r < refs.size(); ++r)
                s.drug_mappings.push_back(
                    get_string(refs[r], path + ".drug_mappings[" + std::to_string(r) + "]"));
            if (const json* v = opt_field(j, "indication"))
                s.indication = parse_condition(*v, path + ".indication");
            s.contraindication.kind = Condition::Kind::Or; // absent: never contraindicated
            if (const json* v = opt_field(j, "contraindication"))
                s.contraindication = parse_condition(*v, path + ".contraindication");
            s.expected_within_days =
                parse_duration(req_field(j, path, "expected_within"), path + ".expected_within");
            s.grace_days = parse_duration(req_field(j, path, "grace"), path + ".grace");
            s.severity = parse_severity(req_field(j, path, "severity"), path + ".severity");
            kb.drug_steps.push_back(std::move(s));
        }
    }

    auto diags = validate_kb(kb);
    bool has_error = false;
    std::string msg;
    for (const auto& d : diags) {
        if (d.level != Diagnostic::Level::Error) continue;
        has_error = true;
        if (!msg.empty()) msg += "; ";
        msg += d.location + ": " + d.message;
    }
    if (has_error) throw KbValidationError(msg);
    return kb;
}

// Canonical serialization; parse_kb(serialize_kb(kb)) == kb.
inline std::string serialize_kb(const GuidelineKB& kb) {
    using detail::bound_to_json;
    using detail::condition_to_json;
    json doc = json::object();

    json meta = json::object();
    meta["name"] = kb.meta.name;
    meta["version"] = kb.meta.version;
    meta["scope_notes"] = kb.meta.scope_notes;
    doc["meta"] = std::move(meta);

    json concepts = json::array();
    for (const auto& c : kb.concepts) {
        json j = json::object();
        j["id"] = c.id;
        j["kind"] = to_string(c.kind);
        j["canonical_unit"] = c.canonical_unit;
        j["description"] = c.description;
        concepts.push_back(std::move(j));
    }
    doc["concepts"] = std::move(concepts);

    json abstractions = json::array();
    for (const auto& a : kb.abstractions) {
        json j = json::object();
        j["id"] = a.id;
        j["input_concept"] = a.input_concept;
        json bins = json::array();
        for (const auto& b : a.bins) {
            json bj = json::object();
            bj["lower"] = bound_to_json(b.lower);
            bj["upper"] = bound_to_json(b.upper);
            bj["state"] = b.state;
            bins.push_back(std::move(bj));
        }
        j["bins"] = std::move(bins);
        j["max_gap"] = std::to_string(a.max_gap_days) + "d";
        abstractions.push_back(std::move(j));
    }
    doc["abstractions"] = std::move(abstractions);

    json mappings = json::array();
    for (const auto& m : kb.mappings) {
        json j = json::object();
        j["source_system"] = to_string(m.source_system);
        j["source_code_or_prefix"] = m.source_code_or_prefix;
        j["target_concept"] = m.target_concept;
        j["unit_factor"] = m.unit_factor;
        j["unit_offset"] = m.unit_offset;
        mappings.push_back(std::move(j));
    }
    doc["mappings"] = std::move(mappings);

    json monitoring = json::array();
    for (const auto& s : kb.monitoring) {
        json j = json::object();
        j["id"] = s.id;
        j["action_concept"] = s.action_concept;
        j["period"] = std::to_string(s.period_days) + "d";
        if (s.earliest_start_offset_days)
            j["earliest_start_offset"] = std::to_string(*s.earliest_start_offset_days) + "d";
        j["latest_start_offset"] = std::to_string(s.latest_start_offset_days) + "d";
        j["grace"] = std::to_string(s.grace_days) + "d";
        j["severity"] = to_string(s.severity);
        j["applicability"] = condition_to_json(s.applicability);
        monitoring.push_back(std::move(j));
    }
    doc["monitoring"] = std::move(monitoring);

    json steps = json::array();
    for (const auto& s : kb.drug_steps) {
        json j = json::object();
        j["id"] = s.id;
        j["intention_label"] = s.intention_label;
        j["drug_mappings"] = s.drug_mappings;
        j["indication"] = condition_to_json(s.indication);
        j["contraindication"] = condition_to_json(s.contraindication);
        j["expected_within"] = std::to_string(s.expected_within_days) + "d";
        j["grace"] = std::to_string(s.grace_days) + "d";
        j["severity"] = to_string(s.severity);
        steps.push_back(std::move(j));
    }
    doc["drug_steps"] = std::move(steps);

    return doc.dump(2) + "\n";
}

struct TermResolution {
    const ConceptDef* target = nullptr;
    double factor = 1.0;
    double offset = 0.0;
};

// Longest-prefix match for ATC codes, exact match for LOCAL codes. The raw
// unit string is advisory only: conversions are authored per source code.
inline std::optional<TermResolution> resolve_term(const GuidelineKB& kb, CodeSystem system,
                                                  std::string_view code,
                                                  std::string_view /*unit*/ = {}) {
    const TermMapping* best = nullptr;
    for (const auto& m : kb.mappings) {
        if (m.source_system != system) continue;
        if (system == CodeSystem::Local) {
            if (m.source_code_or_prefix == code) { best = &m; break; }
        } else {
            if (code.substr(0, m.source_code_or_prefix.size()) == m.source_code_or_prefix &&
                (!best || m.source_code_or_prefix.size() > best->source_code_or_prefix.size()))
                best = &m;
        }
    }
    if (!best) return std::nullopt;
    const ConceptDef* def = kb.find_concept(best->target_concept);
    if (!def) return std::nullopt;
    return TermResolution{def, best->unit_factor, best->unit_offset};
}

} // namespace gcrit
