#include <catch2/catch_amalgamated.hpp>

#include <fstream>
#include <sstream>

#include <gcrit/kb.hpp>

using namespace gcrit;

namespace {

std::string read_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    REQUIRE(in.good());
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

// Small but fully featured KB used across the parser tests.
const char* kMiniKb = R"({
  "meta": {"name": "mini", "version": "1", "scope_notes": ""},
  "concepts": [
    {"id": "blood_glucose", "kind": "raw-numeric", "canonical_unit": "mg/dL"},
    {"id": "hba1c", "kind": "raw-numeric", "canonical_unit": "%"},
    {"id": "insulin", "kind": "medication-class"}
  ],
  "abstractions": [
    {"id": "glycemia", "input_concept": "blood_glucose", "max_gap": "30d",
     "bins": [
       {"lower": "-inf", "upper": 70, "state": "Hypoglycemia"},
       {"lower": 70, "upper": 180, "state": "Normoglycemia"},
       {"lower": 180, "upper": "+inf", "state": "Hyperglycemia"}
     ]}
  ],
  "mappings": [
    {"source_system": "LOCAL", "source_code_or_prefix": "GLU", "target_concept": "blood_glucose"},
    {"source_system": "LOCAL", "source_code_or_prefix": "GLU-SER", "target_concept": "blood_glucose",
     "unit_factor": 18.016},
    {"source_system": "ATC", "source_code_or_prefix": "A10B", "target_concept": "insulin"},
    {"source_system": "ATC", "source_code_or_prefix": "A10BA02", "target_concept": "insulin"}
  ],
  "monitoring": [
    {"id": "hba1c-monitoring", "action_concept": "hba1c", "period": "90d",
     "latest_start_offset": "90d", "grace": "30d", "severity": "important",
     "applicability": {"kind": "record-exists", "concept": "insulin"}}
  ],
  "drug_steps": [
    {"id": "initiate-insulin-therapy", "intention_label": "insulin-therapy",
     "drug_mappings": ["ATC:A10B"],
     "indication": {"kind": "and", "args": [
        {"kind": "latest-value-compare", "concept": "hba1c", "op": ">", "threshold": 10, "lookback": "180d"},
        {"kind": "record-absent", "concept": "insulin"}
     ]},
     "expected_within": "14d", "grace": "14d", "severity": "important"}
  ]
})";

} // namespace

TEST_CASE("kb parses a complete document") {
    GuidelineKB kb = parse_kb(kMiniKb);
    CHECK(kb.meta.name == "mini");
    REQUIRE(kb.concepts.size() == 3);
    CHECK(kb.concepts[0].canonical_unit == "mg/dL");
    CHECK(kb.concepts[2].kind == ConceptKind::MedicationClass);

    REQUIRE(kb.abstractions.size() == 1);
    const auto& a = kb.abstractions[0];
    CHECK(a.max_gap_days == 30);
    REQUIRE(a.bins.size() == 3);
    CHECK(a.bins[0].lower == -std::numeric_limits<double>::infinity());
    CHECK(a.bins[2].upper == std::numeric_limits<double>::infinity());
    CHECK(a.bins[1].state == "Normoglycemia");

    REQUIRE(kb.monitoring.size() == 1);
    CHECK(kb.monitoring[0].period_days == 90);
    CHECK_FALSE(kb.monitoring[0].earliest_start_offset_days.has_value());
    CHECK(kb.monitoring[0].applicability.kind == Condition::Kind::RecordExists);

    REQUIRE(kb.drug_steps.size() == 1);
    const auto& step = kb.drug_steps[0];
    CHECK(step.expected_within_days == 14);
    REQUIRE(step.indication.children.size() == 2);
    CHECK(step.indication.children[0].lookback_days == 180);
    CHECK_FALSE(step.indication.children[1].lookback_days.has_value());
    // absent contraindication defaults to the constant false
    CHECK(step.contraindication.kind == Condition::Kind::Or);
    CHECK(step.contraindication.children.empty());

    CHECK(validate_kb(kb).empty());
}

TEST_CASE("kb serialization round-trips") {
    GuidelineKB kb = parse_kb(kMiniKb);
    std::string text = serialize_kb(kb);
    GuidelineKB again = parse_kb(text);
    CHECK(again == kb);
    // serialization is a fixed point
    CHECK(serialize_kb(again) == text);
}

TEST_CASE("kb syntax errors carry a position") {
    try {
        parse_kb("{\"concepts\": [,]}");
        FAIL("expected KbSyntaxError");
    } catch (const KbSyntaxError& e) {
        CHECK(std::string(e.what()).find("byte") != std::string::npos);
    }
}

TEST_CASE("kb schema errors name the offending field") {
    // unknown field
    try {
        parse_kb(R"({"concepts": [{"id": "x", "kind": "raw-numeric", "unit": "mg"}]})");
        FAIL("expected KbSchemaError");
    } catch (const KbSchemaError& e) {
        std::string msg = e.what();
        CHECK(msg.find("concepts[0]") != std::string::npos);
        CHECK(msg.find("unit") != std::string::npos);
    }
    // wrong type
    CHECK_THROWS_AS(parse_kb(R"({"concepts": [{"id": 5, "kind": "raw-numeric"}]})"),
                    KbSchemaError);
    // malformed duration
    CHECK_THROWS_AS(
        parse_kb(R"({"abstractions": [{"id": "a", "input_concept": "x", "bins": [], "max_gap": "30"}]})"),
        KbSchemaError);
    CHECK_THROWS_AS(parse_kb(R"([1,2,3])"), KbSchemaError);
}

TEST_CASE("kb validation rejects dangling references by name") {
    // monitoring spec pointing at a concept that is not defined
    const char* doc = R"({
      "concepts": [{"id": "insulin", "kind": "medication-class"}],
      "monitoring": [
        {"id": "m", "action_concept": "hba1c", "period": "90d",
         "latest_start_offset": "90d", "grace": "30d", "severity": "important"}
      ]
    })";
    try {
        parse_kb(doc);
        FAIL("expected KbValidationError");
    } catch (const KbValidationError& e) {
        std::string msg = e.what();
        CHECK(msg.find("hba1c") != std::string::npos);
        CHECK(msg.find("monitoring[0]") != std::string::npos);
    }
}

TEST_CASE("kb validation flags bin gaps and overlaps") {
    GuidelineKB kb = parse_kb(kMiniKb);
    auto& bins = kb.abstractions[0].bins;

    SECTION("gap") {
        bins[1].lower = 80; // [70,180) became [80,180): hole at [70,80)
        auto diags = validate_kb(kb);
        REQUIRE_FALSE(diags.empty());
        CHECK(diags[0].location == "abstractions[0]");
        CHECK(diags[0].message.find("gap") != std::string::npos);
    }
    SECTION("overlap") {
        bins[1].lower = 60;
        auto diags = validate_kb(kb);
        REQUIRE_FALSE(diags.empty());
        CHECK(diags[0].message.find("overlap") != std::string::npos);
    }
    SECTION("must span the whole line") {
        bins.erase(bins.begin());
        auto diags = validate_kb(kb);
        REQUIRE_FALSE(diags.empty());
        CHECK(diags[0].message.find("-inf") != std::string::npos);
    }
}

TEST_CASE("kb validation orders diagnostics by document position") {
    GuidelineKB kb = parse_kb(kMiniKb);
    kb.concepts[0].canonical_unit.clear();         // concepts[0]
    kb.monitoring[0].period_days = 0;              // monitoring[0]
    kb.drug_steps[0].grace_days = -1;              // drug_steps[0]
    auto diags = validate_kb(kb);
    REQUIRE(diags.size() == 3);
    CHECK(diags[0].location == "concepts[0]");
    CHECK(diags[1].location == "monitoring[0]");
    CHECK(diags[2].location == "drug_steps[0]");
}

TEST_CASE("kb validation catches duplicate ids and state typos") {
    GuidelineKB kb = parse_kb(kMiniKb);
    SECTION("duplicate concept") {
        kb.concepts.push_back(kb.concepts[0]);
        auto diags = validate_kb(kb);
        REQUIRE_FALSE(diags.empty());
        CHECK(diags[0].message.find("duplicate") != std::string::npos);
    }
    SECTION("state label not in the abstraction") {
        Condition c;
        c.kind = Condition::Kind::StateHolds;
        c.ref_id = "glycemia";
        c.state_label = "Hperglycemia";
        kb.monitoring[0].applicability = c;
        auto diags = validate_kb(kb);
        REQUIRE_FALSE(diags.empty());
        CHECK(diags[0].message.find("Hperglycemia") != std::string::npos);
    }
    SECTION("drug step must reference medication mappings") {
        kb.drug_steps[0].drug_mappings = {"LOCAL:GLU"};
        auto diags = validate_kb(kb);
        REQUIRE_FALSE(diags.empty());
        CHECK(diags[0].message.find("medication-class") != std::string::npos);
    }
    SECTION("earliest after latest") {
        kb.monitoring[0].earliest_start_offset_days = 120;
        auto diags = validate_kb(kb);
        REQUIRE_FALSE(diags.empty());
        CHECK(diags[0].message.find("earliest_start_offset") != std::string::npos);
    }
}

TEST_CASE("term resolution uses exact LOCAL codes") {
    GuidelineKB kb = parse_kb(kMiniKb);
    auto r = resolve_term(kb, CodeSystem::Local, "GLU", "mg/dL");
    REQUIRE(r.has_value());
    CHECK(r->target->id == "blood_glucose");
    CHECK(r->factor == 1.0);
    CHECK_FALSE(resolve_term(kb, CodeSystem::Local, "GL", "").has_value());
    CHECK_FALSE(resolve_term(kb, CodeSystem::Local, "GLUX", "").has_value());
}

TEST_CASE("term resolution converts units through the mapping") {
    GuidelineKB kb = parse_kb(kMiniKb);
    // mmol/L glucose source: canonical mg/dL = mmol/L * 18.016
    auto r = resolve_term(kb, CodeSystem::Local, "GLU-SER", "mmol/L");
    REQUIRE(r.has_value());
    CHECK(10.0 * r->factor + r->offset == Catch::Approx(180.16));
}

TEST_CASE("term resolution picks the longest ATC prefix") {
    GuidelineKB kb = parse_kb(kMiniKb);
    auto broad = resolve_term(kb, CodeSystem::Atc, "A10BB01", "");
    REQUIRE(broad.has_value());
    CHECK(broad->target->id == "insulin");

    // both A10B and A10BA02 match A10BA02; the longer one wins
    GuidelineKB kb2 = kb;
    kb2.concepts.push_back({"metformin", ConceptKind::MedicationClass, "", ""});
    for (auto& m : kb2.mappings)
        if (m.source_code_or_prefix == "A10BA02") m.target_concept = "metformin";
    auto exact = resolve_term(kb2, CodeSystem::Atc, "A10BA02", "");
    REQUIRE(exact.has_value());
    CHECK(exact->target->id == "metformin");

    CHECK_FALSE(resolve_term(kb, CodeSystem::Atc, "C07AB02", "").has_value());
    // prefix matching is one-directional: a KB prefix longer than the code
    CHECK_FALSE(resolve_term(kb, CodeSystem::Atc, "A10", "").has_value());
}

TEST_CASE("bundled knowledge bases parse clean") {
    for (const char* name : {"/kb_minimal.json", "/kb_diabetes_excerpt.json"}) {
        GuidelineKB kb = parse_kb(read_file(std::string(GCRIT_DATA_DIR) + name));
        CHECK(validate_kb(kb).empty());
        CHECK(parse_kb(serialize_kb(kb)) == kb);
    }
}
