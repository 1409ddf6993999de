#include <catch2/catch_amalgamated.hpp>

#include <fstream>
#include <random>
#include <sstream>

#include <gcrit/digest.hpp>
#include <gcrit/runner.hpp>

#include "support/synth.hpp"

using namespace gcrit;

namespace {

const GuidelineKB& fixture_kb() {
    static GuidelineKB kb = [] {
        std::ifstream in(GCRIT_DATA_DIR "/kb_diabetes_excerpt.json");
        std::stringstream ss;
        ss << in.rdbuf();
        return parse_kb(ss.str());
    }();
    return kb;
}

Cohort synthetic_cohort(unsigned seed, int patients) {
    std::mt19937 rng(seed);
    Cohort cohort;
    synth::Profile profile;
    profile.max_txns = 40;
    for (int i = 0; i < patients; ++i) {
        auto rec = synth::random_patient(rng, "P" + std::to_string(1000 + i), profile);
        cohort.report.accepted += rec.transactions.size();
        cohort.patients.emplace(rec.patient_id, std::move(rec));
    }
    return cohort;
}

} // namespace

TEST_CASE("fnv-1a 64 matches the reference vectors") {
    CHECK(fnv1a64("") == 0xcbf29ce484222325ull);
    CHECK(fnv1a64("a") == 0xaf63dc4c8601ec8cull);
    CHECK(fnv1a64("foobar") == 0x85944171f73967e8ull);
    CHECK(fnv1a64_hex("") == "cbf29ce484222325");
    CHECK(fnv1a64_hex("foobar") == "85944171f73967e8");
}

TEST_CASE("run configuration is validated") {
    RunConfig ok;
    CHECK_NOTHROW(validate(ok));
    RunConfig bad = ok;
    bad.adherence_threshold = 0.0;
    CHECK_THROWS_AS(validate(bad), std::invalid_argument);
    bad = ok;
    bad.adherence_threshold = 1.5;
    CHECK_THROWS_AS(validate(bad), std::invalid_argument);
    bad = ok;
    bad.parallelism = 0;
    CHECK_THROWS_AS(validate(bad), std::invalid_argument);
    bad = ok;
    bad.drug_active_lapse_days = -1;
    CHECK_THROWS_AS(validate(bad), std::invalid_argument);
}

TEST_CASE("analysis output is independent of the worker count") {
    auto cohort = synthetic_cohort(555, 30);

    RunConfig seq;
    seq.parallelism = 1;
    RunConfig par;
    par.parallelism = 8;

    auto a = analyze_cohort(fixture_kb(), cohort, seq);
    auto b = analyze_cohort(fixture_kb(), cohort, par);

    CHECK(a.patients == 30);
    REQUIRE(!a.comments.empty());
    CHECK(a.comments == b.comments);
    CHECK(a.counts_by_type == b.counts_by_type);
    CHECK(render_comment_stream(a.comments) == render_comment_stream(b.comments));
    CHECK(render_patient_report(a.comments) == render_patient_report(b.comments));
}

TEST_CASE("analysis equals the per-patient critique in id order") {
    auto cohort = synthetic_cohort(777, 8);
    RunConfig cfg;
    cfg.adherence_threshold = 0.6;
    cfg.drug_active_lapse_days = 45;
    auto result = analyze_cohort(fixture_kb(), cohort, cfg);

    std::vector<CritiqueComment> expected;
    for (const auto& [id, rec] : cohort.patients) {
        CritiqueConfig ccfg{0.6, 45};
        for (auto& c : critique_patient(fixture_kb(), rec, ccfg)) expected.push_back(c);
    }
    CHECK(result.comments == expected);

    std::size_t counted = 0;
    for (const auto& [type, n] : result.counts_by_type) counted += n;
    CHECK(counted == result.comments.size());
}

TEST_CASE("comment stream renders one parseable line per comment") {
    auto cohort = synthetic_cohort(321, 5);
    auto result = analyze_cohort(fixture_kb(), cohort, RunConfig{});
    auto stream = render_comment_stream(result.comments);

    std::istringstream in(stream);
    std::string line;
    std::size_t parsed = 0;
    while (std::getline(in, line)) {
        auto c = parse_comment_line(line);
        const auto& want = result.comments.at(parsed);
        CHECK(c.patient_id == want.patient_id);
        CHECK(c.comment_type == want.comment_type);
        CHECK(c.event_date == want.event_date);
        CHECK(c.guideline_path == want.guideline_path);
        // scores travel at six decimals, so allow half a print step
        CHECK_THAT(c.score, Catch::Matchers::WithinAbs(want.score, 5e-7));
        CHECK(c.severity == want.severity);
        CHECK(c.explanation == want.explanation);
        CHECK(c.evidence == want.evidence);
        ++parsed;
    }
    CHECK(parsed == result.comments.size());
}

TEST_CASE("patient report groups comments under one heading per patient") {
    CritiqueComment a;
    a.patient_id = "P1";
    a.comment_type = CommentType::MissingAction;
    a.event_date = Date::from_ymd(2009, 1, 5);
    a.guideline_path = "monitoring/hba1c-periodic";
    a.explanation = "no hba1c recorded by 2009-02-04 for the action due 2009-01-05";
    CritiqueComment b = a;
    b.comment_type = CommentType::LateAction;
    b.event_date = Date::from_ymd(2009, 3, 1);
    b.score = 0.5;
    CritiqueComment c = a;
    c.patient_id = "P2";

    auto report = render_patient_report({a, b, c});
    CHECK_THAT(report, Catch::Matchers::ContainsSubstring("== P1 (2 comments)"));
    CHECK_THAT(report, Catch::Matchers::ContainsSubstring("== P2 (1 comment)"));
    CHECK_THAT(report, Catch::Matchers::ContainsSubstring("patients with comments: 2"));
    CHECK_THAT(report, Catch::Matchers::ContainsSubstring("LateAction 1"));
    CHECK_THAT(report, Catch::Matchers::ContainsSubstring("MissingAction 2"));
    CHECK_THAT(report, Catch::Matchers::ContainsSubstring("0.500000"));

    CHECK(render_patient_report({}) ==
          "compliance report\npatients with comments: 0\ncomments: 0\n");
}

TEST_CASE("manifest records inputs and tallies but never scheduling") {
    auto cohort = synthetic_cohort(99, 3);
    RunConfig cfg;
    cfg.kb_path = "kb.json";
    cfg.cohort_paths = {"a.csv", "b.csv"};
    cfg.output_dir = "out";
    cfg.parallelism = 8;
    auto result = analyze_cohort(fixture_kb(), cohort, cfg);

    auto manifest = render_manifest(
        cfg, {{"kb.json", fnv1a64_hex("x")}, {"a.csv", fnv1a64_hex("y")}}, cohort.report, result);

    CHECK(manifest.find("parallelism") == std::string::npos);
    CHECK_THAT(manifest, Catch::Matchers::ContainsSubstring("\"kb_path\": \"kb.json\""));
    CHECK_THAT(manifest, Catch::Matchers::ContainsSubstring("\"fnv1a64\""));
    CHECK_THAT(manifest, Catch::Matchers::ContainsSubstring("\"by_type\""));

    auto doc = json::parse(manifest);
    CHECK(doc.at("cohort").at("patients").get<std::size_t>() == 3);
    CHECK(doc.at("comments").at("total").get<std::size_t>() == result.comments.size());
    CHECK(doc.at("config").at("adherence_threshold").get<double>() == 0.8);

    RunConfig other = cfg;
    other.parallelism = 1;
    auto result2 = analyze_cohort(fixture_kb(), cohort, other);
    auto manifest2 = render_manifest(
        other, {{"kb.json", fnv1a64_hex("x")}, {"a.csv", fnv1a64_hex("y")}}, cohort.report,
        result2);
    CHECK(manifest == manifest2);
}

TEST_CASE("cohort merge combines records and tallies") {
    Cohort a, b;
    {
        PatientRecord r;
        r.patient_id = "P1";
        Transaction t;
        t.patient_id = "P1";
        t.date = Date::from_ymd(2010, 2, 1);
        t.kind = TxnKind::LabResult;
        t.code = "hba1c";
        t.concept_id = "hba1c";
        t.value = t.canonical_value = 7.0;
        r.transactions.push_back(t);
        r.horizon_start = r.horizon_end = t.date;
        a.patients.emplace("P1", std::move(r));
        a.report.accepted = 1;
    }
    {
        PatientRecord r;
        r.patient_id = "P1";
        r.birth_year = 1950;
        Transaction t;
        t.patient_id = "P1";
        t.date = Date::from_ymd(2010, 1, 1);
        t.kind = TxnKind::LabResult;
        t.code = "hba1c";
        t.concept_id = "hba1c";
        t.value = t.canonical_value = 6.5;
        r.transactions.push_back(t);
        r.horizon_start = r.horizon_end = t.date;
        b.patients.emplace("P1", std::move(r));
        PatientRecord r2;
        r2.patient_id = "P2";
        b.patients.emplace("P2", std::move(r2));
        b.report.accepted = 1;
        b.report.rejected.push_back({4, "bad row"});
    }

    merge_into(a, std::move(b));
    REQUIRE(a.patients.size() == 2);
    const auto& merged = a.patients.at("P1");
    REQUIRE(merged.transactions.size() == 2);
    CHECK(merged.transactions[0].date == Date::from_ymd(2010, 1, 1)); // re-sorted
    CHECK(merged.birth_year == 1950);
    CHECK(*merged.horizon_start == Date::from_ymd(2010, 1, 1));
    CHECK(*merged.horizon_end == Date::from_ymd(2010, 2, 1));
    CHECK(a.report.accepted == 2);
    CHECK(a.report.rejected.size() == 1);
}
