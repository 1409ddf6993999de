#include <catch2/catch_amalgamated.hpp>

#include <fstream>
#include <sstream>

#include <gcrit/patient.hpp>

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

Cohort ingest(const std::string& csv, IngestMode mode = IngestMode::Strict) {
    std::istringstream in(csv);
    return ingest_transactions(in, fixture_kb(), mode);
}

Date d(int y, int m, int day) { return Date::from_ymd(y, m, day); }

} // namespace

TEST_CASE("ingest accepts a well-formed transactions file") {
    auto cohort = ingest(
        "patient_id,date,kind,code,code_system,value,unit,days_supply\n"
        "p1,2010-02-01,lab_result,HBA1C,LOCAL,8.2,%,\n"
        "p1,2010-01-15,lab_result,GLU,LOCAL,140,mg/dL,\n"
        "p1,2010-01-15,med_purchase,A10BA02,ATC,,,30\n"
        "p1,2010-01-15,med_order,A10BA02,ATC,,,\n"
        "p2,2010-03-03,lab_result,GLU-MMOL,LOCAL,10,mmol/L,\n");

    REQUIRE(cohort.report.accepted == 5);
    CHECK(cohort.report.rejected.empty());
    REQUIRE(cohort.patients.size() == 2);

    const auto& p1 = cohort.patients.at("p1");
    REQUIRE(p1.transactions.size() == 4);
    // same-date rows order as lab_result < med_order < med_purchase
    CHECK(p1.transactions[0].code == "GLU");
    CHECK(p1.transactions[1].kind == TxnKind::MedOrder);
    CHECK(p1.transactions[2].kind == TxnKind::MedPurchase);
    CHECK(p1.transactions[3].code == "HBA1C");
    CHECK(p1.transactions[0].concept_id == "blood_glucose");
    CHECK(p1.transactions[1].concept_id == "metformin");
    CHECK(p1.horizon_start == d(2010, 1, 15));
    CHECK(p1.horizon_end == d(2010, 2, 1));

    // affine unit conversion into the canonical unit
    const auto& p2 = cohort.patients.at("p2");
    REQUIRE(p2.transactions.size() == 1);
    CHECK(p2.transactions[0].concept_id == "blood_glucose");
    CHECK(p2.transactions[0].canonical_value ==
          Catch::Approx(180.16).epsilon(1e-12));
}

TEST_CASE("ingest rejects malformed rows but keeps going") {
    auto cohort = ingest(
        "patient_id,date,kind,code,code_system,value,unit,days_supply\n"
        "p1,2010-13-01,lab_result,GLU,LOCAL,100,mg/dL,\n"   // bad month
        "p1,2010-01-01,observation,GLU,LOCAL,100,mg/dL,\n"  // bad kind
        "p1,2010-01-01,lab_result,GLU,LOCAL,100,mg/dL\n"    // 7 fields
        "p1,2010-01-02,lab_result,GLU,LOCAL,,mg/dL,\n"      // lab without value
        "p1,2010-01-02,lab_result,GLU,LOCAL,100,,\n"        // lab without unit
        "p1,2010-01-03,med_purchase,A10BA02,ATC,,,\n"       // purchase without supply
        "p1,2010-01-03,med_purchase,A10BA02,ATC,,,0\n"      // non-positive supply
        "p1,2010-01-04,med_order,A10BA02,ATC,7,,\n"         // order with value
        "p1,2010-01-05,lab_result,GLU,LOCAL,inf,mg/dL,\n"   // non-finite value
        ",2010-01-06,lab_result,GLU,LOCAL,100,mg/dL,\n"     // empty patient
        "p1,2010-01-07,lab_result,GLU,LOCAL,115,mg/dL,\n"); // fine

    CHECK(cohort.report.accepted == 1);
    REQUIRE(cohort.report.rejected.size() == 10);
    // line numbers are physical file lines (header is line 1)
    CHECK(cohort.report.rejected[0].line_no == 2);
    CHECK_THAT(cohort.report.rejected[0].reason,
               Catch::Matchers::ContainsSubstring("2010-13-01"));
    CHECK_THAT(cohort.report.rejected[1].reason,
               Catch::Matchers::ContainsSubstring("observation"));
    CHECK_THAT(cohort.report.rejected[2].reason,
               Catch::Matchers::ContainsSubstring("8 fields"));
    CHECK_THAT(cohort.report.rejected[5].reason,
               Catch::Matchers::ContainsSubstring("days_supply"));
    CHECK(cohort.patients.at("p1").transactions.size() == 1);
}

TEST_CASE("strict mode rejects unmapped codes, lenient retains them") {
    std::string csv =
        "patient_id,date,kind,code,code_system,value,unit,days_supply\n"
        "p1,2010-01-01,lab_result,XYZ,LOCAL,5,mg/dL,\n"
        "p1,2010-01-02,lab_result,GLU,LOCAL,100,mg/dL,\n";

    auto strict = ingest(csv, IngestMode::Strict);
    CHECK(strict.report.accepted == 1);
    REQUIRE(strict.report.rejected.size() == 1);
    CHECK_THAT(strict.report.rejected[0].reason,
               Catch::Matchers::ContainsSubstring("unmapped code \"LOCAL:XYZ\""));

    auto lenient = ingest(csv, IngestMode::Lenient);
    CHECK(lenient.report.accepted == 2);
    CHECK(lenient.report.rejected.empty());
    const auto& txns = lenient.patients.at("p1").transactions;
    CHECK(txns[0].concept_id.empty());
    CHECK(!txns[0].canonical_value.has_value());
    CHECK(txns[1].concept_id == "blood_glucose");
}

TEST_CASE("ingest requires the exact transactions header") {
    std::istringstream in("patient,date,kind\np1,2010-01-01,lab_result\n");
    CHECK_THROWS_AS(ingest_transactions(in, fixture_kb(), IngestMode::Strict),
                    std::runtime_error);
}

TEST_CASE("ingest is deterministic") {
    std::string csv =
        "patient_id,date,kind,code,code_system,value,unit,days_supply\n"
        "p2,2010-05-01,lab_result,GLU,LOCAL,100,mg/dL,\n"
        "p1,2010-01-01,med_purchase,A10BA02,ATC,,,90\n"
        "p1,2010-01-01,lab_result,HBA1C,LOCAL,7.5,%,\n";
    auto a = ingest(csv);
    auto b = ingest(csv);
    CHECK(a == b);
    CHECK(save_cohort(a) == save_cohort(b));
}

TEST_CASE("demographics merge fills gender and birth year") {
    auto cohort = ingest(
        "patient_id,date,kind,code,code_system,value,unit,days_supply\n"
        "p1,2010-01-01,lab_result,GLU,LOCAL,100,mg/dL,\n");

    std::istringstream demo(
        "patient_id,gender,birth_year\n"
        "p1,M,1951\n"
        "p2,F,1980\n"       // demographics-only patient
        "p3,X,1970\n"       // bad gender
        "p4,unknown,1700\n" // bad year
        "p5,unknown,1960\n");
    auto rejected = apply_demographics(cohort, demo);

    REQUIRE(rejected.size() == 2);
    CHECK(rejected[0].line_no == 4);
    CHECK(rejected[1].line_no == 5);

    CHECK(cohort.patients.at("p1").gender == Gender::M);
    CHECK(cohort.patients.at("p1").birth_year == 1951);
    const auto& p2 = cohort.patients.at("p2");
    CHECK(p2.gender == Gender::F);
    CHECK(p2.transactions.empty());
    CHECK(!p2.horizon_start.has_value());
    CHECK(cohort.patients.at("p5").birth_year == 1960);
}

TEST_CASE("series query returns canonical values inside the window") {
    auto cohort = ingest(
        "patient_id,date,kind,code,code_system,value,unit,days_supply\n"
        "p1,2010-01-01,lab_result,GLU,LOCAL,100,mg/dL,\n"
        "p1,2010-02-01,lab_result,GLU-MMOL,LOCAL,10,mmol/L,\n"
        "p1,2010-03-01,lab_result,GLU,LOCAL,120,mg/dL,\n"
        "p1,2010-02-15,lab_result,HBA1C,LOCAL,8,%,\n");
    const auto& rec = cohort.patients.at("p1");

    auto all = series_query(rec, fixture_kb(), "blood_glucose", d(2010, 1, 1), d(2010, 3, 1));
    REQUIRE(all.size() == 3); // window bounds are inclusive
    CHECK(all[0].second == 100);
    CHECK(all[1].second == Catch::Approx(180.16));
    CHECK(all[2].first == d(2010, 3, 1));

    auto mid = series_query(rec, fixture_kb(), "blood_glucose", d(2010, 1, 2), d(2010, 2, 28));
    REQUIRE(mid.size() == 1);
    CHECK(mid[0].first == d(2010, 2, 1));

    CHECK_THROWS_AS(series_query(rec, fixture_kb(), "no_such", d(2010, 1, 1), d(2010, 3, 1)),
                    std::invalid_argument);
}

TEST_CASE("coverage segments merge overlapping and adjacent purchases") {
    auto run = [&](const std::string& rows) {
        auto cohort = ingest("patient_id,date,kind,code,code_system,value,unit,days_supply\n" + rows);
        return coverage_segments(cohort.patients.at("p1"), "metformin");
    };

    SECTION("disjoint purchases stay separate") {
        auto segs = run(
            "p1,2010-01-01,med_purchase,A10BA02,ATC,,,30\n"
            "p1,2010-02-15,med_purchase,A10BA02,ATC,,,30\n");
        REQUIRE(segs.size() == 2);
        CHECK(segs[0] == std::pair{d(2010, 1, 1), d(2010, 1, 31)});
        CHECK(segs[1] == std::pair{d(2010, 2, 15), d(2010, 3, 17)});
    }
    SECTION("adjacent purchases fuse") {
        auto segs = run(
            "p1,2010-01-01,med_purchase,A10BA02,ATC,,,30\n"
            "p1,2010-01-31,med_purchase,A10BA02,ATC,,,20\n");
        REQUIRE(segs.size() == 1);
        CHECK(segs[0] == std::pair{d(2010, 1, 1), d(2010, 2, 20)});
    }
    SECTION("overlapping purchases extend the tail") {
        auto segs = run(
            "p1,2010-01-01,med_purchase,A10BA02,ATC,,,30\n"
            "p1,2010-01-16,med_purchase,A10BA02,ATC,,,30\n");
        REQUIRE(segs.size() == 1);
        CHECK(segs[0] == std::pair{d(2010, 1, 1), d(2010, 2, 15)});
    }
    SECTION("orders do not contribute coverage") {
        auto segs = run("p1,2010-01-01,med_order,A10BA02,ATC,,,\n");
        CHECK(segs.empty());
    }
}

TEST_CASE("cohort save/load round-trips bit-exactly") {
    auto cohort = ingest(
        "patient_id,date,kind,code,code_system,value,unit,days_supply\n"
        "p1,2010-01-01,lab_result,GLU,LOCAL,99.5,mg/dL,\n"
        "p1,2010-04-01,med_purchase,A10BA02,ATC,,,30\n"
        "p2,2011-06-07,lab_result,\"GLU\",LOCAL,250,mg/dL,\n",
        IngestMode::Strict);
    std::istringstream demo("patient_id,gender,birth_year\np1,F,1949\n");
    apply_demographics(cohort, demo);

    std::string text = save_cohort(cohort);
    Cohort back = load_cohort(text);
    CHECK(back == cohort);
    CHECK(save_cohort(back) == text);
}
