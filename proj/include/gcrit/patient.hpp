#pragma once

#include <cmath>
#include <istream>
#include <map>
#include <optional>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include <gcrit/csv.hpp>
#include <gcrit/date.hpp>
#include <gcrit/kb.hpp>

namespace gcrit {

enum class TxnKind { LabResult, MedOrder, MedPurchase };
enum class Gender { M, F, Unknown };

inline std::string to_string(TxnKind k) {
    switch (k) {
        case TxnKind::LabResult: return "lab_result";
        case TxnKind::MedOrder: return "med_order";
        case TxnKind::MedPurchase: return "med_purchase";
    }
    return "?";
}

inline std::string to_string(Gender g) {
    switch (g) {
        case Gender::M: return "M";
        case Gender::F: return "F";
        case Gender::Unknown: return "unknown";
    }
    return "unknown";
}

struct Transaction {
    std::string patient_id;
    Date date;
    TxnKind kind = TxnKind::LabResult;
    std::string code;
    CodeSystem code_system = CodeSystem::Local;
    std::optional<double> value; // lab results only, as reported
    std::string unit;
    std::optional<int> days_supply; // med purchases only

    // Filled at ingestion: resolved concept id (empty when retained unmapped
    // in lenient mode) and the value converted to the concept's canonical unit.
    std::string concept_id;
    std::optional<double> canonical_value;

    bool operator==(const Transaction&) const = default;
};

struct PatientRecord {
    std::string patient_id;
    Gender gender = Gender::Unknown;
    int birth_year = 0; // 0 = unknown
    std::vector<Transaction> transactions; // sorted by (date, kind, code)
    std::optional<Date> horizon_start;     // min/max transaction dates
    std::optional<Date> horizon_end;

    bool operator==(const PatientRecord&) const = default;
};

struct RejectedRow {
    std::size_t line_no = 0;
    std::string reason;

    bool operator==(const RejectedRow&) const = default;
};

struct IngestReport {
    std::size_t accepted = 0;
    std::vector<RejectedRow> rejected;

    bool operator==(const IngestReport&) const = default;
};

struct Cohort {
    std::map<std::string, PatientRecord> patients; // keyed by patient_id
    IngestReport report;

    bool operator==(const Cohort&) const = default;
};

enum class IngestMode { Strict, Lenient };

namespace detail {

inline bool txn_before(const Transaction& a, const Transaction& b) {
    if (a.date != b.date) return a.date < b.date;
    std::string ak = gcrit::to_string(a.kind), bk = gcrit::to_string(b.kind);
    if (ak != bk) return ak < bk;
    return a.code < b.code;
}

inline std::optional<double> parse_double_field(const std::string& s) {
    if (s.empty()) return std::nullopt;
    try {
        std::size_t pos = 0;
        double v = std::stod(s, &pos);
        if (pos != s.size() || !std::isfinite(v)) return std::nullopt;
        return v;
    } catch (...) {
        return std::nullopt;
    }
}

inline std::optional<long> parse_int_field(const std::string& s) {
    if (s.empty()) return std::nullopt;
    try {
        std::size_t pos = 0;
        long v = std::stol(s, &pos);
        if (pos != s.size()) return std::nullopt;
        return v;
    } catch (...) {
        return std::nullopt;
    }
}

inline void finalize_record(PatientRecord& rec) {
    std::stable_sort(rec.transactions.begin(), rec.transactions.end(), txn_before);
    if (!rec.transactions.empty()) {
        rec.horizon_start = rec.transactions.front().date;
        Date last = rec.transactions.front().date;
        for (const auto& t : rec.transactions)
            if (t.date > last) last = t.date;
        rec.horizon_end = last;
    }
}

} // namespace detail

inline const char* kTransactionsHeader = "patient_id,date,kind,code,code_system,value,unit,days_supply";
inline const char* kDemographicsHeader = "patient_id,gender,birth_year";

// Reads the transaction CSV, normalizes units through the KB term mappings,
// and groups rows into per-patient records. Malformed or (in strict mode)
// unmapped rows are rejected individually; the stream is never abandoned.
inline Cohort ingest_transactions(std::istream& in, const GuidelineKB& kb, IngestMode mode) {
    Cohort cohort;
    CsvReader reader(in);

    auto header = reader.next();
    if (!header || csv_join(header->fields) != kTransactionsHeader)
        throw std::runtime_error(std::string("transactions: expected header \"") +
                                 kTransactionsHeader + "\"");

    while (auto row = reader.next()) {
        auto reject = [&](std::string reason) {
            cohort.report.rejected.push_back({row->line_no, std::move(reason)});
        };
        const auto& f = row->fields;
        if (f.size() != 8) {
            reject("expected 8 fields, got " + std::to_string(f.size()));
            continue;
        }

        Transaction t;
        t.patient_id = f[0];
        if (t.patient_id.empty()) { reject("empty patient_id"); continue; }

        auto date = Date::parse(f[1]);
        if (!date) { reject("bad date \"" + f[1] + "\""); continue; }
        t.date = *date;

        if (f[2] == "lab_result") t.kind = TxnKind::LabResult;
        else if (f[2] == "med_order") t.kind = TxnKind::MedOrder;
        else if (f[2] == "med_purchase") t.kind = TxnKind::MedPurchase;
        else { reject("bad kind \"" + f[2] + "\""); continue; }

        t.code = f[3];
        if (t.code.empty()) { reject("empty code"); continue; }
        if (f[4] == "LOCAL") t.code_system = CodeSystem::Local;
        else if (f[4] == "ATC") t.code_system = CodeSystem::Atc;
        else { reject("bad code_system \"" + f[4] + "\""); continue; }

        if (!f[5].empty()) {
            t.value = detail::parse_double_field(f[5]);
            if (!t.value) { reject("bad value \"" + f[5] + "\""); continue; }
        }
        t.unit = f[6];
        if (!f[7].empty()) {
            auto supply = detail::parse_int_field(f[7]);
            if (!supply || *supply <= 0) { reject("bad days_supply \"" + f[7] + "\""); continue; }
            t.days_supply = static_cast<int>(*supply);
        }

        switch (t.kind) {
            case TxnKind::LabResult:
                if (!t.value || t.unit.empty()) { reject("lab_result requires value and unit"); continue; }
                if (t.days_supply) { reject("lab_result cannot carry days_supply"); continue; }
                break;
            case TxnKind::MedOrder:
                if (t.value || t.days_supply) { reject("med_order carries neither value nor days_supply"); continue; }
                break;
            case TxnKind::MedPurchase:
                if (!t.days_supply) { reject("med_purchase requires days_supply"); continue; }
                if (t.value) { reject("med_purchase cannot carry a value"); continue; }
                break;
        }

        auto res = resolve_term(kb, t.code_system, t.code, t.unit);
        if (res) {
            t.concept_id = res->target->id;
            if (t.value) t.canonical_value = *t.value * res->factor + res->offset;
        } else if (mode == IngestMode::Strict) {
            reject("unmapped code \"" + f[4] + ":" + t.code + "\"");
            continue;
        }

        auto& rec = cohort.patients[t.patient_id];
        rec.patient_id = t.patient_id;
        rec.transactions.push_back(std::move(t));
        ++cohort.report.accepted;
    }

    for (auto& [id, rec] : cohort.patients) detail::finalize_record(rec);
    return cohort;
}

// Merges the demographics CSV into an ingested cohort. Patients appearing
// only here get an empty record (no transactions, no horizon).
inline std::vector<RejectedRow> apply_demographics(Cohort& cohort, std::istream& in) {
    std::vector<RejectedRow> rejected;
    CsvReader reader(in);

    auto header = reader.next();
    if (!header || csv_join(header->fields) != kDemographicsHeader)
        throw std::runtime_error(std::string("demographics: expected header \"") +
                                 kDemographicsHeader + "\"");

    while (auto row = reader.next()) {
        const auto& f = row->fields;
        auto reject = [&](std::string reason) {
            rejected.push_back({row->line_no, std::move(reason)});
        };
        if (f.size() != 3) { reject("expected 3 fields, got " + std::to_string(f.size())); continue; }
        if (f[0].empty()) { reject("empty patient_id"); continue; }
        Gender g;
        if (f[1] == "M") g = Gender::M;
        else if (f[1] == "F") g = Gender::F;
        else if (f[1] == "unknown") g = Gender::Unknown;
        else { reject("bad gender \"" + f[1] + "\""); continue; }
        auto year = detail::parse_int_field(f[2]);
        if (!year || *year < 1850 || *year > 2200) { reject("bad birth_year \"" + f[2] + "\""); continue; }

        auto& rec = cohort.patients[f[0]];
        rec.patient_id = f[0];
        rec.gender = g;
        rec.birth_year = static_cast<int>(*year);
    }
    return rejected;
}

// Lab points of one concept inside [from, to], ascending by date.
inline std::vector<std::pair<Date, double>> series_query(const PatientRecord& record,
                                                         const GuidelineKB& kb,
                                                         std::string_view concept_id, Date from,
                                                         Date to) {
    if (!kb.find_concept(concept_id))
        throw std::invalid_argument("series_query: unknown concept \"" + std::string(concept_id) + "\"");
    std::vector<std::pair<Date, double>> out;
    for (const auto& t : record.transactions) {
        if (t.kind != TxnKind::LabResult || t.concept_id != concept_id) continue;
        if (t.date < from || t.date > to) continue;
        if (t.canonical_value) out.emplace_back(t.date, *t.canonical_value);
    }
    return out;
}

// Disjoint, sorted purchase-coverage intervals [start, end) for one drug
// concept; overlapping or adjacent intervals are merged.
inline std::vector<std::pair<Date, Date>> coverage_segments(const PatientRecord& record,
                                                            std::string_view drug_concept) {
    std::vector<std::pair<Date, Date>> raw;
    for (const auto& t : record.transactions) {
        if (t.kind != TxnKind::MedPurchase || t.concept_id != drug_concept) continue;
        if (!t.days_supply) continue;
        raw.emplace_back(t.date, t.date + *t.days_supply);
    }
    std::sort(raw.begin(), raw.end());
    std::vector<std::pair<Date, Date>> merged;
    for (const auto& seg : raw) {
        if (!merged.empty() && seg.first <= merged.back().second) {
            if (seg.second > merged.back().second) merged.back().second = seg.second;
        } else {
            merged.push_back(seg);
        }
    }
    return merged;
}

// Cohort persistence: same tree-structured format as the KB; loading a saved
// cohort and saving it again reproduces the bytes exactly.
inline std::string save_cohort(const Cohort& cohort) {
    json doc = json::object();
    json report = json::object();
    report["accepted"] = cohort.report.accepted;
    json rejected = json::array();
    for (const auto& r : cohort.report.rejected) {
        json rj = json::object();
        rj["line"] = r.line_no;
        rj["reason"] = r.reason;
        rejected.push_back(std::move(rj));
    }
    report["rejected"] = std::move(rejected);
    doc["report"] = std::move(report);

    json patients = json::array();
    for (const auto& [id, rec] : cohort.patients) {
        json pj = json::object();
        pj["patient_id"] = rec.patient_id;
        pj["gender"] = to_string(rec.gender);
        pj["birth_year"] = rec.birth_year;
        json txns = json::array();
        for (const auto& t : rec.transactions) {
            json tj = json::object();
            tj["date"] = t.date.to_string();
            tj["kind"] = to_string(t.kind);
            tj["code"] = t.code;
            tj["code_system"] = to_string(t.code_system);
            if (t.value) tj["value"] = *t.value;
            if (!t.unit.empty()) tj["unit"] = t.unit;
            if (t.days_supply) tj["days_supply"] = *t.days_supply;
            if (!t.concept_id.empty()) tj["concept"] = t.concept_id;
            if (t.canonical_value) tj["canonical_value"] = *t.canonical_value;
            txns.push_back(std::move(tj));
        }
        pj["transactions"] = std::move(txns);
        patients.push_back(std::move(pj));
    }
    doc["patients"] = std::move(patients);
    return doc.dump(2) + "\n";
}

inline Cohort load_cohort(std::string_view text) {
    json doc;
    try {
        doc = json::parse(text);
    } catch (const json::parse_error& e) {
        throw std::runtime_error(std::string("cohort: ") + e.what());
    }
    Cohort cohort;
    const json& report = doc.at("report");
    cohort.report.accepted = report.at("accepted").get<std::size_t>();
    for (const auto& rj : report.at("rejected"))
        cohort.report.rejected.push_back(
            {rj.at("line").get<std::size_t>(), rj.at("reason").get<std::string>()});

    for (const auto& pj : doc.at("patients")) {
        PatientRecord rec;
        rec.patient_id = pj.at("patient_id").get<std::string>();
        std::string g = pj.at("gender").get<std::string>();
        rec.gender = g == "M" ? Gender::M : g == "F" ? Gender::F : Gender::Unknown;
        rec.birth_year = pj.at("birth_year").get<int>();
        for (const auto& tj : pj.at("transactions")) {
            Transaction t;
            t.patient_id = rec.patient_id;
            auto date = Date::parse(tj.at("date").get<std::string>());
            if (!date) throw std::runtime_error("cohort: bad date");
            t.date = *date;
            std::string kind = tj.at("kind").get<std::string>();
            if (kind == "lab_result") t.kind = TxnKind::LabResult;
            else if (kind == "med_order") t.kind = TxnKind::MedOrder;
            else if (kind == "med_purchase") t.kind = TxnKind::MedPurchase;
            else throw std::runtime_error("cohort: bad kind \"" + kind + "\"");
            t.code = tj.at("code").get<std::string>();
            t.code_system = tj.at("code_system").get<std::string>() == "ATC" ? CodeSystem::Atc
                                                                             : CodeSystem::Local;
            if (tj.contains("value")) t.value = tj.at("value").get<double>();
            if (tj.contains("unit")) t.unit = tj.at("unit").get<std::string>();
            if (tj.contains("days_supply")) t.days_supply = tj.at("days_supply").get<int>();
            if (tj.contains("concept")) t.concept_id = tj.at("concept").get<std::string>();
            if (tj.contains("canonical_value"))
                t.canonical_value = tj.at("canonical_value").get<double>();
            rec.transactions.push_back(std::move(t));
        }
        detail::finalize_record(rec);
        cohort.patients[rec.patient_id] = std::move(rec);
    }
    return cohort;
}

} // namespace gcrit
