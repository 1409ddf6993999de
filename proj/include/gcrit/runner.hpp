#pragma once

#include <atomic>
#include <map>
#include <stdexcept>
#include <string>
#include <thread>
#include <vector>

#include <gcrit/compliance.hpp>
#include <gcrit/digest.hpp>
#include <gcrit/patient.hpp>

namespace gcrit {

// Batch-run settings. `parallelism` affects scheduling only; every output
// byte is independent of it.
struct RunConfig {
    std::string kb_path;
    std::vector<std::string> cohort_paths;       // transaction CSVs or saved cohorts
    std::vector<std::string> demographics_paths; // optional; applied after ingestion
    std::string output_dir;
    double adherence_threshold = 0.8;
    int drug_active_lapse_days = 90;
    bool strict_ingestion = true;
    int parallelism = 1;
};

inline void validate(const RunConfig& config) {
    if (!(config.adherence_threshold > 0.0) || config.adherence_threshold > 1.0)
        throw std::invalid_argument("adherence_threshold must be in (0,1]");
    if (config.parallelism < 1) throw std::invalid_argument("parallelism must be >= 1");
    if (config.drug_active_lapse_days < 0)
        throw std::invalid_argument("drug_active_lapse_days must be >= 0");
}

// Folds `src` into `dst`: records of the same patient are combined and
// re-sorted, ingestion tallies are summed. Used when a run names several
// cohort inputs.
inline void merge_into(Cohort& dst, Cohort&& src) {
    for (auto& [id, rec] : src.patients) {
        auto [it, fresh] = dst.patients.try_emplace(id, std::move(rec));
        if (fresh) continue;
        auto& target = it->second;
        for (auto& t : rec.transactions) target.transactions.push_back(std::move(t));
        std::sort(target.transactions.begin(), target.transactions.end(),
                  [](const Transaction& a, const Transaction& b) {
                      return std::tuple(a.date, to_string(a.kind), a.code) <
                             std::tuple(b.date, to_string(b.kind), b.code);
                  });
        if (target.birth_year == 0) target.birth_year = rec.birth_year;
        if (target.gender == Gender::Unknown) target.gender = rec.gender;
        target.horizon_start.reset();
        target.horizon_end.reset();
        for (const auto& t : target.transactions) {
            if (!target.horizon_start || t.date < *target.horizon_start)
                target.horizon_start = t.date;
            if (!target.horizon_end || *target.horizon_end < t.date) target.horizon_end = t.date;
        }
    }
    dst.report.accepted += src.report.accepted;
    for (auto& r : src.report.rejected) dst.report.rejected.push_back(std::move(r));
}

struct AnalysisResult {
    std::vector<CritiqueComment> comments; // patient_id order, per-patient order preserved
    std::map<std::string, std::size_t> counts_by_type;
    std::size_t patients = 0;
};

// Critiques every patient, farming records out to `parallelism` workers.
// Results are stitched back in patient_id order, so scheduling never shows
// in the output.
inline AnalysisResult analyze_cohort(const GuidelineKB& kb, const Cohort& cohort,
                                     const RunConfig& config) {
    validate(config);
    CritiqueConfig ccfg;
    ccfg.adherence_threshold = config.adherence_threshold;
    ccfg.drug_active_lapse_days = config.drug_active_lapse_days;

    std::vector<const PatientRecord*> order;
    order.reserve(cohort.patients.size());
    for (const auto& [id, rec] : cohort.patients) order.push_back(&rec);

    std::vector<std::vector<CritiqueComment>> per(order.size());
    auto run_range = [&](std::size_t worker_count) {
        std::atomic<std::size_t> next{0};
        auto work = [&] {
            for (;;) {
                std::size_t i = next.fetch_add(1);
                if (i >= order.size()) return;
                per[i] = critique_patient(kb, *order[i], ccfg);
            }
        };
        if (worker_count <= 1) {
            work();
            return;
        }
        std::vector<std::thread> pool;
        pool.reserve(worker_count);
        for (std::size_t w = 0; w < worker_count; ++w) pool.emplace_back(work);
        for (auto& t : pool) t.join();
    };
    run_range(std::min<std::size_t>(static_cast<std::size_t>(config.parallelism), order.size()));

    AnalysisResult result;
    result.patients = order.size();
    for (auto& chunk : per)
        for (auto& c : chunk) {
            ++result.counts_by_type[to_string(c.comment_type)];
            result.comments.push_back(std::move(c));
        }
    return result;
}

inline std::string render_comment_stream(const std::vector<CritiqueComment>& comments) {
    std::string out;
    for (const auto& c : comments) {
        out += comment_to_line(c);
        out += "\n";
    }
    return out;
}

// Human-readable counterpart of the stream: a summary block, then comments
// grouped per patient in stream order.
inline std::string render_patient_report(const std::vector<CritiqueComment>& comments) {
    std::map<std::string, std::size_t> by_type;
    std::map<std::string, std::size_t> per_patient; // insertion not needed; map sorts ids
    for (const auto& c : comments) {
        ++by_type[to_string(c.comment_type)];
        ++per_patient[c.patient_id];
    }

    std::string out = "compliance report\n";
    out += "patients with comments: " + std::to_string(per_patient.size()) + "\n";
    out += "comments: " + std::to_string(comments.size());
    if (!by_type.empty()) {
        out += " (";
        bool first = true;
        for (const auto& [type, n] : by_type) {
            if (!first) out += ", ";
            out += type + " " + std::to_string(n);
            first = false;
        }
        out += ")";
    }
    out += "\n";

    char score[32];
    std::string current;
    for (const auto& c : comments) {
        if (c.patient_id != current) {
            current = c.patient_id;
            out += "\n== " + current + " (" + std::to_string(per_patient[current]) +
                   (per_patient[current] == 1 ? " comment" : " comments") + ")\n";
        }
        std::snprintf(score, sizeof(score), "%.6f", c.score);
        out += c.event_date.to_string() + "  " + to_string(c.comment_type) + "  " + score + "  " +
               to_string(c.severity) + "  " + c.guideline_path + "\n";
        out += "    " + c.explanation + "\n";
    }
    return out;
}

// Run manifest: configuration, input fingerprints, and result tallies.
// Scheduling settings are deliberately left out so reruns at any worker
// count produce the same bytes.
inline std::string render_manifest(const RunConfig& config,
                                   const std::vector<std::pair<std::string, std::string>>& inputs,
                                   const IngestReport& ingest, const AnalysisResult& result) {
    json doc = json::object();
    doc["tool"] = "gcrit";
    json cfg = json::object();
    cfg["kb_path"] = config.kb_path;
    cfg["cohort_paths"] = config.cohort_paths;
    if (!config.demographics_paths.empty()) cfg["demographics_paths"] = config.demographics_paths;
    cfg["output_dir"] = config.output_dir;
    cfg["adherence_threshold"] = config.adherence_threshold;
    cfg["drug_active_lapse_days"] = config.drug_active_lapse_days;
    cfg["strict_ingestion"] = config.strict_ingestion;
    doc["config"] = std::move(cfg);

    json ins = json::array();
    for (const auto& [path, digest] : inputs) {
        json one = json::object();
        one["path"] = path;
        one["fnv1a64"] = digest;
        ins.push_back(std::move(one));
    }
    doc["inputs"] = std::move(ins);

    json coh = json::object();
    coh["patients"] = result.patients;
    coh["accepted_rows"] = ingest.accepted;
    coh["rejected_rows"] = ingest.rejected.size();
    doc["cohort"] = std::move(coh);

    json com = json::object();
    com["total"] = result.comments.size();
    json by_type = json::object();
    for (const auto& [type, n] : result.counts_by_type) by_type[type] = n;
    com["by_type"] = std::move(by_type);
    doc["comments"] = std::move(com);

    return doc.dump(2) + "\n";
}

} // namespace gcrit
