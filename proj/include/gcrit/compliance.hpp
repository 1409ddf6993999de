#pragma once

#include <algorithm>
#include <cstdio>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include <gcrit/abstraction.hpp>
#include <gcrit/kb.hpp>
#include <gcrit/patient.hpp>

namespace gcrit {

enum class CommentType {
    LateAction,
    ActionOnTime,
    MissingAction,
    PatientCompliance,
    NoSupport,
    Redundant,
    EarlyAction,
    GuidelineContradicted
};

inline std::string to_string(CommentType t) {
    switch (t) {
        case CommentType::LateAction: return "LateAction";
        case CommentType::ActionOnTime: return "ActionOnTime";
        case CommentType::MissingAction: return "MissingAction";
        case CommentType::PatientCompliance: return "PatientCompliance";
        case CommentType::NoSupport: return "NoSupport";
        case CommentType::Redundant: return "Redundant";
        case CommentType::EarlyAction: return "EarlyAction";
        case CommentType::GuidelineContradicted: return "GuidelineContradicted";
    }
    return "?";
}

inline std::optional<CommentType> parse_comment_type(std::string_view s) {
    if (s == "LateAction") return CommentType::LateAction;
    if (s == "ActionOnTime") return CommentType::ActionOnTime;
    if (s == "MissingAction") return CommentType::MissingAction;
    if (s == "PatientCompliance") return CommentType::PatientCompliance;
    if (s == "NoSupport") return CommentType::NoSupport;
    if (s == "Redundant") return CommentType::Redundant;
    if (s == "EarlyAction") return CommentType::EarlyAction;
    if (s == "GuidelineContradicted") return CommentType::GuidelineContradicted;
    return std::nullopt;
}

struct ExpectedAction {
    std::string source_id;       // MonitoringSpec or DrugStep id
    bool from_drug_step = false;
    std::string action_concept;  // display concept; drug steps may accept several
    std::vector<std::string> action_concepts;
    std::optional<Date> earliest;
    Date latest;
    int grace_days = 0;
    std::vector<std::size_t> trigger; // witnesses that raised this expectation
    Severity severity = Severity::Important;
    Date search_from; // earliest date an action may satisfy this expectation

    std::string guideline_path() const {
        return (from_drug_step ? "drug_steps/" : "monitoring/") + source_id;
    }

    bool operator==(const ExpectedAction&) const = default;
};

struct CritiqueComment {
    std::string patient_id;
    CommentType comment_type = CommentType::MissingAction;
    Date event_date;
    std::string guideline_path;
    double score = 1.0;
    Severity severity = Severity::Important;
    std::string explanation;
    std::vector<std::size_t> evidence; // transaction indices within the patient record

    bool operator==(const CritiqueComment&) const = default;
};

struct CritiqueConfig {
    double adherence_threshold = 0.8;
    int drug_active_lapse_days = 90; // coverage lapse that ends a drug episode
};

namespace detail {

// Truth-only evaluation; skips witness bookkeeping for tight scan loops.
inline bool eval_truth(const Condition& cond, const PatientIndex& idx, Date at) {
    using K = Condition::Kind;
    const Date kFarPast = Date(std::numeric_limits<int>::min() / 2);
    switch (cond.kind) {
        case K::StateHolds:
            for (const auto& iv : idx.intervals(cond.ref_id))
                if (iv.state_label == cond.state_label && iv.start <= at && at <= iv.end)
                    return true;
            return false;
        case K::LatestValueCompare: {
            Date from = cond.lookback_days ? at - *cond.lookback_days : kFarPast;
            const auto* p = idx.latest_lab(cond.ref_id, from, at);
            return p && compare(p->value, cond.op, cond.threshold);
        }
        case K::RecordExists: {
            Date from = cond.lookback_days ? at - *cond.lookback_days : kFarPast;
            return idx.latest_event(cond.ref_id, from, at) != nullptr;
        }
        case K::RecordAbsent: {
            Date from = cond.lookback_days ? at - *cond.lookback_days : kFarPast;
            return idx.latest_event(cond.ref_id, from, at) == nullptr;
        }
        case K::AgeCompare: {
            int by = idx.record().birth_year;
            return by != 0 && compare(at.year() - by, cond.op, cond.threshold);
        }
        case K::And:
            for (const auto& ch : cond.children)
                if (!eval_truth(ch, idx, at)) return false;
            return true;
        case K::Or:
            for (const auto& ch : cond.children)
                if (eval_truth(ch, idx, at)) return true;
            return false;
        case K::Not:
            return !eval_truth(cond.children.at(0), idx, at);
    }
    return false;
}

inline void collect_lookbacks(const Condition& cond, std::set<int>& lookbacks, bool& has_age) {
    if (cond.kind == Condition::Kind::AgeCompare) has_age = true;
    if (cond.lookback_days) lookbacks.insert(*cond.lookback_days);
    for (const auto& ch : cond.children) collect_lookbacks(ch, lookbacks, has_age);
}

// First date in [from, to] where the condition holds. Atom truth can only
// flip at a transaction date, the day after one (state-interval ends), the
// day a lookback window slides past one, or a year boundary (age); scanning
// those candidates is equivalent to scanning every day.
inline std::optional<Date> first_true(const Condition& cond, const PatientIndex& idx, Date from,
                                      Date to) {
    std::set<int> lookbacks;
    bool has_age = false;
    collect_lookbacks(cond, lookbacks, has_age);

    std::vector<Date> cand;
    cand.push_back(from);
    for (const auto& t : idx.record().transactions) {
        cand.push_back(t.date);
        cand.push_back(t.date + 1);
        for (int lb : lookbacks) cand.push_back(t.date + lb + 1);
    }
    if (has_age)
        for (int y = from.year(); y <= to.year(); ++y) cand.push_back(Date::from_ymd(y, 1, 1));
    std::sort(cand.begin(), cand.end());
    cand.erase(std::unique(cand.begin(), cand.end()), cand.end());

    for (Date c : cand) {
        if (c < from || c > to) continue;
        if (eval_truth(cond, idx, c)) return c;
    }
    return std::nullopt;
}

struct ActionMatch {
    Date date;
    std::size_t txn;
};

// First transaction of any listed concept inside [from, to]; ties on the
// date resolve to the lowest transaction index.
inline std::optional<ActionMatch> first_action(const PatientIndex& idx,
                                               const std::vector<std::string>& concepts, Date from,
                                               Date to) {
    std::optional<ActionMatch> best;
    for (const auto& c : concepts) {
        const auto* e = idx.first_event(c, from, to);
        if (!e) continue;
        if (!best || e->date < best->date || (e->date == best->date && e->txn < best->txn))
            best = ActionMatch{e->date, e->txn};
    }
    return best;
}

inline std::vector<ExpectedAction> generate_expected_impl(const GuidelineKB& kb,
                                                          const PatientIndex& idx) {
    std::vector<ExpectedAction> out;
    const auto& rec = idx.record();
    if (!rec.horizon_start) return out;
    Date h0 = *rec.horizon_start, h1 = *rec.horizon_end;

    for (const auto& spec : kb.monitoring) {
        auto onset = first_true(spec.applicability, idx, h0, h1);
        if (!onset) continue;
        std::vector<std::size_t> trigger = eval_condition(spec.applicability, idx, *onset).witnesses;

        Date anchor = *onset;
        bool initial = true;
        while (true) {
            ExpectedAction e;
            e.source_id = spec.id;
            e.from_drug_step = false;
            e.action_concept = spec.action_concept;
            e.action_concepts = {spec.action_concept};
            e.latest = anchor + (initial ? spec.latest_start_offset_days : spec.period_days);
            if (spec.earliest_start_offset_days)
                e.earliest = anchor + *spec.earliest_start_offset_days;
            e.grace_days = spec.grace_days;
            e.trigger = trigger;
            e.severity = spec.severity;
            e.search_from = anchor + 1;
            out.push_back(e);

            auto match = first_action(idx, e.action_concepts, e.search_from,
                                      e.latest + e.grace_days);
            if (match) {
                anchor = match->date;
                trigger = {match->txn}; // follow-up windows hang off the last action
            } else {
                if (h1 < e.latest + e.grace_days) break; // follow-up ran out
                anchor = e.latest;
            }
            initial = false;
        }
    }

    for (const auto& step : kb.drug_steps) {
        Condition gate;
        gate.kind = Condition::Kind::And;
        gate.children.push_back(step.indication);
        Condition neg;
        neg.kind = Condition::Kind::Not;
        neg.children.push_back(step.contraindication);
        gate.children.push_back(std::move(neg));

        auto onset = first_true(gate, idx, h0, h1);
        if (!onset) continue;

        ExpectedAction e;
        e.source_id = step.id;
        e.from_drug_step = true;
        e.action_concepts = kb.step_drug_concepts(step);
        e.action_concept = e.action_concepts.empty() ? std::string() : e.action_concepts.front();
        e.latest = *onset + step.expected_within_days;
        e.grace_days = step.grace_days;
        e.trigger = eval_condition(gate, idx, *onset).witnesses;
        e.severity = step.severity;
        e.search_from = *onset;
        out.push_back(std::move(e));
    }
    return out;
}

inline std::string cite(std::size_t txn) { return "tx[" + std::to_string(txn) + "]"; }

inline std::optional<CritiqueComment> classify_impl(const ExpectedAction& e,
                                                    const PatientIndex& idx) {
    const auto& rec = idx.record();
    CritiqueComment c;
    c.patient_id = rec.patient_id;
    c.guideline_path = e.guideline_path();
    c.severity = e.severity;

    auto match = first_action(idx, e.action_concepts, e.search_from, e.latest + e.grace_days);
    if (match) {
        c.event_date = match->date;
        c.evidence = {match->txn};
        if (e.earliest && match->date < *e.earliest) {
            c.comment_type = CommentType::EarlyAction;
            c.score = 1.0;
            c.explanation = e.action_concept + " on " + match->date.to_string() +
                            " preceded the earliest allowed date " + e.earliest->to_string() +
                            "; evidence " + cite(match->txn);
        } else if (match->date <= e.latest) {
            c.comment_type = CommentType::ActionOnTime;
            c.score = 1.0;
            c.explanation = e.action_concept + " on " + match->date.to_string() +
                            " met the due date " + e.latest.to_string() + "; evidence " +
                            cite(match->txn);
        } else {
            int late = match->date - e.latest;
            c.comment_type = CommentType::LateAction;
            c.score = 1.0 - static_cast<double>(late) / e.grace_days;
            c.explanation = e.action_concept + " on " + match->date.to_string() + " came " +
                            std::to_string(late) + " days after the due date " +
                            e.latest.to_string() + "; evidence " + cite(match->txn);
        }
        return c;
    }

    if (!rec.horizon_end || *rec.horizon_end < e.latest + e.grace_days)
        return std::nullopt; // record ends before the grace window: not decidable

    c.comment_type = CommentType::MissingAction;
    c.event_date = e.latest;
    c.score = 1.0;
    c.evidence = e.trigger;
    c.explanation = "no " + e.action_concept + " recorded by " +
                    (e.latest + e.grace_days).to_string() + " for the action due " +
                    e.latest.to_string();
    return c;
}

struct DrugEpisode {
    std::string concept_id;
    std::size_t start_txn = 0;
    Date start;
    Date last_activity;  // latest coverage end (purchases) or event date (orders)
    Date active_until;   // last_activity + lapse
};

inline std::vector<DrugEpisode> build_episodes(const GuidelineKB& kb, const PatientIndex& idx,
                                               int lapse_days) {
    std::vector<DrugEpisode> out;
    const auto& rec = idx.record();
    for (const auto& cdef : kb.concepts) {
        if (cdef.kind != ConceptKind::MedicationClass) continue;
        bool open = false;
        for (const auto& ev : idx.events(cdef.id)) {
            const auto& t = rec.transactions[ev.txn];
            if (t.kind != TxnKind::MedOrder && t.kind != TxnKind::MedPurchase) continue;
            Date activity = t.days_supply ? t.date + *t.days_supply : t.date;
            if (open && t.date <= out.back().active_until) {
                if (activity > out.back().last_activity) out.back().last_activity = activity;
                out.back().active_until = out.back().last_activity + lapse_days;
            } else {
                out.push_back({cdef.id, ev.txn, t.date, activity, activity + lapse_days});
                open = true;
            }
        }
    }
    return out;
}

} // namespace detail

// Forward direction: reconstruct the guideline's expected actions for this
// record. Monitoring chains anchor at the applicability onset; each satisfied
// window re-anchors at its action, each missed one at its due date. Drug
// steps raise a single expectation at indication onset.
inline std::vector<ExpectedAction> generate_expected(const GuidelineKB& kb,
                                                     const PatientRecord& record) {
    PatientIndex idx(record, kb);
    auto out = detail::generate_expected_impl(kb, idx);
    std::stable_sort(out.begin(), out.end(), [](const ExpectedAction& a, const ExpectedAction& b) {
        if (a.latest != b.latest) return a.latest < b.latest;
        return a.source_id < b.source_id;
    });
    return out;
}

inline std::optional<CritiqueComment> classify_expected(const ExpectedAction& expected,
                                                        const PatientRecord& record,
                                                        const GuidelineKB& kb) {
    PatientIndex idx(record, kb);
    return detail::classify_impl(expected, idx);
}

namespace detail {

inline std::vector<CritiqueComment> audit_impl(const GuidelineKB& kb, const PatientIndex& idx,
                                               const std::set<std::size_t>& matched_txns,
                                               int lapse_days) {
    std::vector<CritiqueComment> out;
    const auto& rec = idx.record();

    auto episodes = build_episodes(kb, idx, lapse_days);
    std::set<std::size_t> episode_starts;
    for (const auto& ep : episodes) episode_starts.insert(ep.start_txn);

    // intention labels reachable from each drug concept
    std::map<std::string, std::vector<const DrugStep*>> steps_by_concept;
    for (const auto& step : kb.drug_steps)
        for (const auto& c : kb.step_drug_concepts(step)) steps_by_concept[c].push_back(&step);

    for (std::size_t i = 0; i < rec.transactions.size(); ++i) {
        const auto& t = rec.transactions[i];
        if (t.concept_id.empty()) continue; // retained unmapped rows are not auditable

        if (t.kind == TxnKind::LabResult) {
            if (matched_txns.count(i)) continue;
            bool supported = false;
            for (const auto& spec : kb.monitoring) {
                if (spec.action_concept != t.concept_id) continue;
                if (eval_truth(spec.applicability, idx, t.date)) { supported = true; break; }
            }
            if (!supported) {
                CritiqueComment c;
                c.patient_id = rec.patient_id;
                c.comment_type = CommentType::NoSupport;
                c.event_date = t.date;
                c.guideline_path = "concepts/" + t.concept_id;
                c.score = 1.0;
                c.severity = Severity::LessImportant;
                c.evidence = {i};
                c.explanation = t.concept_id + " on " + t.date.to_string() +
                                " has no guideline support; evidence " + cite(i);
                out.push_back(std::move(c));
            }
            continue;
        }

        // med_order / med_purchase: only episode starts are audited; refills
        // and continuations ride on the episode that started them
        if (!episode_starts.count(i)) continue;

        auto steps_it = steps_by_concept.find(t.concept_id);
        const std::vector<const DrugStep*>* steps =
            steps_it == steps_by_concept.end() ? nullptr : &steps_it->second;

        const DrugStep* contra_step = nullptr;
        std::vector<std::size_t> contra_witnesses;
        if (steps) {
            for (const auto* step : *steps) {
                auto ev = eval_condition(step->contraindication, idx, t.date);
                if (ev.truth) {
                    contra_step = step;
                    contra_witnesses = std::move(ev.witnesses);
                    break;
                }
            }
        }
        if (contra_step) {
            CritiqueComment c;
            c.patient_id = rec.patient_id;
            c.comment_type = CommentType::GuidelineContradicted;
            c.event_date = t.date;
            c.guideline_path = "drug_steps/" + contra_step->id;
            c.score = 1.0;
            c.severity = contra_step->severity;
            c.evidence = contra_witnesses;
            c.evidence.push_back(i);
            std::sort(c.evidence.begin(), c.evidence.end());
            c.evidence.erase(std::unique(c.evidence.begin(), c.evidence.end()), c.evidence.end());
            c.explanation = t.concept_id + " started " + t.date.to_string() +
                            " while contraindicated; evidence " + cite(i);
            out.push_back(std::move(c));
            continue;
        }

        if (matched_txns.count(i)) continue; // forward direction already credited it

        const DrugStep* indicated = nullptr;
        if (steps) {
            for (const auto* step : *steps) {
                if (eval_truth(step->indication, idx, t.date)) { indicated = step; break; }
            }
        }
        if (!indicated) {
            CritiqueComment c;
            c.patient_id = rec.patient_id;
            c.comment_type = CommentType::NoSupport;
            c.event_date = t.date;
            c.guideline_path = "concepts/" + t.concept_id;
            c.score = 1.0;
            c.severity = Severity::LessImportant;
            c.evidence = {i};
            c.explanation = t.concept_id + " started " + t.date.to_string() +
                            " without an indicated guideline step; evidence " + cite(i);
            out.push_back(std::move(c));
            continue;
        }

        // same-intention episode already running?
        std::set<std::string> my_intentions;
        for (const auto* step : *steps) my_intentions.insert(step->intention_label);
        const DrugEpisode* prior = nullptr;
        for (const auto& ep : episodes) {
            if (ep.concept_id == t.concept_id) continue;
            if (!(ep.start < t.date && t.date <= ep.active_until)) continue;
            bool shared = false;
            auto other = steps_by_concept.find(ep.concept_id);
            if (other != steps_by_concept.end())
                for (const auto* step : other->second)
                    if (my_intentions.count(step->intention_label)) { shared = true; break; }
            if (!shared) continue;
            if (!prior || ep.start > prior->start ||
                (ep.start == prior->start && ep.start_txn < prior->start_txn))
                prior = &ep;
        }
        if (prior) {
            CritiqueComment c;
            c.patient_id = rec.patient_id;
            c.comment_type = CommentType::Redundant;
            c.event_date = t.date;
            c.guideline_path = "drug_steps/" + indicated->id;
            c.score = 1.0;
            c.severity = indicated->severity;
            c.evidence = {prior->start_txn, i};
            std::sort(c.evidence.begin(), c.evidence.end());
            c.explanation = t.concept_id + " started " + t.date.to_string() + " while " +
                            prior->concept_id + " with the same intention was active; evidence " +
                            cite(i) + ", " + cite(prior->start_txn);
            out.push_back(std::move(c));
        }
    }
    return out;
}

inline std::set<std::size_t> matched_txn_set(const GuidelineKB& kb, const PatientIndex& idx) {
    std::set<std::size_t> matched;
    for (const auto& e : generate_expected_impl(kb, idx)) {
        auto m = first_action(idx, e.action_concepts, e.search_from, e.latest + e.grace_days);
        if (m) matched.insert(m->txn);
    }
    return matched;
}

inline std::vector<CritiqueComment> adherence_impl(const GuidelineKB& kb, const PatientIndex& idx,
                                                   double threshold) {
    if (!(threshold > 0.0) || threshold > 1.0)
        throw std::invalid_argument("adherence threshold must be in (0,1]");
    std::vector<CritiqueComment> out;
    const auto& rec = idx.record();
    if (!rec.horizon_end) return out;
    Date h1 = *rec.horizon_end;

    for (const auto& cdef : kb.concepts) {
        if (cdef.kind != ConceptKind::MedicationClass) continue;
        std::optional<Date> first_order;
        std::vector<std::size_t> med_txns;
        for (const auto& ev : idx.events(cdef.id)) {
            const auto& t = rec.transactions[ev.txn];
            if (t.kind == TxnKind::MedOrder && !first_order) first_order = t.date;
            if (t.kind == TxnKind::MedOrder || t.kind == TxnKind::MedPurchase)
                med_txns.push_back(ev.txn);
        }
        if (!first_order) continue;
        int span = h1 - *first_order;
        if (span <= 0) continue;

        int covered = 0;
        std::string gaps;
        Date cursor = *first_order;
        for (const auto& [s, e] : coverage_segments(rec, cdef.id)) {
            Date cs = s < *first_order ? *first_order : s;
            Date ce = e > h1 ? h1 : e;
            if (ce > cs) {
                if (cs > cursor)
                    gaps += " [" + cursor.to_string() + "," + cs.to_string() + ")";
                covered += ce - cs;
                if (ce > cursor) cursor = ce;
            }
        }
        if (cursor < h1) gaps += " [" + cursor.to_string() + "," + h1.to_string() + ")";

        double ratio = static_cast<double>(covered) / span;
        if (ratio >= threshold) continue;

        CritiqueComment c;
        c.patient_id = rec.patient_id;
        c.comment_type = CommentType::PatientCompliance;
        c.event_date = h1;
        c.guideline_path = "adherence/" + cdef.id;
        c.score = std::clamp(1.0 - ratio / threshold, 0.0, 1.0);
        c.severity = Severity::Important;
        c.evidence = med_txns;
        char ratio_buf[32];
        char thresh_buf[32];
        std::snprintf(ratio_buf, sizeof(ratio_buf), "%.3f", ratio);
        std::snprintf(thresh_buf, sizeof(thresh_buf), "%.2f", threshold);
        c.explanation = cdef.id + " possession ratio " + ratio_buf + " below " + thresh_buf +
                        "; uncovered" + (gaps.empty() ? " none" : gaps) + "; evidence " +
                        cite(med_txns.front());
        out.push_back(std::move(c));
    }
    return out;
}

} // namespace detail

// Backward direction: check every observed action for guideline support.
// Actions the forward direction matched are treated as supported.
inline std::vector<CritiqueComment> audit_observed(const GuidelineKB& kb,
                                                   const PatientRecord& record,
                                                   int drug_active_lapse_days = 90) {
    PatientIndex idx(record, kb);
    return detail::audit_impl(kb, idx, detail::matched_txn_set(kb, idx), drug_active_lapse_days);
}

inline std::vector<CritiqueComment> assess_medication_adherence(const GuidelineKB& kb,
                                                                const PatientRecord& record,
                                                                double threshold = 0.8) {
    PatientIndex idx(record, kb);
    return detail::adherence_impl(kb, idx, threshold);
}

// Full per-patient critique: forward classification, backward audit,
// adherence; deduplicated on (type, path, date) and deterministically sorted.
inline std::vector<CritiqueComment> critique_patient(const GuidelineKB& kb,
                                                     const PatientRecord& record,
                                                     const CritiqueConfig& config = {}) {
    if (!(config.adherence_threshold > 0.0) || config.adherence_threshold > 1.0)
        throw std::invalid_argument("adherence threshold must be in (0,1]");

    PatientIndex idx(record, kb);
    std::vector<CritiqueComment> all;

    std::set<std::size_t> matched;
    for (const auto& e : detail::generate_expected_impl(kb, idx)) {
        auto m = detail::first_action(idx, e.action_concepts, e.search_from,
                                      e.latest + e.grace_days);
        if (m) matched.insert(m->txn);
        if (auto c = detail::classify_impl(e, idx)) all.push_back(std::move(*c));
    }
    for (auto& c : detail::audit_impl(kb, idx, matched, config.drug_active_lapse_days))
        all.push_back(std::move(c));
    for (auto& c : detail::adherence_impl(kb, idx, config.adherence_threshold))
        all.push_back(std::move(c));

    std::vector<CritiqueComment> out;
    std::set<std::tuple<int, std::string, int>> seen;
    for (auto& c : all) {
        auto key = std::make_tuple(static_cast<int>(c.comment_type), c.guideline_path,
                                   c.event_date.days_since_epoch());
        if (seen.insert(key).second) out.push_back(std::move(c));
    }
    std::sort(out.begin(), out.end(), [](const CritiqueComment& a, const CritiqueComment& b) {
        if (a.event_date != b.event_date) return a.event_date < b.event_date;
        std::string at = to_string(a.comment_type), bt = to_string(b.comment_type);
        if (at != bt) return at < bt;
        return a.guideline_path < b.guideline_path;
    });
    return out;
}

// One comment per line; fixed key order and a fixed 6-decimal score so the
// stream is byte-stable across runs and platforms.
inline std::string comment_to_line(const CritiqueComment& c) {
    char score[32];
    std::snprintf(score, sizeof(score), "%.6f", c.score);
    std::string line = "{\"patient_id\":";
    line += json(c.patient_id).dump();
    line += ",\"comment_type\":\"" + to_string(c.comment_type) + "\"";
    line += ",\"event_date\":\"" + c.event_date.to_string() + "\"";
    line += ",\"guideline_path\":";
    line += json(c.guideline_path).dump();
    line += ",\"score\":";
    line += score;
    line += ",\"severity\":\"" + to_string(c.severity) + "\"";
    line += ",\"explanation\":";
    line += json(c.explanation).dump();
    line += ",\"evidence\":[";
    for (std::size_t i = 0; i < c.evidence.size(); ++i) {
        if (i) line += ",";
        line += std::to_string(c.evidence[i]);
    }
    line += "]}";
    return line;
}

inline CritiqueComment parse_comment_line(const std::string& line) {
    json j = json::parse(line);
    CritiqueComment c;
    c.patient_id = j.at("patient_id").get<std::string>();
    auto type = parse_comment_type(j.at("comment_type").get<std::string>());
    if (!type) throw std::runtime_error("bad comment_type in stream");
    c.comment_type = *type;
    auto date = Date::parse(j.at("event_date").get<std::string>());
    if (!date) throw std::runtime_error("bad event_date in stream");
    c.event_date = *date;
    c.guideline_path = j.at("guideline_path").get<std::string>();
    c.score = j.at("score").get<double>();
    c.severity = j.at("severity").get<std::string>() == "important" ? Severity::Important
                                                                    : Severity::LessImportant;
    c.explanation = j.at("explanation").get<std::string>();
    for (const auto& e : j.at("evidence")) c.evidence.push_back(e.get<std::size_t>());
    return c;
}

} // namespace gcrit
