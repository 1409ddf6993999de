#pragma once

#include <algorithm>
#include <map>
#include <stdexcept>
#include <string>
#include <vector>

#include <gcrit/kb.hpp>
#include <gcrit/patient.hpp>

namespace gcrit {

struct StateInterval {
    std::string abstraction_id;
    std::string state_label;
    Date start;                 // inclusive span of the supporting measurements
    Date end;
    std::size_t support_points = 0;

    bool operator==(const StateInterval&) const = default;
};

// Maps each point to its bin and merges runs of same-state points whose
// inter-point gap stays within rule.max_gap. No interpolation: an interval
// extends exactly over its supporting measurements.
inline std::vector<StateInterval> abstract_states(const std::vector<std::pair<Date, double>>& series,
                                                  const AbstractionRule& rule) {
    for (std::size_t i = 1; i < series.size(); ++i)
        if (series[i].first < series[i - 1].first)
            throw std::invalid_argument("abstract_states: series not sorted");

    auto bin_of = [&](double v) -> std::size_t {
        for (std::size_t b = 0; b < rule.bins.size(); ++b)
            if (v >= rule.bins[b].lower && v < rule.bins[b].upper) return b;
        throw std::invalid_argument("abstract_states: value outside bin coverage");
    };

    std::vector<StateInterval> out;
    std::size_t cur_bin = 0;
    bool open = false;
    StateInterval cur;
    for (const auto& [date, value] : series) {
        std::size_t b = bin_of(value);
        if (open && b == cur_bin && date - cur.end <= rule.max_gap_days) {
            cur.end = date;
            ++cur.support_points;
            continue;
        }
        if (open) out.push_back(cur);
        cur = {rule.id, rule.bins[b].state, date, date, 1};
        cur_bin = b;
        open = true;
    }
    if (open) out.push_back(cur);
    return out;
}

struct EvalResult {
    bool truth = false;
    std::vector<std::size_t> witnesses; // indices into record.transactions

    bool operator==(const EvalResult&) const = default;
};

// Per-patient lookup structure: one pass over the transactions, then every
// condition atom is a binary search. State intervals are computed lazily per
// abstraction rule. Build once per patient; not shared across threads.
class PatientIndex {
public:
    struct LabPoint {
        Date date;
        double value;
        std::size_t txn;
    };
    struct EventPoint {
        Date date;
        std::size_t txn;
    };

    PatientIndex(const PatientRecord& record, const GuidelineKB& kb) : record_(&record), kb_(&kb) {
        for (std::size_t i = 0; i < record.transactions.size(); ++i) {
            const auto& t = record.transactions[i];
            if (t.concept_id.empty()) continue;
            events_[t.concept_id].push_back({t.date, i});
            if (t.kind == TxnKind::LabResult && t.canonical_value)
                labs_[t.concept_id].push_back({t.date, *t.canonical_value, i});
        }
    }

    const PatientRecord& record() const { return *record_; }
    const GuidelineKB& kb() const { return *kb_; }

    // Last lab point of the concept with date in [from, to]; nullptr if none.
    const LabPoint* latest_lab(const std::string& concept_id, Date from, Date to) const {
        auto it = labs_.find(concept_id);
        if (it == labs_.end()) return nullptr;
        const auto& v = it->second;
        auto pos = std::upper_bound(v.begin(), v.end(), to,
                                    [](Date d, const LabPoint& p) { return d < p.date; });
        if (pos == v.begin()) return nullptr;
        --pos;
        if (pos->date < from) return nullptr;
        return &*pos;
    }

    const EventPoint* latest_event(const std::string& concept_id, Date from, Date to) const {
        auto it = events_.find(concept_id);
        if (it == events_.end()) return nullptr;
        const auto& v = it->second;
        auto pos = std::upper_bound(v.begin(), v.end(), to,
                                    [](Date d, const EventPoint& p) { return d < p.date; });
        if (pos == v.begin()) return nullptr;
        --pos;
        if (pos->date < from) return nullptr;
        return &*pos;
    }

    // First event of the concept with date in [from, to]; nullptr if none.
    const EventPoint* first_event(const std::string& concept_id, Date from, Date to) const {
        auto it = events_.find(concept_id);
        if (it == events_.end()) return nullptr;
        const auto& v = it->second;
        auto pos = std::lower_bound(v.begin(), v.end(), from,
                                    [](const EventPoint& p, Date d) { return p.date < d; });
        if (pos == v.end() || pos->date > to) return nullptr;
        return &*pos;
    }

    const std::vector<EventPoint>& events(const std::string& concept_id) const {
        static const std::vector<EventPoint> empty;
        auto it = events_.find(concept_id);
        return it == events_.end() ? empty : it->second;
    }

    const std::vector<LabPoint>& labs(const std::string& concept_id) const {
        static const std::vector<LabPoint> empty;
        auto it = labs_.find(concept_id);
        return it == labs_.end() ? empty : it->second;
    }

    const std::vector<StateInterval>& intervals(const std::string& abstraction_id) const {
        auto it = intervals_.find(abstraction_id);
        if (it != intervals_.end()) return it->second;
        const AbstractionRule* rule = kb_->find_abstraction(abstraction_id);
        if (!rule)
            throw std::invalid_argument("unknown abstraction \"" + abstraction_id + "\"");
        std::vector<std::pair<Date, double>> series;
        for (const auto& p : labs(rule->input_concept)) series.emplace_back(p.date, p.value);
        return intervals_.emplace(abstraction_id, abstract_states(series, *rule)).first->second;
    }

private:
    const PatientRecord* record_;
    const GuidelineKB* kb_;
    std::map<std::string, std::vector<LabPoint>> labs_;
    std::map<std::string, std::vector<EventPoint>> events_;
    mutable std::map<std::string, std::vector<StateInterval>> intervals_;
};

namespace detail {

inline void eval_condition_into(const Condition& cond, const PatientIndex& idx, Date at,
                                EvalResult& out) {
    using K = Condition::Kind;
    const Date kFarPast = Date(std::numeric_limits<int>::min() / 2);
    auto window_start = [&](const std::optional<int>& lookback) {
        return lookback ? at - *lookback : kFarPast;
    };

    switch (cond.kind) {
        case K::StateHolds: {
            for (const auto& iv : idx.intervals(cond.ref_id)) {
                if (iv.state_label != cond.state_label) continue;
                if (iv.start <= at && at <= iv.end) {
                    out.truth = true;
                    const AbstractionRule* rule = idx.kb().find_abstraction(cond.ref_id);
                    if (const auto* p = idx.latest_lab(rule->input_concept, iv.start, at))
                        out.witnesses.push_back(p->txn);
                    return;
                }
            }
            out.truth = false;
            return;
        }
        case K::LatestValueCompare: {
            const auto* p = idx.latest_lab(cond.ref_id, window_start(cond.lookback_days), at);
            if (p && compare(p->value, cond.op, cond.threshold)) {
                out.truth = true;
                out.witnesses.push_back(p->txn);
            } else {
                out.truth = false;
            }
            return;
        }
        case K::RecordExists: {
            const auto* p = idx.latest_event(cond.ref_id, window_start(cond.lookback_days), at);
            out.truth = p != nullptr;
            if (p) out.witnesses.push_back(p->txn);
            return;
        }
        case K::RecordAbsent: {
            const auto* p = idx.latest_event(cond.ref_id, window_start(cond.lookback_days), at);
            out.truth = p == nullptr;
            return;
        }
        case K::AgeCompare: {
            int by = idx.record().birth_year;
            out.truth = by != 0 && compare(at.year() - by, cond.op, cond.threshold);
            return;
        }
        case K::And: {
            std::vector<std::size_t> acc;
            for (const auto& ch : cond.children) {
                EvalResult sub;
                eval_condition_into(ch, idx, at, sub);
                if (!sub.truth) {
                    out.truth = false;
                    return;
                }
                acc.insert(acc.end(), sub.witnesses.begin(), sub.witnesses.end());
            }
            out.truth = true;
            out.witnesses.insert(out.witnesses.end(), acc.begin(), acc.end());
            return;
        }
        case K::Or: {
            out.truth = false;
            for (const auto& ch : cond.children) {
                EvalResult sub;
                eval_condition_into(ch, idx, at, sub);
                if (sub.truth) {
                    out.truth = true;
                    out.witnesses.insert(out.witnesses.end(), sub.witnesses.begin(),
                                         sub.witnesses.end());
                }
            }
            return;
        }
        case K::Not: {
            EvalResult sub;
            eval_condition_into(cond.children.at(0), idx, at, sub);
            out.truth = !sub.truth;
            return;
        }
    }
}

} // namespace detail

// Evaluates a condition at one date. Missing data makes an atom false; the
// witnesses are the transactions that made true atoms true, deduplicated.
inline EvalResult eval_condition(const Condition& cond, const PatientIndex& idx, Date at) {
    EvalResult out;
    detail::eval_condition_into(cond, idx, at, out);
    std::sort(out.witnesses.begin(), out.witnesses.end());
    out.witnesses.erase(std::unique(out.witnesses.begin(), out.witnesses.end()),
                        out.witnesses.end());
    return out;
}

inline EvalResult eval_condition(const Condition& cond, const PatientRecord& record,
                                 const GuidelineKB& kb, Date at) {
    PatientIndex idx(record, kb);
    return eval_condition(cond, idx, at);
}

// Debug dump used by the CLI report command.
inline std::string state_intervals_csv(const std::vector<StateInterval>& intervals) {
    std::string out = "abstraction_id,state,start,end,support_points\n";
    for (const auto& iv : intervals) {
        out += csv_join({iv.abstraction_id, iv.state_label, iv.start.to_string(),
                         iv.end.to_string(), std::to_string(iv.support_points)});
        out += "\n";
    }
    return out;
}

} // namespace gcrit
