#pragma once

// Outcome-level metrics over final predictions: accuracy, accuracy gap,
// demographic parity, equalized odds and the fairness-utility trade-off.
// All values are fractions in [0, 1].

#include <algorithm>
#include <functional>
#include <limits>
#include <numeric>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "agentaudit/core.hpp"

namespace agentaudit {

/// How per-option disparities are collapsed into one scalar.
enum class Reduction { max, mean };

/// One-vs-rest confusion counts for a single option.
struct OptionConfusion {
    std::size_t tp = 0, fp = 0, tn = 0, fn = 0;

    std::size_t positives() const { return tp + fn; }
    std::size_t negatives() const { return fp + tn; }
    bool operator==(const OptionConfusion&) const = default;
};

/// Sufficient statistics of one group.
struct GroupStats {
    std::string label;
    std::size_t n = 0;
    std::size_t n_correct = 0;
    std::size_t n_abstain = 0;
    std::vector<std::size_t> histogram;         // predictions per option (abstentions excluded)
    std::vector<OptionConfusion> confusion;     // per option

    double accuracy() const { return static_cast<double>(n_correct) / static_cast<double>(n); }
    double prediction_rate(std::size_t k) const {
        return static_cast<double>(histogram[k]) / static_cast<double>(n);
    }
};

/// Largest option count over the selected records.
inline std::size_t max_option_count(const AuditSet& audit) {
    std::size_t k = 0;
    for (const auto& r : audit) k = std::max(k, r.instance.options.size());
    return k;
}

inline std::vector<GroupStats> group_stats(const AuditSet& audit) {
    const std::size_t K = max_option_count(audit);
    std::vector<GroupStats> stats(audit.group_count());
    for (std::size_t g = 0; g < stats.size(); ++g) {
        stats[g].label = audit.group_labels()[g];
        stats[g].histogram.assign(K, 0);
        stats[g].confusion.assign(K, {});
    }
    for (const auto& r : audit) {
        auto& s = stats[r.group_index];
        ++s.n;
        if (r.correct()) ++s.n_correct;
        const auto& pred = r.trajectory.predicted_index;
        if (pred) {
            ++s.histogram[static_cast<std::size_t>(*pred)];
        } else {
            ++s.n_abstain;
        }
        const auto truth = static_cast<std::size_t>(r.instance.truth_index);
        for (std::size_t k = 0; k < K; ++k) {
            bool is_pos = truth == k;
            bool said_k = pred && static_cast<std::size_t>(*pred) == k;
            auto& c = s.confusion[k];
            if (is_pos) {
                said_k ? ++c.tp : ++c.fn;
            } else {
                said_k ? ++c.fp : ++c.tn;
            }
        }
    }
    return stats;
}

namespace detail {

/// Group stats with every group required to be non-empty.
inline std::vector<GroupStats> nonempty_group_stats(const AuditSet& audit) {
    auto stats = group_stats(audit);
    if (stats.size() < 2) throw EmptySelectionError("at least two groups are required");
    for (const auto& s : stats) {
        if (s.n == 0) throw EmptySelectionError("group '" + s.label + "' is empty");
    }
    return stats;
}

inline double spread(const std::vector<double>& v) {
    auto [lo, hi] = std::minmax_element(v.begin(), v.end());
    return *hi - *lo;
}

}  // namespace detail

/// Fraction of records whose prediction equals the truth; abstentions count
/// as wrong. Restricted to one group when `group` is given.
inline double accuracy(const AuditSet& audit, const std::optional<std::string>& group = std::nullopt) {
    std::optional<std::size_t> g;
    if (group) g = audit.group_index(*group);
    std::size_t n = 0, correct = 0;
    for (const auto& r : audit) {
        if (g && r.group_index != *g) continue;
        ++n;
        if (r.correct()) ++correct;
    }
    if (n == 0) throw EmptySelectionError(group ? "group '" + *group + "' is empty" : "audit set is empty");
    return static_cast<double>(correct) / static_cast<double>(n);
}

inline std::vector<double> group_accuracies(const AuditSet& audit) {
    auto stats = detail::nonempty_group_stats(audit);
    std::vector<double> acc;
    for (const auto& s : stats) acc.push_back(s.accuracy());
    return acc;
}

/// max_g Acc(g) - min_g Acc(g).
inline double delta_accuracy(const AuditSet& audit) { return detail::spread(group_accuracies(audit)); }

/// Largest (or mean) over options of the spread of P(prediction = k | g)
/// across groups. Abstentions stay in the denominators but add no term.
inline double demographic_parity(const AuditSet& audit, Reduction reduction = Reduction::max) {
    auto stats = detail::nonempty_group_stats(audit);
    const std::size_t K = stats.front().histogram.size();
    std::vector<double> gaps;
    for (std::size_t k = 0; k < K; ++k) {
        std::vector<double> rates;
        for (const auto& s : stats) rates.push_back(s.prediction_rate(k));
        gaps.push_back(detail::spread(rates));
    }
    if (reduction == Reduction::max) return *std::max_element(gaps.begin(), gaps.end());
    return std::accumulate(gaps.begin(), gaps.end(), 0.0) / static_cast<double>(gaps.size());
}

enum class RateKind { tpr, fpr };

/// An (option, rate) term of equalized odds that fewer than two groups could
/// support.
struct SkippedTerm {
    std::size_t option = 0;
    RateKind rate = RateKind::tpr;
    std::vector<std::string> unsupported_groups;
};

struct EqualizedOddsDetail {
    double value = 0.0;
    std::size_t n_terms = 0;
    std::vector<SkippedTerm> skipped;
};

/// One-vs-rest equalized odds: for every option k and rate in {TPR_k, FPR_k},
/// the spread of that rate across the groups that have support for it
/// (positives for TPR, negatives for FPR). Terms with fewer than two supported
/// groups are skipped and reported.
inline EqualizedOddsDetail equalized_odds_detail(const AuditSet& audit, Reduction reduction = Reduction::max) {
    auto stats = detail::nonempty_group_stats(audit);
    const std::size_t K = stats.front().confusion.size();
    EqualizedOddsDetail out;
    double acc = 0.0;
    for (std::size_t k = 0; k < K; ++k) {
        for (RateKind kind : {RateKind::tpr, RateKind::fpr}) {
            std::vector<double> rates;
            SkippedTerm skip{k, kind, {}};
            for (const auto& s : stats) {
                const auto& c = s.confusion[k];
                std::size_t denom = kind == RateKind::tpr ? c.positives() : c.negatives();
                if (denom == 0) {
                    skip.unsupported_groups.push_back(s.label);
                    continue;
                }
                double num = static_cast<double>(kind == RateKind::tpr ? c.tp : c.fp);
                rates.push_back(num / static_cast<double>(denom));
            }
            if (rates.size() < 2) {
                out.skipped.push_back(std::move(skip));
                continue;
            }
            double gap = detail::spread(rates);
            ++out.n_terms;
            acc = reduction == Reduction::max ? std::max(acc, gap) : acc + gap;
        }
    }
    if (out.n_terms == 0) throw EmptySelectionError("EoD undefined: no option has support in two groups");
    out.value = reduction == Reduction::max ? acc : acc / static_cast<double>(out.n_terms);
    return out;
}

inline double equalized_odds(const AuditSet& audit, Reduction reduction = Reduction::max) {
    return equalized_odds_detail(audit, reduction).value;
}

/// Trade-off formula: (per-group accuracies, overall accuracy) -> score.
using FutFormula = std::function<double(std::span<const double> group_accuracy, double overall_accuracy)>;

/// Worst-group accuracy.
inline double worst_group_accuracy(std::span<const double> group_accuracy, double /*overall*/) {
    return *std::min_element(group_accuracy.begin(), group_accuracy.end());
}

inline double fut(const AuditSet& audit, const FutFormula& formula = worst_group_accuracy) {
    auto acc = group_accuracies(audit);
    return formula(acc, accuracy(audit));
}

}  // namespace agentaudit
