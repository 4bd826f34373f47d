#pragma once

// First-order Markov estimate of tool routing per group, and the entrywise
// difference between two groups' estimates.
//
// Layout: rows are START followed by the vocabulary tools; columns are the
// vocabulary tools followed by END. A trajectory t_1..t_T contributes
// START->t_1, t_j->t_{j+1} and t_T->END; an empty trajectory contributes
// START->END. Self-transitions are counted.

#include <optional>
#include <string>
#include <vector>

#include "agentaudit/core.hpp"
#include "agentaudit/matrix.hpp"

namespace agentaudit {

inline constexpr const char* start_state = "START";
inline constexpr const char* end_state = "END";

struct TransitionMatrix {
    std::string group;  // empty for a pooled estimate
    std::vector<std::string> row_labels;
    std::vector<std::string> col_labels;
    Matrix<std::uint64_t> counts;
    Matrix<double> probs;
    std::vector<std::uint64_t> row_support;

    std::uint64_t total_transitions() const {
        std::uint64_t n = 0;
        for (auto s : row_support) n += s;
        return n;
    }
};

struct TransitionDelta {
    std::string first_group;
    std::string second_group;
    std::vector<std::string> row_labels;
    std::vector<std::string> col_labels;
    /// first - second on rows both groups support; 0 elsewhere.
    Matrix<double> delta;
    /// 1 where both groups' rows reach the minimum support.
    Matrix<std::uint8_t> mask;

    bool masked_in(std::size_t r, std::size_t c) const { return mask(r, c) != 0; }
};

struct TransitionOptions {
    std::uint64_t min_support = 5;
};

namespace detail {

inline std::vector<std::string> transition_row_labels(const ToolVocabulary& v) {
    std::vector<std::string> rows{start_state};
    rows.insert(rows.end(), v.names().begin(), v.names().end());
    return rows;
}

inline std::vector<std::string> transition_col_labels(const ToolVocabulary& v) {
    std::vector<std::string> cols = v.names();
    cols.push_back(end_state);
    return cols;
}

inline void normalize_rows(TransitionMatrix& m) {
    m.row_support.assign(m.counts.rows(), 0);
    m.probs = Matrix<double>(m.counts.rows(), m.counts.cols(), 0.0);
    for (std::size_t r = 0; r < m.counts.rows(); ++r) {
        std::uint64_t total = 0;
        for (std::size_t c = 0; c < m.counts.cols(); ++c) total += m.counts(r, c);
        m.row_support[r] = total;
        if (total == 0) continue;
        for (std::size_t c = 0; c < m.counts.cols(); ++c) {
            m.probs(r, c) = static_cast<double>(m.counts(r, c)) / static_cast<double>(total);
        }
    }
}

}  // namespace detail

/// Adds one tool path (vocabulary indices) to a count matrix.
inline void count_path(Matrix<std::uint64_t>& counts, const std::vector<std::uint16_t>& path) {
    const std::size_t end_col = counts.cols() - 1;
    std::size_t from = 0;  // START row
    for (auto t : path) {
        ++counts(from, t);
        from = static_cast<std::size_t>(t) + 1;
    }
    ++counts(from, end_col);
}

/// Markov estimate over the records of `group` (all records when unset).
/// Out-of-vocabulary calls are not states and are skipped.
inline TransitionMatrix estimate_transitions(const AuditSet& audit, const std::optional<std::string>& group) {
    const auto& vocab = audit.vocabulary();
    TransitionMatrix m;
    m.group = group.value_or("");
    m.row_labels = detail::transition_row_labels(vocab);
    m.col_labels = detail::transition_col_labels(vocab);
    m.counts = Matrix<std::uint64_t>(vocab.size() + 1, vocab.size() + 1, 0);

    std::optional<std::size_t> g;
    if (group) g = audit.group_index(*group);
    std::size_t n = 0;
    for (const auto& r : audit) {
        if (g && r.group_index != *g) continue;
        ++n;
        count_path(m.counts, r.tool_path);
    }
    if (n == 0) throw EmptySelectionError(group ? "group '" + *group + "' is empty" : "audit set is empty");
    detail::normalize_rows(m);
    return m;
}

inline TransitionMatrix estimate_transitions(const AuditSet& audit, const std::string& group) {
    return estimate_transitions(audit, std::optional<std::string>(group));
}

/// Entrywise P(first) - P(second), masked to rows where both groups have at
/// least `min_support` outgoing transitions.
inline TransitionDelta transition_bias(const AuditSet& audit, const std::string& first, const std::string& second,
                                       const TransitionOptions& options = {}) {
    audit.group_index(first);
    audit.group_index(second);
    auto a = estimate_transitions(audit, first);
    auto b = estimate_transitions(audit, second);

    TransitionDelta d;
    d.first_group = first;
    d.second_group = second;
    d.row_labels = a.row_labels;
    d.col_labels = a.col_labels;
    d.delta = Matrix<double>(a.probs.rows(), a.probs.cols(), 0.0);
    d.mask = Matrix<std::uint8_t>(a.probs.rows(), a.probs.cols(), 0);
    for (std::size_t r = 0; r < a.probs.rows(); ++r) {
        if (a.row_support[r] < options.min_support || b.row_support[r] < options.min_support ||
            a.row_support[r] == 0 || b.row_support[r] == 0) {
            continue;
        }
        for (std::size_t c = 0; c < a.probs.cols(); ++c) {
            d.delta(r, c) = a.probs(r, c) - b.probs(r, c);
            d.mask(r, c) = 1;
        }
    }
    return d;
}

/// Restricts a delta to a subset of tool states (in the given order). START
/// and END are always kept.
inline TransitionDelta select_tools(const TransitionDelta& d, const std::vector<std::string>& tools) {
    auto find = [](const std::vector<std::string>& labels, const std::string& l) -> std::size_t {
        for (std::size_t i = 0; i < labels.size(); ++i) {
            if (labels[i] == l) return i;
        }
        throw InputError("unknown tool state '" + l + "'");
    };
    std::vector<std::size_t> rows{0}, cols;
    for (const auto& t : tools) {
        rows.push_back(find(d.row_labels, t));
        cols.push_back(find(d.col_labels, t));
    }
    cols.push_back(d.col_labels.size() - 1);

    TransitionDelta out;
    out.first_group = d.first_group;
    out.second_group = d.second_group;
    out.delta = Matrix<double>(rows.size(), cols.size(), 0.0);
    out.mask = Matrix<std::uint8_t>(rows.size(), cols.size(), 0);
    for (auto r : rows) out.row_labels.push_back(d.row_labels[r]);
    for (auto c : cols) out.col_labels.push_back(d.col_labels[c]);
    for (std::size_t i = 0; i < rows.size(); ++i) {
        for (std::size_t j = 0; j < cols.size(); ++j) {
            out.delta(i, j) = d.delta(rows[i], cols[j]);
            out.mask(i, j) = d.mask(rows[i], cols[j]);
        }
    }
    return out;
}

}  // namespace agentaudit
