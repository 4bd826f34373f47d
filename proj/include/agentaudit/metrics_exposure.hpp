#pragma once

// Tool-exposure bias: subgroup accuracy gap restricted to trajectories that
// call a given tool at least once, with per-group exposure rates.

#include <algorithm>
#include <cmath>
#include <optional>
#include <string>
#include <vector>

#include "agentaudit/core.hpp"

namespace agentaudit {

/// True iff `tool` is called at least once in the trajectory.
inline bool exposure_indicator(const TrajectoryRecord& trajectory, const ToolId& tool) {
    return std::any_of(trajectory.calls.begin(), trajectory.calls.end(),
                       [&](const ToolCall& c) { return c.tool == tool; });
}

struct GroupExposure {
    std::string label;
    std::size_t n = 0;
    std::size_t n_exposed = 0;
    std::size_t n_exposed_correct = 0;
    double exposure_rate = 0.0;
    /// Unset when n_exposed < min_support.
    std::optional<double> conditional_accuracy;
};

struct ExposureResult {
    ToolId tool;
    std::vector<GroupExposure> groups;
    /// False when some group has fewer exposed records than the minimum
    /// support; the gap fields are then zero and must not be read as data.
    bool defined = false;
    /// Acc(first | exposed) - Acc(second | exposed) for two groups; for more
    /// groups the max - min spread, with the extremal labels below.
    double signed_gap = 0.0;
    double abs_gap = 0.0;
    std::string high_label;
    std::string low_label;
};

struct ExposureOptions {
    std::size_t min_support = 1;
};

inline ExposureResult tool_exposure_bias(const AuditSet& audit, const ToolId& tool,
                                         const ExposureOptions& options = {}) {
    if (audit.group_count() < 2) throw InputError("tool exposure bias needs at least two groups");
    auto t = audit.vocabulary().index_of(tool.name);
    if (!t) throw InputError("tool '" + tool.name + "' is not in the audit vocabulary");

    ExposureResult out;
    out.tool = tool;
    out.groups.resize(audit.group_count());
    for (std::size_t g = 0; g < out.groups.size(); ++g) out.groups[g].label = audit.group_labels()[g];
    for (const auto& r : audit) {
        auto& ge = out.groups[r.group_index];
        ++ge.n;
        if (r.used(*t)) {
            ++ge.n_exposed;
            if (r.correct()) ++ge.n_exposed_correct;
        }
    }

    bool all_supported = true;
    for (auto& ge : out.groups) {
        if (ge.n > 0) ge.exposure_rate = static_cast<double>(ge.n_exposed) / static_cast<double>(ge.n);
        if (ge.n_exposed >= std::max<std::size_t>(options.min_support, 1)) {
            ge.conditional_accuracy =
                static_cast<double>(ge.n_exposed_correct) / static_cast<double>(ge.n_exposed);
        } else {
            all_supported = false;
        }
    }
    if (!all_supported) return out;

    out.defined = true;
    if (out.groups.size() == 2) {
        out.signed_gap = *out.groups[0].conditional_accuracy - *out.groups[1].conditional_accuracy;
        bool first_high = out.signed_gap >= 0.0;
        out.high_label = out.groups[first_high ? 0 : 1].label;
        out.low_label = out.groups[first_high ? 1 : 0].label;
    } else {
        std::size_t hi = 0, lo = 0;
        for (std::size_t g = 1; g < out.groups.size(); ++g) {
            if (*out.groups[g].conditional_accuracy > *out.groups[hi].conditional_accuracy) hi = g;
            if (*out.groups[g].conditional_accuracy < *out.groups[lo].conditional_accuracy) lo = g;
        }
        out.signed_gap = *out.groups[hi].conditional_accuracy - *out.groups[lo].conditional_accuracy;
        out.high_label = out.groups[hi].label;
        out.low_label = out.groups[lo].label;
    }
    out.abs_gap = std::abs(out.signed_gap);
    return out;
}

/// Signed gap as a bootstrap-ready scalar metric; throws EmptySelectionError
/// when the gap is undefined on `audit`.
inline double exposure_gap(const AuditSet& audit, const ToolId& tool, const ExposureOptions& options = {}) {
    auto res = tool_exposure_bias(audit, tool, options);
    if (!res.defined) throw EmptySelectionError("exposure gap undefined for tool '" + tool.name + "'");
    return res.signed_gap;
}

}  // namespace agentaudit
