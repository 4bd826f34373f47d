#pragma once

// Compact builders for audit sets used across the test suites.

#include <optional>
#include <string>
#include <vector>

#include "agentaudit/core.hpp"
#include "agentaudit/simulator.hpp"
#include "agentaudit/stats.hpp"

namespace testing_support {

using namespace agentaudit;

struct Rec {
    std::string group;
    int truth = 0;
    std::optional<int> pred;
    std::vector<std::string> tools = {};
    std::string response = {};
    int n_options = 4;
};

/// Categorical grouping on attribute "grp" whose values are the labels.
inline Grouping label_grouping(const std::vector<std::string>& labels) {
    CategoricalRule rule;
    for (const auto& l : labels) rule.value_to_label[l] = l;
    return Grouping("grp", rule, labels);
}

inline AuditRecord make_record(const Rec& r, std::size_t i) {
    AuditRecord rec;
    rec.instance.id = "i" + std::to_string(1000 + i);
    rec.instance.image_ref = "img";
    rec.instance.question = "q" + std::to_string(i);
    for (int k = 0; k < r.n_options; ++k) rec.instance.options.push_back("opt" + std::to_string(k));
    rec.instance.truth_index = r.truth;
    rec.instance.attributes["grp"] = r.group;
    rec.trajectory.instance_id = rec.instance.id;
    rec.trajectory.driver_id = "d";
    int step = 1;
    for (const auto& t : r.tools) rec.trajectory.calls.push_back(ToolCall{step++, ToolId(t), ""});
    rec.trajectory.final_response = r.response;
    rec.trajectory.predicted_index = r.pred;
    rec.group_label = r.group;
    return rec;
}

inline AuditSet make_audit(const std::vector<Rec>& recs, const std::vector<std::string>& labels = {"A", "B"},
                           const ToolVocabulary& vocab = {}) {
    std::vector<AuditRecord> out;
    for (std::size_t i = 0; i < recs.size(); ++i) out.push_back(make_record(recs[i], i));
    return AuditSet(std::move(out), label_grouping(labels), vocab);
}

/// Random records: every group non-empty, K options, random tools and text.
inline std::vector<Rec> random_recs(RandomStream& rng, std::size_t n, const std::vector<std::string>& labels,
                                    int n_options = 4) {
    static const std::vector<std::string> words = {"may", "the", "likely", "female", "lesion", "young", "appears",
                                                   "effusion", "male", "might"};
    const auto& tools = ToolVocabulary::default_names();
    std::vector<Rec> out;
    for (std::size_t i = 0; i < n; ++i) {
        Rec r;
        r.group = labels[i < labels.size() ? i : rng.uniform_index(labels.size())];
        r.n_options = n_options;
        r.truth = static_cast<int>(rng.uniform_index(static_cast<std::uint64_t>(n_options)));
        if (!rng.bernoulli(0.1)) r.pred = static_cast<int>(rng.uniform_index(static_cast<std::uint64_t>(n_options)));
        auto len = rng.uniform_index(5);
        for (std::uint64_t k = 0; k < len; ++k) r.tools.push_back(tools[rng.uniform_index(tools.size())]);
        auto n_words = rng.uniform_index(8);
        for (std::uint64_t k = 0; k < n_words; ++k) {
            if (!r.response.empty()) r.response += ' ';
            r.response += words[rng.uniform_index(words.size())];
        }
        out.push_back(std::move(r));
    }
    return out;
}

inline std::vector<std::string> random_labels(RandomStream& rng) {
    std::vector<std::string> all = {"A", "B", "C", "D"};
    all.resize(2 + rng.uniform_index(3));
    return all;
}

/// Random row-stochastic chain over START + tools -> tools + END. Every row
/// keeps some mass on END so walks terminate.
inline Matrix<double> random_chain(RandomStream& rng, std::size_t V) {
    Matrix<double> m(V + 1, V + 1, 0.0);
    for (std::size_t r = 0; r <= V; ++r) {
        double total = 0.0;
        for (std::size_t c = 0; c <= V; ++c) {
            double w = rng.bernoulli(0.3) ? 0.0 : rng.uniform01();
            if (c == V) w += 0.2;
            m(r, c) = w;
            total += w;
        }
        for (std::size_t c = 0; c <= V; ++c) m(r, c) /= total;
        // Absorb rounding so the row passes the simulator's sum check.
        double sum = 0.0;
        for (std::size_t c = 0; c < V; ++c) sum += m(r, c);
        m(r, V) = 1.0 - sum;
    }
    return m;
}

inline SimConfig random_sim_config(RandomStream& rng) {
    SimConfig c;
    c.seed = rng();
    c.n_per_group = 5 + rng.uniform_index(30);
    c.max_length = 4 + rng.uniform_index(12);
    auto labels = random_labels(rng);
    for (const auto& l : labels) {
        SimGroup g;
        g.label = l;
        g.attribute_value = l;
        g.chain = random_chain(rng, c.tools.size());
        g.default_correct = rng.uniform01();
        g.hedge_rate = 2.0 * rng.uniform01();
        c.groups.push_back(std::move(g));
    }
    c.attribute = "grp";
    return c;
}

}  // namespace testing_support
