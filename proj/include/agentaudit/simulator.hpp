#pragma once

// Synthetic audit data with known, injected biases: per-group routing chains,
// tool-set-conditioned correctness, and lexicon-controlled response text.
// Used as ground truth for validating every metric end to end.

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <limits>
#include <map>
#include <set>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "agentaudit/core.hpp"
#include "agentaudit/ingest.hpp"
#include "agentaudit/matrix.hpp"
#include "agentaudit/metrics_reasoning.hpp"
#include "agentaudit/metrics_transition.hpp"
#include "agentaudit/stats.hpp"

namespace agentaudit {

/// Correctness probability applied when every tool in `required_tools` was used.
struct CorrectnessRule {
    std::vector<std::string> required_tools;
    double p = 0.0;
};

struct SimGroup {
    std::string label;
    AttributeValue attribute_value;
    /// Rows START + tools, columns tools + END (same layout as TransitionMatrix).
    Matrix<double> chain;
    /// Rules are tried in order; the first whose tool set is covered wins.
    std::vector<CorrectnessRule> rules;
    double default_correct = 0.5;
    double abstain_rate = 0.0;
    /// Expected hedge / demographic terms per response (Poisson means).
    double hedge_rate = 0.0;
    double demo_rate = 0.0;
    /// Expected normalized judge score in [0, 1].
    double quality = 0.5;
};

struct SimConfig {
    std::uint64_t seed = 1;
    std::size_t n_per_group = 100;
    std::string attribute = "gender";
    std::vector<std::string> tools = ToolVocabulary::default_names();
    int n_options = 6;
    std::size_t max_length = 32;
    bool inject_demo = true;
    std::string driver_id = "sim-driver";
    std::vector<SimGroup> groups;
    Lexicon hedge_lexicon = Lexicon::hedge();
    Lexicon demo_lexicon = Lexicon::demographic();

    const SimGroup& group(const std::string& label) const {
        for (const auto& g : groups) {
            if (g.label == label) return g;
        }
        throw InputError("simulator config has no group '" + label + "'");
    }
};

struct SimOutput {
    std::vector<Instance> instances;
    std::vector<TrajectoryRecord> trajectories;
    /// Judge-style scores drawn from each group's quality.
    ScoreMap scores;
    /// Walks cut at max_length before reaching END.
    std::size_t n_truncated = 0;
};

namespace detail {

/// Filler words for synthetic responses; must stay disjoint from lexicons.
inline const std::vector<std::string>& filler_words() {
    static const std::vector<std::string> words = {
        "the",      "radiograph", "shows",     "opacity",  "in",       "lower",     "lobe",     "with",
        "consistent", "findings", "and",       "no",       "focal",    "consolidation", "cardiac", "silhouette",
        "is",       "within",     "normal",    "limits",   "mild",     "effusion",  "noted",    "right",
        "left",     "base",       "lung",      "fields",   "clear",    "answer",    "option",   "none"};
    return words;
}

inline void check_row(const std::string& where, const Matrix<double>& m, std::size_t r) {
    double sum = 0.0;
    for (std::size_t c = 0; c < m.cols(); ++c) {
        double p = m(r, c);
        if (!(p >= 0.0 && p <= 1.0)) throw InputError(where + ": probability outside [0, 1]");
        sum += p;
    }
    if (std::fabs(sum - 1.0) > 1e-9) throw InputError(where + ": row sums to " + format_double(sum) + ", not 1");
}

inline void check_probability(const std::string& where, double p) {
    if (!(p >= 0.0 && p <= 1.0)) throw InputError(where + " must be in [0, 1]");
}

inline std::uint64_t poisson(RandomStream& rng, double lambda) {
    std::uint64_t k = 0;
    while (lambda > 30.0) {
        k += poisson(rng, 30.0);
        lambda -= 30.0;
    }
    const double limit = std::exp(-lambda);
    double prod = rng.uniform01();
    while (prod > limit) {
        ++k;
        prod *= rng.uniform01();
    }
    return k;
}

}  // namespace detail

/// Checks probabilities, row sums, that END is reachable from every state
/// reachable from START, and that some START -> END path fits the length cap.
inline void validate(const SimConfig& config) {
    if (config.n_per_group < 1) throw InputError("simulator: n_per_group must be >= 1");
    if (config.n_options < 2) throw InputError("simulator: n_options must be >= 2");
    if (config.n_options > 26) throw InputError("simulator: n_options must be <= 26");
    if (config.groups.size() < 2) throw InputError("simulator: at least two groups are required");
    if (config.max_length < 1) throw InputError("simulator: max_length must be >= 1");
    ToolVocabulary vocab(config.tools);
    const std::size_t V = vocab.size();

    std::set<std::string> lexicon_tokens;
    for (const auto* lex : {&config.hedge_lexicon, &config.demo_lexicon}) {
        for (const auto& term : lex->token_terms()) lexicon_tokens.insert(term.begin(), term.end());
    }
    for (const auto& w : detail::filler_words()) {
        if (lexicon_tokens.count(w)) throw InputError("simulator: lexicon term '" + w + "' collides with filler text");
    }
    for (int k = 0; k < config.n_options; ++k) {
        std::string letter(1, static_cast<char>('a' + k));
        if (lexicon_tokens.count(letter)) throw InputError("simulator: lexicon term '" + letter + "' collides with answer letters");
    }

    std::set<std::string> labels;
    for (const auto& g : config.groups) {
        std::string where = "simulator group '" + g.label + "'";
        if (!labels.insert(g.label).second) throw InputError("simulator: duplicate group '" + g.label + "'");
        if (g.chain.rows() != V + 1 || g.chain.cols() != V + 1) throw InputError(where + ": chain has the wrong shape");
        detail::check_probability(where + " default_correct", g.default_correct);
        detail::check_probability(where + " abstain_rate", g.abstain_rate);
        detail::check_probability(where + " quality", g.quality);
        for (const auto& rule : g.rules) {
            detail::check_probability(where + " rule p", rule.p);
            for (const auto& t : rule.required_tools) {
                if (!vocab.contains(t)) throw InputError(where + ": rule names unknown tool '" + t + "'");
            }
        }
        if (!(g.hedge_rate >= 0.0) || !(g.demo_rate >= 0.0)) throw InputError(where + ": term rates must be >= 0");

        // Reachable states from START must all have valid rows and reach END.
        std::vector<bool> reach(V + 1, false);
        std::vector<std::size_t> stack{0};
        reach[0] = true;
        while (!stack.empty()) {
            std::size_t r = stack.back();
            stack.pop_back();
            detail::check_row(where + " chain row " + (r == 0 ? std::string(start_state) : vocab.name(r - 1)), g.chain, r);
            for (std::size_t c = 0; c < V; ++c) {
                if (g.chain(r, c) > 0.0 && !reach[c + 1]) {
                    reach[c + 1] = true;
                    stack.push_back(c + 1);
                }
            }
        }
        // END must be reachable from each reachable state.
        std::vector<bool> ends(V + 1, false);
        for (bool changed = true; changed;) {
            changed = false;
            for (std::size_t r = 0; r <= V; ++r) {
                if (!reach[r] || ends[r]) continue;
                bool ok = g.chain(r, V) > 0.0;
                for (std::size_t c = 0; c < V && !ok; ++c) ok = g.chain(r, c) > 0.0 && ends[c + 1];
                if (ok) {
                    ends[r] = true;
                    changed = true;
                }
            }
        }
        for (std::size_t r = 0; r <= V; ++r) {
            if (reach[r] && !ends[r]) {
                throw InputError(where + ": no path to END from " + (r == 0 ? std::string(start_state) : vocab.name(r - 1)));
            }
        }
        // Fewest tool calls on any START -> END path (breadth-first).
        std::vector<std::size_t> depth(V + 1, std::numeric_limits<std::size_t>::max());
        std::vector<std::size_t> frontier{0};
        depth[0] = 0;
        std::size_t shortest = std::numeric_limits<std::size_t>::max();
        while (!frontier.empty() && shortest == std::numeric_limits<std::size_t>::max()) {
            std::vector<std::size_t> next;
            for (auto r : frontier) {
                if (g.chain(r, V) > 0.0) shortest = std::min(shortest, depth[r]);
                for (std::size_t c = 0; c < V; ++c) {
                    if (g.chain(r, c) > 0.0 && depth[c + 1] == std::numeric_limits<std::size_t>::max()) {
                        depth[c + 1] = depth[r] + 1;
                        next.push_back(c + 1);
                    }
                }
            }
            frontier = std::move(next);
        }
        if (shortest > config.max_length) {
            throw InputError(where + ": no path to END within the " + std::to_string(config.max_length) + "-call cap");
        }
    }
}

/// Records are numbered group by group; record r draws only from stream
/// (seed, r), so generation order does not affect the output.
inline SimOutput generate(const SimConfig& config) {
    validate(config);
    ToolVocabulary vocab(config.tools);
    const std::size_t V = vocab.size();
    const auto& filler = detail::filler_words();
    SimOutput out;

    std::size_t r = 0;
    for (const auto& g : config.groups) {
        std::vector<std::uint64_t> rule_masks;
        for (const auto& rule : g.rules) {
            std::uint64_t m = 0;
            for (const auto& t : rule.required_tools) m |= std::uint64_t{1} << *vocab.index_of(t);
            rule_masks.push_back(m);
        }
        for (std::size_t j = 0; j < config.n_per_group; ++j, ++r) {
            RandomStream rng(config.seed, r);
            char id[32];
            std::snprintf(id, sizeof id, "sim-%07zu", r);

            Instance inst;
            inst.id = id;
            inst.image_ref = std::string("sim://image/") + id;
            inst.question = "Synthetic question " + std::to_string(r) + ": which finding is present?";
            for (int k = 0; k < config.n_options; ++k) inst.options.push_back(std::string("Finding ") + static_cast<char>('A' + k));
            inst.truth_index = static_cast<int>(rng.uniform_index(static_cast<std::uint64_t>(config.n_options)));
            inst.attributes[config.attribute] = g.attribute_value;

            TrajectoryRecord tr;
            tr.instance_id = inst.id;
            tr.driver_id = config.driver_id;
            tr.initial_context_digest = "synthetic image and question";
            std::uint64_t used = 0;
            std::size_t state = 0;
            for (;;) {
                if (tr.calls.size() >= config.max_length) {
                    ++out.n_truncated;
                    break;
                }
                double u = rng.uniform01();
                std::size_t col = V;  // END
                double acc = 0.0;
                for (std::size_t c = 0; c <= V; ++c) {
                    acc += g.chain(state, c);
                    if (u < acc && g.chain(state, c) > 0.0) {
                        col = c;
                        break;
                    }
                }
                if (col == V) break;
                tr.calls.push_back(ToolCall{static_cast<int>(tr.calls.size()) + 1, ToolId(vocab.name(col)),
                                            "synthetic output of " + vocab.name(col)});
                used |= std::uint64_t{1} << col;
                state = col + 1;
            }

            double p_correct = g.default_correct;
            for (std::size_t k = 0; k < g.rules.size(); ++k) {
                if ((used & rule_masks[k]) == rule_masks[k]) {
                    p_correct = g.rules[k].p;
                    break;
                }
            }
            bool abstain = rng.bernoulli(g.abstain_rate);
            bool correct = rng.bernoulli(p_correct);
            if (!abstain) {
                if (correct) {
                    tr.predicted_index = inst.truth_index;
                } else {
                    auto other = static_cast<int>(rng.uniform_index(static_cast<std::uint64_t>(config.n_options - 1)));
                    tr.predicted_index = other >= inst.truth_index ? other + 1 : other;
                }
            }

            auto n_hedge = detail::poisson(rng, g.hedge_rate);
            auto n_demo = config.inject_demo ? detail::poisson(rng, g.demo_rate) : 0;
            std::vector<std::string> words;
            std::size_t n_filler = 8 + rng.uniform_index(8);
            for (std::size_t k = 0; k < n_filler; ++k) words.push_back(filler[rng.uniform_index(filler.size())]);
            auto insert_terms = [&](std::uint64_t n, const Lexicon& lex) {
                for (std::uint64_t k = 0; k < n; ++k) {
                    const auto& term = lex.terms()[rng.uniform_index(lex.terms().size())];
                    words.insert(words.begin() + static_cast<std::ptrdiff_t>(rng.uniform_index(words.size() + 1)), term);
                }
            };
            insert_terms(n_hedge, config.hedge_lexicon);
            insert_terms(n_demo, config.demo_lexicon);
            std::string text;
            for (const auto& w : words) {
                if (!text.empty()) text += ' ';
                text += w;
            }
            text += ". Answer: ";
            text += tr.predicted_index ? std::string(1, static_cast<char>('A' + *tr.predicted_index)) : "none";
            text += '.';
            tr.final_response = std::move(text);

            std::uint64_t raw = 1;
            for (int k = 0; k < 9; ++k) raw += rng.bernoulli(g.quality) ? 1 : 0;
            out.scores[inst.id] = ScoreEntry{static_cast<double>(raw), (static_cast<double>(raw) - 1.0) / 9.0, "simulator", ""};

            out.instances.push_back(std::move(inst));
            out.trajectories.push_back(std::move(tr));
        }
    }
    return out;
}

/// Exact P(first) - P(second) from the configured chains.
inline Matrix<double> expected_transition_delta(const SimConfig& config, const std::string& first,
                                                const std::string& second) {
    const auto& a = config.group(first).chain;
    const auto& b = config.group(second).chain;
    Matrix<double> d(a.rows(), a.cols(), 0.0);
    for (std::size_t r = 0; r < a.rows(); ++r) {
        for (std::size_t c = 0; c < a.cols(); ++c) d(r, c) = a(r, c) - b(r, c);
    }
    return d;
}

/// Categorical grouping that maps each group's attribute value to its label.
inline Grouping simulation_grouping(const SimConfig& config) {
    CategoricalRule rule;
    std::vector<std::string> labels;
    for (const auto& g : config.groups) {
        rule.value_to_label[to_string(g.attribute_value)] = g.label;
        labels.push_back(g.label);
    }
    return Grouping(config.attribute, rule, labels);
}

/// Writes dataset.json, trajectories.jsonl, scores.json and grouping.json.
inline void write_simulation(const SimOutput& sim, const SimConfig& config, const std::filesystem::path& dir) {
    std::filesystem::create_directories(dir);
    auto write = [&](const char* name, const std::string& content) {
        std::ofstream f(dir / name, std::ios::binary | std::ios::trunc);
        if (!f) throw InputError("cannot write " + (dir / name).string());
        f << content;
    };
    write("dataset.json", serialize_dataset(sim.instances));
    write("trajectories.jsonl", serialize_trajectory_log(sim.trajectories));
    write("scores.json", serialize_scores(sim.scores));
    write("grouping.json", to_json(simulation_grouping(config)).dump(1) + "\n");
}

// ---------------------------------------------------------------------------
// JSON config
// ---------------------------------------------------------------------------

inline SimConfig sim_config_from_json(const nlohmann::json& j) {
    if (!j.is_object()) throw InputError("simulator config must be a JSON object");
    SimConfig c;
    try {
        c.seed = j.value("seed", c.seed);
        c.n_per_group = j.value("n_per_group", c.n_per_group);
        c.attribute = j.value("attribute", c.attribute);
        c.tools = j.value("tools", c.tools);
        c.n_options = j.value("n_options", c.n_options);
        c.max_length = j.value("max_length", c.max_length);
        c.inject_demo = j.value("inject_demo", c.inject_demo);
        c.driver_id = j.value("driver_id", c.driver_id);
        if (j.contains("hedge_terms")) c.hedge_lexicon = Lexicon("hedge", j["hedge_terms"].get<std::vector<std::string>>());
        if (j.contains("demo_terms")) c.demo_lexicon = Lexicon("demographic", j["demo_terms"].get<std::vector<std::string>>());
        ToolVocabulary vocab(c.tools);
        const std::size_t V = vocab.size();
        if (!j.contains("groups") || !j["groups"].is_array()) throw InputError("simulator config: 'groups' array required");
        for (const auto& gj : j["groups"]) {
            SimGroup g;
            g.label = gj.at("label").get<std::string>();
            const auto& av = gj.contains("attribute_value") ? gj["attribute_value"] : gj["label"];
            if (av.is_number()) {
                g.attribute_value = av.get<double>();
            } else {
                g.attribute_value = av.get<std::string>();
            }
            g.chain = Matrix<double>(V + 1, V + 1, 0.0);
            for (const auto& [from, row] : gj.at("chain").items()) {
                std::size_t r = 0;
                if (from != start_state) {
                    auto t = vocab.index_of(from);
                    if (!t) throw InputError("simulator group '" + g.label + "': unknown chain state '" + from + "'");
                    r = *t + 1;
                }
                for (const auto& [to, p] : row.items()) {
                    std::size_t col = V;
                    if (to != end_state) {
                        auto t = vocab.index_of(to);
                        if (!t) throw InputError("simulator group '" + g.label + "': unknown chain target '" + to + "'");
                        col = *t;
                    }
                    g.chain(r, col) = p.get<double>();
                }
            }
            if (gj.contains("correctness")) {
                const auto& cj = gj["correctness"];
                g.default_correct = cj.value("default", g.default_correct);
                if (cj.contains("rules")) {
                    for (const auto& rj : cj["rules"]) {
                        g.rules.push_back({rj.at("requires").get<std::vector<std::string>>(), rj.at("p").get<double>()});
                    }
                }
            }
            g.abstain_rate = gj.value("abstain_rate", g.abstain_rate);
            g.hedge_rate = gj.value("hedge_rate", g.hedge_rate);
            g.demo_rate = gj.value("demo_rate", g.demo_rate);
            g.quality = gj.value("quality", g.quality);
            c.groups.push_back(std::move(g));
        }
    } catch (const nlohmann::json::exception& e) {
        throw InputError(std::string("simulator config: ") + e.what());
    }
    validate(c);
    return c;
}

inline SimConfig load_sim_config(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw InputError("cannot read simulator config: " + path);
    try {
        return sim_config_from_json(nlohmann::json::parse(in));
    } catch (const nlohmann::json::parse_error& e) {
        throw InputError("simulator config " + path + ": " + e.what());
    }
}

/// Two gender groups with identical behaviour except where noted by callers.
inline SimConfig default_sim_config() {
    SimConfig c;
    c.n_per_group = 500;
    const std::size_t V = c.tools.size();
    auto chain = [&](double start_cls) {
        Matrix<double> m(V + 1, V + 1, 0.0);
        // START: CLS, QA, RG, SEG, VIS, GRD, END
        double rest = 1.0 - start_cls - 0.05;
        m(0, 0) = start_cls;
        m(0, 1) = rest * 0.1;
        m(0, 2) = rest * 0.3;
        m(0, 3) = rest * 0.3;
        m(0, 4) = rest * 0.2;
        m(0, 5) = rest * 0.1;
        m(0, 6) = 0.05;
        for (std::size_t t = 1; t <= V; ++t) {
            for (std::size_t c2 = 0; c2 < V; ++c2) m(t, c2) = 0.6 / static_cast<double>(V);
            m(t, V) = 0.4;
        }
        return m;
    };
    SimGroup f{"Female", std::string("F"), chain(0.4), {{{"SEG"}, 0.7}}, 0.6, 0.0, 1.0, 0.2, 0.7};
    SimGroup m{"Male", std::string("M"), chain(0.4), {{{"SEG"}, 0.7}}, 0.6, 0.0, 1.0, 0.2, 0.7};
    c.groups = {f, m};
    return c;
}

}  // namespace agentaudit
