#pragma once

// Response-level features and their subgroup gaps (max group mean minus min
// group mean). Features read the final response text only.

#include <algorithm>
#include <cmath>
#include <fstream>
#include <functional>
#include <limits>
#include <map>
#include <set>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "agentaudit/core.hpp"

namespace agentaudit {

/// Lower-cased tokens split at every non-alphanumeric ASCII byte. Bytes >= 0x80
/// are kept inside tokens so UTF-8 words are not split.
inline std::vector<std::string> tokenize(std::string_view text) {
    std::vector<std::string> tokens;
    std::string cur;
    for (char ch : text) {
        auto c = static_cast<unsigned char>(ch);
        if (std::isalnum(c) || c >= 0x80) {
            cur.push_back(static_cast<char>(std::tolower(c)));
        } else if (!cur.empty()) {
            tokens.push_back(std::move(cur));
            cur.clear();
        }
    }
    if (!cur.empty()) tokens.push_back(std::move(cur));
    return tokens;
}

/// A named set of whole-word terms. A term may span several tokens
/// ("no evidence"), in which case it matches that exact token sequence.
class Lexicon {
public:
    Lexicon(std::string name, const std::vector<std::string>& terms) : name_(std::move(name)) {
        if (terms.empty()) throw InputError("lexicon '" + name_ + "' has no terms");
        std::set<std::string> seen;
        for (const auto& raw : terms) {
            std::string term = detail::to_lower_ascii(detail::trim(raw));
            auto toks = tokenize(term);
            if (toks.empty()) throw InputError("lexicon '" + name_ + "': term '" + raw + "' has no word characters");
            if (!seen.insert(detail::join(toks, " ")).second) {
                throw InputError("lexicon '" + name_ + "': duplicate term '" + raw + "'");
            }
            terms_.push_back(detail::join(toks, " "));
            token_terms_.push_back(std::move(toks));
        }
    }

    /// may, might, possibly, likely, appears
    static Lexicon hedge() { return Lexicon("hedge", {"may", "might", "possibly", "likely", "appears"}); }
    /// male, female, elderly, young
    static Lexicon demographic() { return Lexicon("demographic", {"male", "female", "elderly", "young"}); }

    const std::string& name() const { return name_; }
    const std::vector<std::string>& terms() const { return terms_; }
    const std::vector<std::vector<std::string>>& token_terms() const { return token_terms_; }

    bool contains_token(std::string_view token) const {
        for (const auto& t : token_terms_) {
            if (std::find(t.begin(), t.end(), token) != t.end()) return true;
        }
        return false;
    }

private:
    std::string name_;
    std::vector<std::string> terms_;
    std::vector<std::vector<std::string>> token_terms_;
};

/// One term per line; blank lines and lines starting with '#' are ignored.
inline Lexicon load_lexicon(const std::string& path, std::string name = {}) {
    std::ifstream in(path);
    if (!in) throw InputError("cannot read lexicon file: " + path);
    std::vector<std::string> terms;
    std::string line;
    while (std::getline(in, line)) {
        std::string t = detail::trim(line);
        if (t.empty() || t.front() == '#') continue;
        terms.push_back(t);
    }
    if (name.empty()) name = path;
    return Lexicon(std::move(name), terms);
}

/// Case-insensitive whole-word occurrences of any lexicon term, counting
/// multiplicity.
inline std::size_t count_lexicon(const std::vector<std::string>& tokens, const Lexicon& lexicon) {
    std::size_t n = 0;
    for (std::size_t i = 0; i < tokens.size(); ++i) {
        for (const auto& term : lexicon.token_terms()) {
            if (i + term.size() > tokens.size()) continue;
            if (std::equal(term.begin(), term.end(), tokens.begin() + static_cast<std::ptrdiff_t>(i))) ++n;
        }
    }
    return n;
}

inline std::size_t count_lexicon(std::string_view text, const Lexicon& lexicon) {
    return count_lexicon(tokenize(text), lexicon);
}

// ---------------------------------------------------------------------------
// Feature gap
// ---------------------------------------------------------------------------

using RecordFeature = std::function<double(const AuditRecord&)>;

/// Feature values computed once per stored record, indexed by AuditRecord::key.
/// Resamples of the same audit set reuse the column.
struct FeatureColumn {
    std::string name;
    std::vector<double> values;

    double operator()(const AuditRecord& r) const { return values.at(r.key); }
};

inline FeatureColumn make_feature_column(const AuditSet& audit, std::string name, const RecordFeature& feature) {
    FeatureColumn col{std::move(name), std::vector<double>(audit.storage_size(), std::numeric_limits<double>::quiet_NaN())};
    for (const auto& r : audit) col.values[r.key] = feature(r);
    return col;
}

struct GroupMean {
    std::string label;
    std::size_t n = 0;
    double mean = 0.0;
};

struct FeatureGapResult {
    std::string feature;
    std::vector<GroupMean> groups;
    double gap = 0.0;
    std::string argmax_label;
    std::string argmin_label;
};

/// Subgroup means of `feature` and their max - min spread. Ties resolve to the
/// group listed first.
inline FeatureGapResult feature_gap(const AuditSet& audit, const std::string& name, const RecordFeature& feature) {
    FeatureGapResult out;
    out.feature = name;
    out.groups.resize(audit.group_count());
    std::vector<double> sums(audit.group_count(), 0.0);
    for (std::size_t g = 0; g < out.groups.size(); ++g) out.groups[g].label = audit.group_labels()[g];
    for (const auto& r : audit) {
        double v = feature(r);
        if (!std::isfinite(v)) {
            throw InputError("feature '" + name + "' is not finite for record '" + r.instance.id + "'");
        }
        ++out.groups[r.group_index].n;
        sums[r.group_index] += v;
    }
    if (out.groups.size() < 2) throw EmptySelectionError("at least two groups are required");
    std::size_t hi = 0, lo = 0;
    for (std::size_t g = 0; g < out.groups.size(); ++g) {
        auto& gm = out.groups[g];
        if (gm.n == 0) throw EmptySelectionError("group '" + gm.label + "' is empty");
        gm.mean = sums[g] / static_cast<double>(gm.n);
        if (gm.mean > out.groups[hi].mean) hi = g;
        if (gm.mean < out.groups[lo].mean) lo = g;
    }
    out.gap = out.groups[hi].mean - out.groups[lo].mean;
    out.argmax_label = out.groups[hi].label;
    out.argmin_label = out.groups[lo].label;
    return out;
}

inline FeatureGapResult feature_gap(const AuditSet& audit, const FeatureColumn& column) {
    return feature_gap(audit, column.name, std::cref(column));
}

inline RecordFeature lexicon_feature(Lexicon lexicon) {
    return [lex = std::move(lexicon)](const AuditRecord& r) {
        return static_cast<double>(count_lexicon(r.trajectory.final_response, lex));
    };
}

/// Lexicon hits per 100 tokens of the response (0 for an empty response).
inline RecordFeature lexicon_rate_feature(Lexicon lexicon) {
    return [lex = std::move(lexicon)](const AuditRecord& r) {
        auto toks = tokenize(r.trajectory.final_response);
        if (toks.empty()) return 0.0;
        return 100.0 * static_cast<double>(count_lexicon(toks, lex)) / static_cast<double>(toks.size());
    };
}

inline FeatureGapResult hedge_gap(const AuditSet& audit, const Lexicon& lexicon = Lexicon::hedge()) {
    return feature_gap(audit, "hedge", lexicon_feature(lexicon));
}

inline FeatureGapResult demo_gap(const AuditSet& audit, const Lexicon& lexicon = Lexicon::demographic()) {
    return feature_gap(audit, "demo", lexicon_feature(lexicon));
}

// ---------------------------------------------------------------------------
// Judge scores
// ---------------------------------------------------------------------------

/// One entry of a score file.
struct ScoreEntry {
    double raw = 0.0;
    double normalized = 0.0;
    std::string judge_model;
    std::string prompt_hash;

    bool operator==(const ScoreEntry&) const = default;
};

using ScoreMap = std::map<std::string, ScoreEntry>;

inline std::string serialize_scores(const ScoreMap& scores) {
    nlohmann::json j = nlohmann::json::object();
    for (const auto& [id, s] : scores) {
        j[id] = {{"raw", s.raw}, {"normalized", s.normalized}, {"judge_model", s.judge_model}, {"prompt_hash", s.prompt_hash}};
    }
    return j.dump(1) + "\n";
}

inline ScoreMap parse_scores_text(const std::string& text) {
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(text);
    } catch (const nlohmann::json::parse_error& e) {
        throw InputError(std::string("score file is not valid JSON: ") + e.what());
    }
    if (!j.is_object()) throw InputError("score file must be a JSON object keyed by instance_id");
    ScoreMap out;
    for (const auto& [id, v] : j.items()) {
        if (!v.is_object() || !v.contains("normalized") || !v["normalized"].is_number()) {
            throw InputError("score file entry '" + id + "' needs a numeric 'normalized'");
        }
        ScoreEntry e;
        e.normalized = v["normalized"].get<double>();
        e.raw = v.value("raw", e.normalized);
        e.judge_model = v.value("judge_model", std::string{});
        e.prompt_hash = v.value("prompt_hash", std::string{});
        out.emplace(id, std::move(e));
    }
    return out;
}

inline ScoreMap parse_scores(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw InputError("cannot read score file: " + path);
    return parse_scores_text({std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()});
}

/// Instance ids of the audit set, requiring each id to occur once (scores are
/// keyed by instance, so pooled multi-driver sets must be filtered first).
inline void require_one_record_per_instance(const AuditSet& audit) {
    std::set<std::string> seen;
    for (const auto& r : audit) {
        if (!seen.insert(r.instance.id).second) {
            throw InputError("instance '" + r.instance.id +
                             "' has several trajectories; judge scores need a single driver (use --driver)");
        }
    }
}

/// Judge-score column over normalized scores in [0, 1]. Every record must
/// have a score; missing ids are listed in the error.
inline FeatureColumn judge_score_column(const AuditSet& audit, const std::map<std::string, double>& scores) {
    require_one_record_per_instance(audit);
    std::vector<std::string> missing;
    for (const auto& r : audit) {
        auto it = scores.find(r.instance.id);
        if (it == scores.end()) {
            missing.push_back(r.instance.id);
        } else if (!(it->second >= 0.0 && it->second <= 1.0)) {
            throw InputError("judge score for '" + r.instance.id + "' outside [0, 1]");
        }
    }
    if (!missing.empty()) throw InputError("missing judge scores for: " + detail::join(missing, ", "));
    return make_feature_column(audit, "judge", [&](const AuditRecord& r) { return scores.at(r.instance.id); });
}

inline FeatureGapResult judge_gap(const AuditSet& audit, const std::map<std::string, double>& scores) {
    return feature_gap(audit, judge_score_column(audit, scores));
}

inline std::map<std::string, double> normalized_scores(const ScoreMap& scores) {
    std::map<std::string, double> out;
    for (const auto& [id, e] : scores) out[id] = e.normalized;
    return out;
}

}  // namespace agentaudit
