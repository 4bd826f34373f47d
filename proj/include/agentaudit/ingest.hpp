#pragma once

// Dataset (JSON) and trajectory log (JSON Lines) readers/writers, and the join
// that turns them into an AuditSet.

#include <algorithm>
#include <fstream>
#include <iterator>
#include <set>
#include <sstream>
#include <string>
#include <tuple>
#include <vector>

#include <nlohmann/json.hpp>

#include "agentaudit/core.hpp"

namespace agentaudit {

inline constexpr const char* schema_version = "1";

struct IngestOptions {
    /// Observation digests are cut to this many bytes at parse time.
    std::size_t digest_byte_limit = 1024;
    /// Malformed log lines tolerated (collected as warnings) before failing.
    std::size_t max_malformed = 0;
    ToolVocabulary vocabulary;
};

struct TrajectoryLog {
    std::vector<TrajectoryRecord> records;
    std::vector<std::string> warnings;
    std::size_t n_malformed = 0;
};

struct IngestReport {
    std::size_t n_instances = 0;
    std::size_t n_trajectories = 0;
    std::size_t n_joined = 0;
    std::size_t n_unmatched_trajectories = 0;
    std::size_t n_unmappable_instances = 0;
    std::vector<std::string> warnings;
};

namespace detail {

inline std::string read_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw InputError("cannot read file: " + path);
    return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

/// Cut to at most `limit` bytes without splitting a UTF-8 sequence.
inline std::string truncate_utf8(const std::string& s, std::size_t limit) {
    if (s.size() <= limit) return s;
    std::size_t cut = limit;
    while (cut > 0 && (static_cast<unsigned char>(s[cut]) & 0xC0) == 0x80) --cut;
    return s.substr(0, cut);
}

inline const nlohmann::json& require(const nlohmann::json& obj, const char* field, const std::string& where) {
    auto it = obj.find(field);
    if (it == obj.end()) throw InputError(where + ": missing field '" + field + "'");
    return *it;
}

inline std::string require_string(const nlohmann::json& obj, const char* field, const std::string& where) {
    const auto& v = require(obj, field, where);
    if (!v.is_string()) throw InputError(where + ": field '" + field + "' must be a string");
    return v.get<std::string>();
}

inline int require_int(const nlohmann::json& obj, const char* field, const std::string& where) {
    const auto& v = require(obj, field, where);
    if (!v.is_number_integer()) throw InputError(where + ": field '" + field + "' must be an integer");
    return v.get<int>();
}

inline void check_schema_version(const nlohmann::json& v, const std::string& where) {
    std::string version = v.is_string() ? v.get<std::string>() : v.dump();
    if (version != schema_version) {
        throw InputError(where + ": unsupported schema_version " + version + " (expected \"1\")");
    }
}

inline Instance instance_from_json(const nlohmann::json& j, const std::string& where) {
    if (!j.is_object()) throw InputError(where + ": record must be an object");
    Instance inst;
    inst.id = require_string(j, "id", where);
    inst.image_ref = require_string(j, "image_ref", where);
    inst.question = require_string(j, "question", where);
    const auto& opts = require(j, "options", where);
    if (!opts.is_array()) throw InputError(where + ": field 'options' must be an array");
    for (const auto& o : opts) {
        if (!o.is_string()) throw InputError(where + ": field 'options' must contain strings");
        inst.options.push_back(o.get<std::string>());
    }
    inst.truth_index = require_int(j, "truth_index", where);
    const auto& attrs = require(j, "attributes", where);
    if (!attrs.is_object()) throw InputError(where + ": field 'attributes' must be an object");
    for (const auto& [name, value] : attrs.items()) {
        if (value.is_string()) {
            inst.attributes[name] = value.get<std::string>();
        } else if (value.is_number()) {
            inst.attributes[name] = value.get<double>();
        } else if (!value.is_null()) {
            throw InputError(where + ": attribute '" + name + "' must be a string or number");
        }
    }
    try {
        validate(inst);
    } catch (const InputError& e) {
        throw InputError(where + ": " + e.what());
    }
    return inst;
}

inline nlohmann::json to_json(const Instance& inst) {
    nlohmann::json attrs = nlohmann::json::object();
    for (const auto& [name, value] : inst.attributes) {
        if (const auto* s = std::get_if<std::string>(&value)) {
            attrs[name] = *s;
        } else {
            attrs[name] = std::get<double>(value);
        }
    }
    return {{"id", inst.id},
            {"image_ref", inst.image_ref},
            {"question", inst.question},
            {"options", inst.options},
            {"truth_index", inst.truth_index},
            {"attributes", attrs}};
}

inline TrajectoryRecord trajectory_from_json(const nlohmann::json& j, const std::string& where,
                                             const IngestOptions& options) {
    if (!j.is_object()) throw InputError(where + ": record must be an object");
    TrajectoryRecord rec;
    rec.instance_id = require_string(j, "instance_id", where);
    rec.driver_id = require_string(j, "driver_id", where);
    if (auto it = j.find("initial_context_digest"); it != j.end() && !it->is_null()) {
        if (!it->is_string()) throw InputError(where + ": field 'initial_context_digest' must be a string");
        rec.initial_context_digest = it->get<std::string>();
    }
    const auto& calls = require(j, "calls", where);
    if (!calls.is_array()) throw InputError(where + ": field 'calls' must be an array");
    for (std::size_t c = 0; c < calls.size(); ++c) {
        std::string cw = where + ", call " + std::to_string(c);
        ToolCall call;
        call.step_index = require_int(calls[c], "step", cw);
        call.tool = ToolId(require_string(calls[c], "tool", cw));
        if (auto it = calls[c].find("observation_digest"); it != calls[c].end() && !it->is_null()) {
            if (!it->is_string()) throw InputError(cw + ": field 'observation_digest' must be a string");
            call.observation_digest = truncate_utf8(it->get<std::string>(), options.digest_byte_limit);
        }
        rec.calls.push_back(std::move(call));
    }
    rec.final_response = require_string(j, "final_response", where);

    bool abstain = false;
    if (auto it = j.find("abstain"); it != j.end()) {
        if (!it->is_boolean()) throw InputError(where + ": field 'abstain' must be a boolean");
        abstain = it->get<bool>();
    }
    auto pred = j.find("predicted_index");
    bool has_pred = pred != j.end() && !pred->is_null();
    if (abstain && has_pred) throw InputError(where + ": both 'predicted_index' and 'abstain' given");
    if (!abstain && !has_pred) throw InputError(where + ": needs 'predicted_index' or \"abstain\": true");
    if (has_pred) {
        if (!pred->is_number_integer()) throw InputError(where + ": field 'predicted_index' must be an integer");
        rec.predicted_index = pred->get<int>();
    }
    try {
        validate(rec);
    } catch (const InputError& e) {
        throw InputError(where + ": " + e.what());
    }
    return rec;
}

inline nlohmann::json to_json(const TrajectoryRecord& rec) {
    nlohmann::json calls = nlohmann::json::array();
    for (const auto& c : rec.calls) {
        calls.push_back({{"step", c.step_index}, {"tool", c.tool.name}, {"observation_digest", c.observation_digest}});
    }
    nlohmann::json j = {{"instance_id", rec.instance_id},
                        {"driver_id", rec.driver_id},
                        {"initial_context_digest", rec.initial_context_digest},
                        {"calls", calls},
                        {"final_response", rec.final_response}};
    if (rec.predicted_index) {
        j["predicted_index"] = *rec.predicted_index;
    } else {
        j["abstain"] = true;
    }
    return j;
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Dataset
// ---------------------------------------------------------------------------

/// Accepts either a bare array of instance objects or the versioned form
/// {"schema_version": "1", "instances": [...]}.
inline std::vector<Instance> parse_dataset_text(const std::string& text) {
    nlohmann::json doc;
    try {
        doc = nlohmann::json::parse(text);
    } catch (const nlohmann::json::parse_error& e) {
        throw InputError(std::string("dataset is not valid JSON: ") + e.what());
    }
    const nlohmann::json* array = &doc;
    if (doc.is_object()) {
        detail::check_schema_version(detail::require(doc, "schema_version", "dataset"), "dataset");
        array = &detail::require(doc, "instances", "dataset");
    }
    if (!array->is_array()) throw InputError("dataset must be a JSON array of instances");
    if (array->empty()) throw InputError("dataset: no instances");

    std::vector<Instance> out;
    out.reserve(array->size());
    std::set<std::string> seen;
    for (std::size_t i = 0; i < array->size(); ++i) {
        std::string where = "dataset record " + std::to_string(i);
        Instance inst = detail::instance_from_json((*array)[i], where);
        if (!seen.insert(inst.id).second) throw InputError(where + ": duplicate id '" + inst.id + "'");
        out.push_back(std::move(inst));
    }
    return out;
}

inline std::vector<Instance> parse_dataset(const std::string& path) {
    return parse_dataset_text(detail::read_file(path));
}

inline std::string serialize_dataset(const std::vector<Instance>& instances) {
    nlohmann::json arr = nlohmann::json::array();
    for (const auto& inst : instances) arr.push_back(detail::to_json(inst));
    nlohmann::json doc = {{"schema_version", schema_version}, {"instances", std::move(arr)}};
    return doc.dump(1) + "\n";
}

// ---------------------------------------------------------------------------
// Trajectory log
// ---------------------------------------------------------------------------

/// One JSON object per line. An optional first line {"schema_version": "1"}
/// declares the version. Out-of-vocabulary tools are kept and reported.
inline TrajectoryLog parse_trajectory_log(std::istream& in, const IngestOptions& options = {}) {
    TrajectoryLog log;
    std::string line;
    std::size_t line_no = 0;
    bool seen_content = false;
    while (std::getline(in, line)) {
        ++line_no;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (detail::trim(line).empty()) continue;
        std::string where = "log line " + std::to_string(line_no);
        try {
            nlohmann::json j;
            try {
                j = nlohmann::json::parse(line);
            } catch (const nlohmann::json::parse_error&) {
                throw InputError(where + ": not valid JSON");
            }
            if (!seen_content && j.is_object() && j.contains("schema_version") && !j.contains("instance_id")) {
                seen_content = true;
                detail::check_schema_version(j["schema_version"], where);
                continue;
            }
            seen_content = true;
            TrajectoryRecord rec = detail::trajectory_from_json(j, where, options);
            for (const auto& call : rec.calls) {
                if (!options.vocabulary.contains(call.tool.name)) {
                    log.warnings.push_back(where + ": tool '" + call.tool.name + "' not in vocabulary");
                }
            }
            log.records.push_back(std::move(rec));
        } catch (const InputError& e) {
            // A wrong schema version is fatal regardless of the malformed budget.
            if (std::string_view(e.what()).find("schema_version") != std::string_view::npos) throw;
            ++log.n_malformed;
            log.warnings.push_back(std::string("malformed ") + e.what());
            if (log.n_malformed > options.max_malformed) {
                throw InputError(std::string(e.what()) + " (malformed lines exceed limit of " +
                                 std::to_string(options.max_malformed) + ")");
            }
        }
    }
    return log;
}

inline TrajectoryLog parse_trajectory_log(const std::string& path, const IngestOptions& options = {}) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw InputError("cannot read trajectory log: " + path);
    return parse_trajectory_log(in, options);
}

inline TrajectoryLog parse_trajectory_log_text(const std::string& text, const IngestOptions& options = {}) {
    std::istringstream in(text);
    return parse_trajectory_log(in, options);
}

inline std::string serialize_trajectory_log(const std::vector<TrajectoryRecord>& records) {
    std::string out = nlohmann::json{{"schema_version", schema_version}}.dump() + "\n";
    for (const auto& rec : records) out += detail::to_json(rec).dump() + "\n";
    return out;
}

// ---------------------------------------------------------------------------
// Grouping files
// ---------------------------------------------------------------------------

/// {"attribute": "...", "labels": [...], "categorical": {value: label}} or
/// {"attribute": "...", "labels": [lo, hi], "threshold": c}.
inline Grouping grouping_from_json(const nlohmann::json& j) {
    const std::string where = "grouping";
    if (!j.is_object()) throw InputError("grouping must be a JSON object");
    std::string attribute = detail::require_string(j, "attribute", where);
    const auto& labels_json = detail::require(j, "labels", where);
    if (!labels_json.is_array()) throw InputError("grouping: 'labels' must be an array");
    std::vector<std::string> labels;
    for (const auto& l : labels_json) {
        if (!l.is_string()) throw InputError("grouping: labels must be strings");
        labels.push_back(l.get<std::string>());
    }
    bool has_cat = j.contains("categorical");
    bool has_thr = j.contains("threshold");
    if (has_cat == has_thr) throw InputError("grouping: give exactly one of 'categorical' or 'threshold'");
    if (has_thr) {
        if (!j["threshold"].is_number()) throw InputError("grouping: 'threshold' must be a number");
        return Grouping(attribute, ThresholdRule{j["threshold"].get<double>()}, labels);
    }
    if (!j["categorical"].is_object()) throw InputError("grouping: 'categorical' must be an object");
    CategoricalRule rule;
    for (const auto& [value, label] : j["categorical"].items()) {
        if (!label.is_string()) throw InputError("grouping: categorical labels must be strings");
        rule.value_to_label[value] = label.get<std::string>();
    }
    return Grouping(attribute, rule, labels);
}

inline Grouping parse_grouping(const std::string& path) {
    try {
        return grouping_from_json(nlohmann::json::parse(detail::read_file(path)));
    } catch (const nlohmann::json::exception& e) {
        throw InputError("grouping file " + path + ": " + e.what());
    }
}

inline nlohmann::json to_json(const Grouping& g) {
    nlohmann::json j = {{"attribute", g.attribute()}, {"labels", g.labels()}};
    if (const auto* cat = std::get_if<CategoricalRule>(&g.rule())) {
        j["categorical"] = cat->value_to_label;
    } else {
        j["threshold"] = std::get<ThresholdRule>(g.rule()).cut;
    }
    return j;
}

// ---------------------------------------------------------------------------
// Join
// ---------------------------------------------------------------------------

/// Inner join of trajectories to instances on instance_id (restricted to one
/// driver when `driver_filter` is set). Instances the grouping cannot place
/// are dropped and counted. Records come out sorted by (instance_id, driver_id),
/// so the result does not depend on input order.
inline std::pair<AuditSet, IngestReport> build_audit_set(const std::vector<Instance>& instances,
                                                         const std::vector<TrajectoryRecord>& trajectories,
                                                         const Grouping& grouping,
                                                         const std::optional<std::string>& driver_filter = std::nullopt,
                                                         const ToolVocabulary& vocabulary = {}) {
    if (instances.empty()) throw InputError("no instances to join");
    if (trajectories.empty()) throw InputError("no trajectories to join");

    IngestReport report;
    report.n_instances = instances.size();

    std::map<std::string, std::pair<const Instance*, std::optional<std::string>>> by_id;
    for (const auto& inst : instances) {
        GroupAssignment g = assign_group(inst, grouping);
        if (!by_id.emplace(inst.id, std::make_pair(&inst, g.label)).second) {
            throw InputError("duplicate instance id '" + inst.id + "'");
        }
        if (g.unmappable()) {
            ++report.n_unmappable_instances;
            report.warnings.push_back("instance '" + inst.id + "' excluded: " + g.reason);
        }
    }

    std::vector<const TrajectoryRecord*> selected;
    for (const auto& t : trajectories) {
        if (driver_filter && t.driver_id != *driver_filter) continue;
        selected.push_back(&t);
    }
    report.n_trajectories = selected.size();
    std::sort(selected.begin(), selected.end(), [](const auto* a, const auto* b) {
        return std::tie(a->instance_id, a->driver_id) < std::tie(b->instance_id, b->driver_id);
    });

    std::vector<std::string> duplicates;
    for (std::size_t i = 1; i < selected.size(); ++i) {
        if (selected[i]->instance_id == selected[i - 1]->instance_id &&
            selected[i]->driver_id == selected[i - 1]->driver_id &&
            (duplicates.empty() || duplicates.back() != selected[i]->instance_id + "/" + selected[i]->driver_id)) {
            duplicates.push_back(selected[i]->instance_id + "/" + selected[i]->driver_id);
        }
    }
    if (!duplicates.empty()) {
        throw InputError("multiple trajectories for (instance, driver): " + detail::join(duplicates, ", "));
    }

    std::vector<AuditRecord> records;
    std::set<std::string> covered;
    for (const auto* t : selected) {
        auto it = by_id.find(t->instance_id);
        if (it == by_id.end()) {
            ++report.n_unmatched_trajectories;
            continue;
        }
        covered.insert(t->instance_id);
        const auto& [inst, label] = it->second;
        if (!label) continue;
        AuditRecord rec;
        rec.instance = *inst;
        rec.trajectory = *t;
        rec.group_label = *label;
        records.push_back(std::move(rec));
    }
    if (report.n_unmatched_trajectories > 0) {
        report.warnings.push_back(std::to_string(report.n_unmatched_trajectories) +
                                  " trajectories reference unknown instances");
    }
    std::size_t uncovered = 0;
    for (const auto& [id, entry] : by_id) {
        if (entry.second && !covered.count(id)) ++uncovered;
    }
    if (uncovered > 0) {
        report.warnings.push_back(std::to_string(uncovered) + " instances have no trajectory");
    }
    for (const auto& r : records) {
        for (const auto& call : r.trajectory.calls) {
            if (!vocabulary.contains(call.tool.name)) {
                report.warnings.push_back("record '" + r.instance.id + "': tool '" + call.tool.name +
                                          "' not in vocabulary, ignored by tool metrics");
            }
        }
    }
    if (records.empty()) throw InputError("join produced no records");
    report.n_joined = records.size();
    return {AuditSet(std::move(records), grouping, vocabulary), std::move(report)};
}

}  // namespace agentaudit
