#pragma once

// Domain model shared by every audit module: benchmark instances, agent
// trajectories, demographic groupings and the joined audit set.

#include <algorithm>
#include <cctype>
#include <charconv>
#include <cmath>
#include <cstdint>
#include <iterator>
#include <map>
#include <memory>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <utility>
#include <variant>
#include <vector>

namespace agentaudit {

// ---------------------------------------------------------------------------
// Errors
// ---------------------------------------------------------------------------

/// Process exit codes used by the command line tool.
enum class ExitCode : int {
    ok = 0,
    input_error = 2,
    judge_failure = 3,
    infeasible_statistics = 4,
};

class AuditError : public std::runtime_error {
public:
    AuditError(ExitCode code, const std::string& what) : std::runtime_error(what), code_(code) {}
    ExitCode code() const noexcept { return code_; }

private:
    ExitCode code_;
};

/// Malformed or inconsistent input files.
class InputError : public AuditError {
public:
    explicit InputError(const std::string& what) : AuditError(ExitCode::input_error, what) {}
};

/// Statistics that cannot be computed on the data at hand.
class InfeasibleError : public AuditError {
public:
    explicit InfeasibleError(const std::string& what)
        : AuditError(ExitCode::infeasible_statistics, what) {}
};

/// A metric was asked to condition on an empty selection (empty group,
/// no exposed records, no contributing rate terms). The bootstrap engine
/// treats this as a signal to redraw the resample.
class EmptySelectionError : public InfeasibleError {
public:
    using InfeasibleError::InfeasibleError;
};

// ---------------------------------------------------------------------------
// Small string helpers
// ---------------------------------------------------------------------------

namespace detail {

inline std::string to_lower_ascii(std::string_view s) {
    std::string out(s);
    for (char& c : out) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
    return out;
}

inline std::string trim(std::string_view s) {
    auto is_space = [](char c) { return std::isspace(static_cast<unsigned char>(c)) != 0; };
    while (!s.empty() && is_space(s.front())) s.remove_prefix(1);
    while (!s.empty() && is_space(s.back())) s.remove_suffix(1);
    return std::string(s);
}

inline std::optional<double> parse_double(std::string_view s) {
    std::string t = trim(s);
    if (t.empty()) return std::nullopt;
    double v = 0.0;
    auto [ptr, ec] = std::from_chars(t.data(), t.data() + t.size(), v);
    if (ec != std::errc{} || ptr != t.data() + t.size()) return std::nullopt;
    return v;
}

/// Shortest representation that parses back to the same double.
inline std::string format_double(double v) {
    char buf[64];
    auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, v);
    return std::string(buf, ptr);
}

inline std::string join(const std::vector<std::string>& parts, std::string_view sep) {
    std::string out;
    for (std::size_t i = 0; i < parts.size(); ++i) {
        if (i) out += sep;
        out += parts[i];
    }
    return out;
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Instances and trajectories
// ---------------------------------------------------------------------------

/// Raw sensitive-attribute value as found in the dataset file.
using AttributeValue = std::variant<std::string, double>;

inline std::string to_string(const AttributeValue& v) {
    if (const auto* s = std::get_if<std::string>(&v)) return *s;
    double d = std::get<double>(v);
    if (std::isfinite(d) && d == std::floor(d) && std::fabs(d) < 1e15) {
        return std::to_string(static_cast<long long>(d));
    }
    return detail::format_double(d);
}

/// One benchmark item: an image reference, a K-option question, the correct
/// option and the patient attributes.
struct Instance {
    std::string id;
    std::string image_ref;
    std::string question;
    std::vector<std::string> options;
    int truth_index = 0;
    std::map<std::string, AttributeValue> attributes;

    std::size_t option_count() const { return options.size(); }
    bool operator==(const Instance&) const = default;
};

/// Throws InputError when the instance violates K >= 2 or the truth bound.
inline void validate(const Instance& inst) {
    if (inst.id.empty()) throw InputError("instance has an empty id");
    if (inst.options.size() < 2) {
        throw InputError("instance '" + inst.id + "': needs at least 2 options, got " +
                         std::to_string(inst.options.size()));
    }
    if (inst.truth_index < 0 || static_cast<std::size_t>(inst.truth_index) >= inst.options.size()) {
        throw InputError("instance '" + inst.id + "': truth_index " + std::to_string(inst.truth_index) +
                         " outside [0, " + std::to_string(inst.options.size()) + ")");
    }
}

/// Canonical tool name.
struct ToolId {
    std::string name;

    ToolId() = default;
    explicit ToolId(std::string n) : name(std::move(n)) {}
    auto operator<=>(const ToolId&) const = default;
};

/// The fixed, ordered tool set of one audit run.
class ToolVocabulary {
public:
    static constexpr std::size_t max_size = 64;

    ToolVocabulary() : ToolVocabulary(default_names()) {}

    explicit ToolVocabulary(std::vector<std::string> names) : names_(std::move(names)) {
        if (names_.empty()) throw InputError("tool vocabulary is empty");
        if (names_.size() > max_size) throw InputError("tool vocabulary exceeds 64 tools");
        for (std::size_t i = 0; i < names_.size(); ++i) {
            if (names_[i].empty()) throw InputError("tool vocabulary contains an empty name");
            for (std::size_t j = 0; j < i; ++j) {
                if (names_[i] == names_[j]) throw InputError("duplicate tool in vocabulary: " + names_[i]);
            }
        }
    }

    static std::vector<std::string> default_names() { return {"CLS", "QA", "RG", "SEG", "VIS", "GRD"}; }

    std::size_t size() const { return names_.size(); }
    const std::vector<std::string>& names() const { return names_; }
    const std::string& name(std::size_t i) const { return names_.at(i); }

    std::optional<std::size_t> index_of(std::string_view tool) const {
        for (std::size_t i = 0; i < names_.size(); ++i) {
            if (names_[i] == tool) return i;
        }
        return std::nullopt;
    }
    bool contains(std::string_view tool) const { return index_of(tool).has_value(); }

    bool operator==(const ToolVocabulary&) const = default;

private:
    std::vector<std::string> names_;
};

struct ToolCall {
    int step_index = 1;
    ToolId tool;
    std::string observation_digest;

    bool operator==(const ToolCall&) const = default;
};

/// One agent run on one instance. An empty `predicted_index` means the agent
/// abstained (no parseable option in its answer).
struct TrajectoryRecord {
    std::string instance_id;
    std::string driver_id;
    std::string initial_context_digest;
    std::vector<ToolCall> calls;
    std::string final_response;
    std::optional<int> predicted_index;

    std::size_t length() const { return calls.size(); }
    bool abstained() const { return !predicted_index.has_value(); }
    bool operator==(const TrajectoryRecord&) const = default;
};

/// Throws InputError when step indices are not >= 1 and strictly increasing.
inline void validate(const TrajectoryRecord& rec) {
    if (rec.instance_id.empty()) throw InputError("trajectory has an empty instance_id");
    int prev = 0;
    for (const auto& call : rec.calls) {
        if (call.step_index <= prev) {
            throw InputError("trajectory '" + rec.instance_id + "': step indices must be >= 1 and strictly increasing");
        }
        prev = call.step_index;
    }
    if (rec.predicted_index && *rec.predicted_index < 0) {
        throw InputError("trajectory '" + rec.instance_id + "': negative predicted_index");
    }
}

// ---------------------------------------------------------------------------
// Grouping
// ---------------------------------------------------------------------------

/// Explicit raw-value -> group-label map. Keys are matched after trimming and
/// lower-casing.
struct CategoricalRule {
    std::map<std::string, std::string> value_to_label;
    bool operator==(const CategoricalRule&) const = default;
};

/// Numeric cut: value < cut -> labels[0], value >= cut -> labels[1].
struct ThresholdRule {
    double cut = 0.0;
    bool operator==(const ThresholdRule&) const = default;
};

/// Result of placing an instance in a group.
struct GroupAssignment {
    std::optional<std::string> label;
    std::string reason;  // set when unmappable

    explicit operator bool() const { return label.has_value(); }
    bool unmappable() const { return !label.has_value(); }
};

class Grouping {
public:
    using Rule = std::variant<CategoricalRule, ThresholdRule>;

    Grouping(std::string attribute, Rule rule, std::vector<std::string> labels)
        : attribute_(std::move(attribute)), rule_(std::move(rule)), labels_(std::move(labels)) {
        if (attribute_.empty()) throw InputError("grouping attribute name is empty");
        if (labels_.size() < 2) throw InputError("grouping needs at least two labels");
        for (std::size_t i = 0; i < labels_.size(); ++i) {
            for (std::size_t j = 0; j < i; ++j) {
                if (labels_[i] == labels_[j]) throw InputError("duplicate group label: " + labels_[i]);
            }
        }
        if (auto* cat = std::get_if<CategoricalRule>(&rule_)) {
            CategoricalRule normalized;
            for (const auto& [value, label] : cat->value_to_label) {
                if (!index_of(label)) throw InputError("categorical rule maps to unknown label: " + label);
                normalized.value_to_label[detail::to_lower_ascii(detail::trim(value))] = label;
            }
            rule_ = std::move(normalized);
        } else if (labels_.size() != 2) {
            throw InputError("threshold grouping needs exactly two labels");
        }
    }

    /// {F, female} -> Female, {M, male} -> Male.
    static Grouping gender() {
        return Grouping("gender",
                        CategoricalRule{{{"f", "Female"}, {"female", "Female"}, {"m", "Male"}, {"male", "Male"}}},
                        {"Female", "Male"});
    }

    /// age < cut -> young, age >= cut -> old.
    static Grouping age(double cut = 60.0) { return Grouping("age", ThresholdRule{cut}, {"young", "old"}); }

    const std::string& attribute() const { return attribute_; }
    const Rule& rule() const { return rule_; }
    const std::vector<std::string>& labels() const { return labels_; }
    std::size_t size() const { return labels_.size(); }

    std::optional<std::size_t> index_of(std::string_view label) const {
        for (std::size_t i = 0; i < labels_.size(); ++i) {
            if (labels_[i] == label) return i;
        }
        return std::nullopt;
    }

    bool operator==(const Grouping&) const = default;

private:
    std::string attribute_;
    Rule rule_;
    std::vector<std::string> labels_;
};

inline GroupAssignment assign_group(const std::map<std::string, AttributeValue>& attributes,
                                    const Grouping& grouping) {
    auto it = attributes.find(grouping.attribute());
    if (it == attributes.end()) return {std::nullopt, "missing attribute '" + grouping.attribute() + "'"};

    if (const auto* cat = std::get_if<CategoricalRule>(&grouping.rule())) {
        std::string key = detail::to_lower_ascii(detail::trim(to_string(it->second)));
        auto hit = cat->value_to_label.find(key);
        if (hit == cat->value_to_label.end()) {
            return {std::nullopt, "value '" + to_string(it->second) + "' not in categorical map"};
        }
        return {hit->second, {}};
    }

    const auto& thr = std::get<ThresholdRule>(grouping.rule());
    std::optional<double> value;
    if (const auto* d = std::get_if<double>(&it->second)) {
        value = *d;
    } else {
        value = detail::parse_double(std::get<std::string>(it->second));
    }
    if (!value || std::isnan(*value)) {
        return {std::nullopt, "value '" + to_string(it->second) + "' is not numeric"};
    }
    return {grouping.labels()[*value < thr.cut ? 0 : 1], {}};
}

inline GroupAssignment assign_group(const Instance& instance, const Grouping& grouping) {
    return assign_group(instance.attributes, grouping);
}

// ---------------------------------------------------------------------------
// Audit set
// ---------------------------------------------------------------------------

/// One joined (instance, trajectory, group) triple plus values derived once at
/// construction so metrics and resamples never recompute them.
struct AuditRecord {
    Instance instance;
    TrajectoryRecord trajectory;
    std::string group_label;
    std::size_t group_index = 0;

    /// Position in the owning audit set's storage. Stable across resamples, so
    /// per-record feature columns can be indexed by it.
    std::size_t key = 0;
    /// Vocabulary indices of the in-vocabulary calls, in call order.
    std::vector<std::uint16_t> tool_path;
    /// Bit i set iff vocabulary tool i appears at least once.
    std::uint64_t tool_mask = 0;

    bool correct() const {
        return trajectory.predicted_index && *trajectory.predicted_index == instance.truth_index;
    }
    bool used(std::size_t tool_index) const { return (tool_mask >> tool_index) & 1u; }

    bool operator==(const AuditRecord& o) const {
        return instance == o.instance && trajectory == o.trajectory && group_label == o.group_label;
    }
};

/// Immutable joined data set. Copies and resamples share the record storage;
/// a resample is just a different row list over the same records.
class AuditSet {
    struct Storage {
        std::vector<AuditRecord> records;
        Grouping grouping;
        ToolVocabulary vocabulary;
    };

public:
    AuditSet(std::vector<AuditRecord> records, Grouping grouping, ToolVocabulary vocabulary) {
        if (records.empty()) throw InputError("audit set is empty");
        for (std::size_t i = 0; i < records.size(); ++i) {
            auto& r = records[i];
            auto g = grouping.index_of(r.group_label);
            if (!g) throw InputError("record '" + r.instance.id + "' has unknown group label '" + r.group_label + "'");
            r.group_index = *g;
            r.key = i;
            if (r.trajectory.predicted_index &&
                static_cast<std::size_t>(*r.trajectory.predicted_index) >= r.instance.options.size()) {
                throw InputError("trajectory for '" + r.instance.id + "' (driver '" + r.trajectory.driver_id +
                                 "'): predicted_index " + std::to_string(*r.trajectory.predicted_index) +
                                 " outside the instance's options");
            }
            r.tool_path.clear();
            r.tool_mask = 0;
            for (const auto& call : r.trajectory.calls) {
                if (auto t = vocabulary.index_of(call.tool.name)) {
                    r.tool_path.push_back(static_cast<std::uint16_t>(*t));
                    r.tool_mask |= std::uint64_t{1} << *t;
                }
            }
        }
        rows_.resize(records.size());
        for (std::size_t i = 0; i < rows_.size(); ++i) rows_[i] = static_cast<std::uint32_t>(i);
        storage_ = std::make_shared<const Storage>(
            Storage{std::move(records), std::move(grouping), std::move(vocabulary)});
    }

    class const_iterator {
    public:
        using iterator_category = std::forward_iterator_tag;
        using value_type = AuditRecord;
        using difference_type = std::ptrdiff_t;
        using pointer = const AuditRecord*;
        using reference = const AuditRecord&;

        const_iterator() = default;
        const_iterator(const Storage* s, const std::uint32_t* row) : storage_(s), row_(row) {}

        reference operator*() const { return storage_->records[*row_]; }
        pointer operator->() const { return &storage_->records[*row_]; }
        const_iterator& operator++() {
            ++row_;
            return *this;
        }
        const_iterator operator++(int) {
            auto tmp = *this;
            ++row_;
            return tmp;
        }
        bool operator==(const const_iterator& o) const { return row_ == o.row_; }

    private:
        const Storage* storage_ = nullptr;
        const std::uint32_t* row_ = nullptr;
    };

    const_iterator begin() const { return {storage_.get(), rows_.data()}; }
    const_iterator end() const { return {storage_.get(), rows_.data() + rows_.size()}; }

    std::size_t size() const { return rows_.size(); }
    bool empty() const { return rows_.empty(); }
    const AuditRecord& operator[](std::size_t i) const { return storage_->records[rows_[i]]; }

    const Grouping& grouping() const { return storage_->grouping; }
    const std::vector<std::string>& group_labels() const { return storage_->grouping.labels(); }
    std::size_t group_count() const { return storage_->grouping.size(); }
    const ToolVocabulary& vocabulary() const { return storage_->vocabulary; }

    /// Number of distinct records in the underlying storage.
    std::size_t storage_size() const { return storage_->records.size(); }
    const std::vector<std::uint32_t>& rows() const { return rows_; }

    /// Same storage, different selection of rows (with repetition allowed).
    AuditSet with_rows(std::vector<std::uint32_t> rows) const {
        AuditSet out = *this;
        for (auto r : rows) {
            if (r >= storage_->records.size()) throw std::out_of_range("audit row out of range");
        }
        out.rows_ = std::move(rows);
        return out;
    }

    /// Row ids (storage positions) of the selected records in group `g`.
    std::vector<std::uint32_t> rows_in_group(std::size_t g) const {
        std::vector<std::uint32_t> out;
        for (auto r : rows_) {
            if (storage_->records[r].group_index == g) out.push_back(r);
        }
        return out;
    }

    std::vector<std::size_t> group_sizes() const {
        std::vector<std::size_t> n(group_count(), 0);
        for (const auto& r : *this) ++n[r.group_index];
        return n;
    }

    std::size_t group_index(std::string_view label) const {
        auto g = grouping().index_of(label);
        if (!g) throw InputError("unknown group label '" + std::string(label) + "'");
        return *g;
    }

    /// Distinct driver ids among the selected records.
    std::vector<std::string> drivers() const {
        std::vector<std::string> out;
        for (const auto& r : *this) out.push_back(r.trajectory.driver_id);
        std::sort(out.begin(), out.end());
        out.erase(std::unique(out.begin(), out.end()), out.end());
        return out;
    }

    /// Content equality over the selected record sequence.
    friend bool operator==(const AuditSet& a, const AuditSet& b) {
        if (a.size() != b.size() || !(a.grouping() == b.grouping()) || !(a.vocabulary() == b.vocabulary())) {
            return false;
        }
        return std::equal(a.begin(), a.end(), b.begin());
    }

private:
    std::shared_ptr<const Storage> storage_;
    std::vector<std::uint32_t> rows_;
};

// ---------------------------------------------------------------------------
// Metric result
// ---------------------------------------------------------------------------

/// Point estimate with its bootstrap distribution summary.
struct MetricResult {
    double point = 0.0;
    double boot_mean = 0.0;
    double ci_low = 0.0;
    double ci_high = 0.0;
    int n_resamples = 0;
    std::uint64_t seed = 0;
    std::size_t n_records = 0;
    int n_redraws = 0;  // resamples redrawn because the metric was undefined on them

    bool operator==(const MetricResult&) const = default;
};

}  // namespace agentaudit
