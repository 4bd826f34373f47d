#pragma once

// Audit orchestration and output files. Everything is computed in memory
// before anything is written.
//
// Output directory layout:
//   endtoend.csv                     ACC, delta ACC, DP, EoD, FUT
//   exposure.csv                     per-tool exposure gaps and rates
//   transition_counts_<group>.csv    per-group transition counts
//   transition_probs_<group>.csv     per-group row-normalized probabilities
//   transition_delta.csv             first - second (empty cell = insufficient support)
//   transition_delta_mask.csv        true/false support mask
//   transition_meta.json             sign convention and support threshold
//   reasoning.csv                    judge / hedge / demographic gaps
//   manifest.json                    settings needed to rerun the audit, the
//                                    sections that ran, and a JSON summary of
//                                    every number above (unscaled and percent)
//
// A section that fails emits none of its files; the other sections still run
// and the manifest lists the failure.

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "agentaudit/core.hpp"
#include "agentaudit/ingest.hpp"
#include "agentaudit/judge.hpp"
#include "agentaudit/metrics_endtoend.hpp"
#include "agentaudit/metrics_exposure.hpp"
#include "agentaudit/metrics_reasoning.hpp"
#include "agentaudit/metrics_transition.hpp"
#include "agentaudit/stats.hpp"

namespace agentaudit {

inline constexpr const char* tool_version = "1.0.0";

enum class Section { endtoend, exposure, transition, reasoning };

inline const std::vector<std::pair<Section, std::string>>& section_names() {
    static const std::vector<std::pair<Section, std::string>> names = {
        {Section::endtoend, "endtoend"},
        {Section::exposure, "exposure"},
        {Section::transition, "transition"},
        {Section::reasoning, "reasoning"}};
    return names;
}

inline std::string to_string(Section s) {
    for (const auto& [sec, name] : section_names()) {
        if (sec == s) return name;
    }
    return "?";
}

inline std::set<Section> parse_sections(const std::string& list) {
    std::set<Section> out;
    std::stringstream ss(list);
    std::string item;
    while (std::getline(ss, item, ',')) {
        item = detail::trim(item);
        if (item.empty()) continue;
        if (item == "all") {
            for (const auto& [sec, name] : section_names()) out.insert(sec);
            continue;
        }
        bool found = false;
        for (const auto& [sec, name] : section_names()) {
            if (name == item) {
                out.insert(sec);
                found = true;
            }
        }
        if (!found) throw InputError("unknown section '" + item + "'");
    }
    if (out.empty()) throw InputError("no sections selected");
    return out;
}

struct AuditOptions {
    std::optional<std::string> driver;
    std::string attribute_spec = "gender";  // recorded in the manifest
    BootstrapOptions bootstrap;
    std::set<Section> sections = {Section::endtoend, Section::exposure, Section::transition, Section::reasoning};
    ExposureOptions exposure;
    TransitionOptions transition;
    Reduction dp_reduction = Reduction::max;
    Reduction eod_reduction = Reduction::max;
    Lexicon hedge_lexicon = Lexicon::hedge();
    Lexicon demo_lexicon = Lexicon::demographic();
    /// Group pair for the transition delta; defaults to the first two labels.
    std::optional<std::pair<std::string, std::string>> transition_pair;
    /// Restrict the exported delta to these tool states (all when empty).
    std::vector<std::string> transition_states;
    /// Precomputed judge scores; takes precedence over `judge`.
    std::optional<std::string> scores_path;
    std::optional<JudgeConfig> judge;
    JudgeTransport* judge_transport = nullptr;
    IngestOptions ingest;
};

struct SectionFailure {
    std::string section;
    ExitCode code;
    std::string message;
};

/// File name -> content for every section that completed, plus the manifest.
struct AuditOutputs {
    std::map<std::string, std::string> files;
    std::vector<std::string> sections_run;
    std::vector<SectionFailure> failures;
    IngestReport ingest;

    bool ok() const { return failures.empty(); }
};

// ---------------------------------------------------------------------------
// Formatting
// ---------------------------------------------------------------------------

/// "mean_[low, high]" in percent with two decimals.
inline std::string format_mean_ci(const MetricResult& r) {
    char buf[96];
    std::snprintf(buf, sizeof buf, "%.2f_[%.2f, %.2f]", 100.0 * r.boot_mean, 100.0 * r.ci_low, 100.0 * r.ci_high);
    return buf;
}

inline double pct(double v) { return 100.0 * v; }

namespace detail {

inline std::string csv_field(const std::string& s) {
    if (s.find_first_of(",\"\n\r") == std::string::npos) return s;
    std::string out = "\"";
    for (char c : s) {
        if (c == '"') out += '"';
        out += c;
    }
    return out + "\"";
}

inline std::string csv_row(const std::vector<std::string>& fields) {
    std::string out;
    for (std::size_t i = 0; i < fields.size(); ++i) {
        if (i) out += ',';
        out += csv_field(fields[i]);
    }
    return out + "\n";
}

inline std::vector<std::string> csv_split(const std::string& line) {
    std::vector<std::string> fields;
    std::string cur;
    bool quoted = false;
    for (std::size_t i = 0; i < line.size(); ++i) {
        char c = line[i];
        if (quoted) {
            if (c == '"' && i + 1 < line.size() && line[i + 1] == '"') {
                cur += '"';
                ++i;
            } else if (c == '"') {
                quoted = false;
            } else {
                cur += c;
            }
        } else if (c == '"') {
            quoted = true;
        } else if (c == ',') {
            fields.push_back(std::move(cur));
            cur.clear();
        } else {
            cur += c;
        }
    }
    fields.push_back(std::move(cur));
    return fields;
}

inline std::string safe_name(const std::string& label) {
    std::string out;
    for (char c : label) out += std::isalnum(static_cast<unsigned char>(c)) ? c : '_';
    return out;
}

inline nlohmann::json to_json(const MetricResult& r) {
    return {{"point", r.point},           {"boot_mean", r.boot_mean},     {"ci_low", r.ci_low},
            {"ci_high", r.ci_high},       {"point_pct", pct(r.point)},    {"boot_mean_pct", pct(r.boot_mean)},
            {"ci_low_pct", pct(r.ci_low)}, {"ci_high_pct", pct(r.ci_high)}, {"formatted", format_mean_ci(r)},
            {"n_resamples", r.n_resamples}, {"seed", r.seed},              {"n_records", r.n_records},
            {"n_redraws", r.n_redraws}};
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Matrix export
// ---------------------------------------------------------------------------

/// A matrix read back from CSV. Empty cells are unset.
struct LabeledMatrix {
    std::vector<std::string> row_labels;
    std::vector<std::string> col_labels;
    std::vector<std::vector<std::optional<double>>> values;

    bool operator==(const LabeledMatrix&) const = default;
};

/// Header row "from,<col labels>", then one row per source state.
template <typename T>
std::string export_matrix_csv(const std::vector<std::string>& row_labels, const std::vector<std::string>& col_labels,
                              const Matrix<T>& m, const Matrix<std::uint8_t>* mask = nullptr) {
    std::vector<std::string> header{"from"};
    header.insert(header.end(), col_labels.begin(), col_labels.end());
    std::string out = detail::csv_row(header);
    for (std::size_t r = 0; r < m.rows(); ++r) {
        std::vector<std::string> row{row_labels[r]};
        for (std::size_t c = 0; c < m.cols(); ++c) {
            if (mask && !(*mask)(r, c)) {
                row.emplace_back();
            } else if constexpr (std::is_floating_point_v<T>) {
                row.push_back(detail::format_double(m(r, c)));
            } else {
                row.push_back(std::to_string(m(r, c)));
            }
        }
        out += detail::csv_row(row);
    }
    return out;
}

inline std::string export_matrix(const TransitionMatrix& m, bool counts = false) {
    return counts ? export_matrix_csv(m.row_labels, m.col_labels, m.counts)
                  : export_matrix_csv(m.row_labels, m.col_labels, m.probs);
}

/// Masked-out entries are written as empty cells.
inline std::string export_matrix(const TransitionDelta& d) {
    return export_matrix_csv(d.row_labels, d.col_labels, d.delta, &d.mask);
}

inline std::string export_mask(const TransitionDelta& d) {
    std::vector<std::string> header{"from"};
    header.insert(header.end(), d.col_labels.begin(), d.col_labels.end());
    std::string out = detail::csv_row(header);
    for (std::size_t r = 0; r < d.mask.rows(); ++r) {
        std::vector<std::string> row{d.row_labels[r]};
        for (std::size_t c = 0; c < d.mask.cols(); ++c) row.push_back(d.mask(r, c) ? "true" : "false");
        out += detail::csv_row(row);
    }
    return out;
}

inline nlohmann::json transition_meta(const TransitionDelta& d, std::uint64_t min_support) {
    return {{"delta", "P(" + d.first_group + ") - P(" + d.second_group + ")"},
            {"first_group", d.first_group},
            {"second_group", d.second_group},
            {"sign_convention", {{"positive", "red"}, {"negative", "blue"}}},
            {"positive_means", "transition more frequent for " + d.first_group},
            {"empty_cell", "insufficient support"},
            {"min_support", min_support},
            {"rows", d.row_labels},
            {"cols", d.col_labels}};
}

inline LabeledMatrix parse_matrix_csv(const std::string& text) {
    std::istringstream in(text);
    std::string line;
    LabeledMatrix m;
    bool header = true;
    while (std::getline(in, line)) {
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        auto fields = detail::csv_split(line);
        if (header) {
            if (fields.empty() || fields[0] != "from") throw InputError("matrix CSV must start with a 'from' header");
            m.col_labels.assign(fields.begin() + 1, fields.end());
            header = false;
            continue;
        }
        if (fields.size() != m.col_labels.size() + 1) throw InputError("matrix CSV row has the wrong width");
        m.row_labels.push_back(fields[0]);
        std::vector<std::optional<double>> row;
        for (std::size_t c = 1; c < fields.size(); ++c) {
            if (fields[c].empty()) {
                row.emplace_back();
            } else if (auto v = detail::parse_double(fields[c])) {
                row.emplace_back(*v);
            } else {
                throw InputError("matrix CSV cell is not a number: " + fields[c]);
            }
        }
        m.values.push_back(std::move(row));
    }
    if (header) throw InputError("matrix CSV is empty");
    return m;
}

// ---------------------------------------------------------------------------
// Sections
// ---------------------------------------------------------------------------

namespace detail {

inline void run_endtoend(const AuditSet& audit, const AuditOptions& opt, AuditOutputs& out, nlohmann::json& summary) {
    struct Row {
        std::string name;
        std::function<double(const AuditSet&)> metric;
    };
    const Reduction dp_red = opt.dp_reduction, eod_red = opt.eod_reduction;
    std::vector<Row> rows = {
        {"ACC", [](const AuditSet& a) { return accuracy(a); }},
        {"delta_ACC", [](const AuditSet& a) { return delta_accuracy(a); }},
        {"DP", [dp_red](const AuditSet& a) { return demographic_parity(a, dp_red); }},
        {"EoD", [eod_red](const AuditSet& a) { return equalized_odds(a, eod_red); }},
        {"FUT", [](const AuditSet& a) { return fut(a); }},
    };
    std::string csv = csv_row({"metric", "point", "boot_mean", "ci_low", "ci_high", "point_pct", "boot_mean_pct",
                               "ci_low_pct", "ci_high_pct", "mean_ci_pct", "n_resamples", "seed", "n_records"});
    nlohmann::json sec = nlohmann::json::object();
    for (const auto& row : rows) {
        MetricResult r = bootstrap(row.metric, audit, opt.bootstrap);
        csv += csv_row({row.name, format_double(r.point), format_double(r.boot_mean), format_double(r.ci_low),
                        format_double(r.ci_high), format_double(pct(r.point)), format_double(pct(r.boot_mean)),
                        format_double(pct(r.ci_low)), format_double(pct(r.ci_high)), format_mean_ci(r),
                        std::to_string(r.n_resamples), std::to_string(r.seed), std::to_string(r.n_records)});
        sec[row.name] = to_json(r);
    }
    auto eod = equalized_odds_detail(audit, eod_red);
    sec["EoD_terms"] = eod.n_terms;
    nlohmann::json skipped = nlohmann::json::array();
    for (const auto& s : eod.skipped) {
        skipped.push_back({{"option", s.option}, {"rate", s.rate == RateKind::tpr ? "TPR" : "FPR"},
                           {"unsupported_groups", s.unsupported_groups}});
    }
    sec["EoD_skipped_terms"] = skipped;
    nlohmann::json groups = nlohmann::json::object();
    for (const auto& gs : group_stats(audit)) {
        groups[gs.label] = {{"n", gs.n}, {"n_correct", gs.n_correct}, {"n_abstain", gs.n_abstain},
                            {"accuracy", gs.n ? gs.accuracy() : 0.0}};
    }
    sec["groups"] = groups;
    summary["endtoend"] = sec;
    out.files["endtoend.csv"] = csv;
}

inline void run_exposure(const AuditSet& audit, const AuditOptions& opt, AuditOutputs& out, nlohmann::json& summary) {
    const auto& labels = audit.group_labels();
    std::vector<std::string> header{"tool", "defined", "signed_gap", "abs_gap", "signed_gap_pct", "abs_gap_pct",
                                    "signed_gap_mean_ci_pct", "abs_gap_mean_ci_pct", "high_group", "low_group"};
    for (const auto& g : labels) {
        for (const char* f : {"n_", "n_exposed_", "exposure_rate_", "conditional_accuracy_"}) header.push_back(f + g);
    }
    std::string csv = csv_row(header);
    nlohmann::json sec = nlohmann::json::array();
    const auto exposure_opts = opt.exposure;
    for (const auto& tool_name : audit.vocabulary().names()) {
        ToolId tool(tool_name);
        auto res = tool_exposure_bias(audit, tool, exposure_opts);
        nlohmann::json tj = {{"tool", tool_name}, {"defined", res.defined}};
        std::vector<std::string> row{tool_name, res.defined ? "true" : "false"};
        if (res.defined) {
            std::string signed_ci = "ci_unavailable", abs_ci = "ci_unavailable";
            try {
                auto signed_metric = [&](const AuditSet& a) { return exposure_gap(a, tool, exposure_opts); };
                auto abs_metric = [&](const AuditSet& a) { return std::abs(exposure_gap(a, tool, exposure_opts)); };
                MetricResult s = bootstrap(signed_metric, audit, opt.bootstrap);
                MetricResult a = bootstrap(abs_metric, audit, opt.bootstrap);
                signed_ci = format_mean_ci(s);
                abs_ci = format_mean_ci(a);
                tj["signed_gap_bootstrap"] = to_json(s);
                tj["abs_gap_bootstrap"] = to_json(a);
            } catch (const InfeasibleError& e) {
                tj["bootstrap_error"] = e.what();
            }
            row.insert(row.end(), {format_double(res.signed_gap), format_double(res.abs_gap),
                                   format_double(pct(res.signed_gap)), format_double(pct(res.abs_gap)), signed_ci, abs_ci,
                                   res.high_label, res.low_label});
            tj["signed_gap"] = res.signed_gap;
            tj["abs_gap"] = res.abs_gap;
            tj["high_group"] = res.high_label;
            tj["low_group"] = res.low_label;
        } else {
            row.insert(row.end(), {"", "", "", "", "undefined", "undefined", "", ""});
        }
        nlohmann::json gj = nlohmann::json::object();
        for (const auto& ge : res.groups) {
            row.push_back(std::to_string(ge.n));
            row.push_back(std::to_string(ge.n_exposed));
            row.push_back(format_double(ge.exposure_rate));
            row.push_back(ge.conditional_accuracy ? format_double(*ge.conditional_accuracy) : "");
            gj[ge.label] = {{"n", ge.n}, {"n_exposed", ge.n_exposed}, {"exposure_rate", ge.exposure_rate},
                            {"conditional_accuracy", ge.conditional_accuracy ? nlohmann::json(*ge.conditional_accuracy)
                                                                             : nlohmann::json(nullptr)}};
        }
        tj["groups"] = gj;
        csv += csv_row(row);
        sec.push_back(tj);
    }
    summary["exposure"] = {{"min_support", exposure_opts.min_support}, {"tools", sec}};
    out.files["exposure.csv"] = csv;
}

inline void run_transition(const AuditSet& audit, const AuditOptions& opt, AuditOutputs& out, nlohmann::json& summary) {
    nlohmann::json sec = nlohmann::json::object();
    nlohmann::json groups = nlohmann::json::object();
    for (const auto& label : audit.group_labels()) {
        auto m = estimate_transitions(audit, label);
        out.files["transition_counts_" + safe_name(label) + ".csv"] = export_matrix(m, true);
        out.files["transition_probs_" + safe_name(label) + ".csv"] = export_matrix(m);
        groups[label] = {{"row_support", m.row_support}, {"total_transitions", m.total_transitions()}};
    }
    auto [first, second] = opt.transition_pair.value_or(std::make_pair(audit.group_labels()[0], audit.group_labels()[1]));
    auto delta = transition_bias(audit, first, second, opt.transition);
    if (!opt.transition_states.empty()) delta = select_tools(delta, opt.transition_states);
    out.files["transition_delta.csv"] = export_matrix(delta);
    out.files["transition_delta_mask.csv"] = export_mask(delta);
    auto meta = transition_meta(delta, opt.transition.min_support);
    out.files["transition_meta.json"] = meta.dump(1) + "\n";
    sec["groups"] = groups;
    sec["meta"] = meta;
    summary["transition"] = sec;
}

inline void run_reasoning(const AuditSet& audit, const AuditOptions& opt, AuditOutputs& out, nlohmann::json& summary) {
    std::vector<FeatureColumn> columns;
    nlohmann::json sec = nlohmann::json::object();
    if (opt.scores_path) {
        columns.push_back(judge_score_column(audit, normalized_scores(parse_scores(*opt.scores_path))));
        sec["judge_source"] = "score_file";
    } else if (opt.judge) {
        auto verdicts = score_audit_set(audit, *opt.judge, opt.judge_transport);
        std::map<std::string, double> scores;
        for (const auto& [id, v] : verdicts) scores[id] = v.normalized;
        columns.push_back(judge_score_column(audit, scores));
        out.files["judge_scores.json"] = serialize_scores(to_score_map(verdicts, opt.judge->model));
        sec["judge_source"] = "judge:" + opt.judge->model;
    } else {
        sec["judge_source"] = "skipped: no scores or judge configured";
    }
    columns.push_back(make_feature_column(audit, "hedge", lexicon_feature(opt.hedge_lexicon)));
    columns.push_back(make_feature_column(audit, "demo", lexicon_feature(opt.demo_lexicon)));
    columns.push_back(make_feature_column(audit, "hedge_per_100_tokens", lexicon_rate_feature(opt.hedge_lexicon)));

    std::vector<std::string> header{"feature", "gap", "gap_x100", "mean_ci_x100", "argmax_group", "argmin_group"};
    for (const auto& g : audit.group_labels()) header.push_back("mean_" + g);
    std::string csv = csv_row(header);
    nlohmann::json features = nlohmann::json::array();
    for (const auto& col : columns) {
        auto res = feature_gap(audit, col);
        auto metric = [&col](const AuditSet& a) { return feature_gap(a, col).gap; };
        MetricResult r = bootstrap(metric, audit, opt.bootstrap);
        std::vector<std::string> row{col.name, format_double(res.gap), format_double(pct(res.gap)), format_mean_ci(r),
                                     res.argmax_label, res.argmin_label};
        nlohmann::json means = nlohmann::json::object();
        for (const auto& gm : res.groups) {
            row.push_back(format_double(gm.mean));
            means[gm.label] = {{"n", gm.n}, {"mean", gm.mean}};
        }
        csv += csv_row(row);
        features.push_back({{"feature", col.name}, {"gap", res.gap}, {"gap_x100", pct(res.gap)},
                            {"argmax_group", res.argmax_label}, {"argmin_group", res.argmin_label},
                            {"groups", means}, {"bootstrap", to_json(r)}});
    }
    sec["features"] = features;
    sec["hedge_terms"] = opt.hedge_lexicon.terms();
    sec["demo_terms"] = opt.demo_lexicon.terms();
    summary["reasoning"] = sec;
    out.files["reasoning.csv"] = csv;
}

}  // namespace detail

/// Runs the selected sections on an already joined audit set.
inline AuditOutputs compute_audit(const AuditSet& audit, const AuditOptions& opt, const nlohmann::json& inputs = {}) {
    AuditOutputs out;
    nlohmann::json summary = nlohmann::json::object();
    nlohmann::json failed = nlohmann::json::array();
    for (const auto& [sec, name] : section_names()) {
        if (!opt.sections.count(sec)) continue;
        // Each section fills a scratch copy; only a complete section is merged.
        AuditOutputs scratch;
        nlohmann::json sec_summary = nlohmann::json::object();
        try {
            switch (sec) {
                case Section::endtoend: detail::run_endtoend(audit, opt, scratch, sec_summary); break;
                case Section::exposure: detail::run_exposure(audit, opt, scratch, sec_summary); break;
                case Section::transition: detail::run_transition(audit, opt, scratch, sec_summary); break;
                case Section::reasoning: detail::run_reasoning(audit, opt, scratch, sec_summary); break;
            }
        } catch (const AuditError& e) {
            out.failures.push_back({name, e.code(), e.what()});
            failed.push_back({{"section", name}, {"exit_code", static_cast<int>(e.code())}, {"error", e.what()}});
            continue;
        }
        out.files.merge(scratch.files);
        summary[name] = sec_summary[name];
        out.sections_run.push_back(name);
    }

    nlohmann::json settings = {
        {"attribute", opt.attribute_spec},
        {"grouping", to_json(audit.grouping())},
        {"driver", opt.driver ? nlohmann::json(*opt.driver) : nlohmann::json(nullptr)},
        {"bootstrap", {{"n_resamples", opt.bootstrap.n_resamples}, {"seed", opt.bootstrap.seed},
                       {"ci_level", opt.bootstrap.ci_level}, {"stratified", opt.bootstrap.stratified},
                       {"max_redraws", opt.bootstrap.max_redraws}, {"ci_method", "percentile"}}},
        {"exposure_min_support", opt.exposure.min_support},
        {"transition_min_support", opt.transition.min_support},
        {"transition_pair", opt.transition_pair ? nlohmann::json({opt.transition_pair->first, opt.transition_pair->second})
                                                : nlohmann::json(nullptr)},
        {"transition_states", opt.transition_states},
        {"dp_reduction", opt.dp_reduction == Reduction::max ? "max" : "mean"},
        {"eod_reduction", opt.eod_reduction == Reduction::max ? "max" : "mean"},
        {"fut", "worst_group_accuracy"},
        {"hedge_terms", opt.hedge_lexicon.terms()},
        {"demo_terms", opt.demo_lexicon.terms()},
        {"tool_vocabulary", audit.vocabulary().names()},
        {"digest_byte_limit", opt.ingest.digest_byte_limit},
        {"max_malformed", opt.ingest.max_malformed},
        {"judge", opt.judge ? nlohmann::json({{"model", opt.judge->model}, {"template_id", opt.judge->template_id},
                                               {"template_hash", fnv1a_hex(opt.judge->prompt_template)},
                                               {"temperature", opt.judge->temperature}})
                            : nlohmann::json(nullptr)},
        {"scores_file", opt.scores_path ? nlohmann::json(*opt.scores_path) : nlohmann::json(nullptr)},
    };
    nlohmann::json manifest = {
        {"tool", "agent-audit"},
        {"version", tool_version},
        {"schema_versions", {{"dataset", schema_version}, {"trajectory_log", schema_version}}},
        {"sections_run", out.sections_run},
        {"sections_failed", failed},
        {"settings", settings},
        {"config_hash", fnv1a_hex(settings.dump())},
        {"inputs", inputs},
        {"n_records", audit.size()},
    };
    nlohmann::json group_sizes = nlohmann::json::object();
    auto sizes = audit.group_sizes();
    for (std::size_t g = 0; g < sizes.size(); ++g) group_sizes[audit.group_labels()[g]] = sizes[g];
    manifest["group_sizes"] = group_sizes;
    manifest["summary"] = summary;
    out.files["manifest.json"] = manifest.dump(1) + "\n";
    return out;
}

inline void write_outputs(const AuditOutputs& outputs, const std::filesystem::path& dir) {
    std::filesystem::create_directories(dir);
    for (const auto& [name, content] : outputs.files) {
        std::ofstream f(dir / name, std::ios::binary | std::ios::trunc);
        if (!f) throw InputError("cannot write " + (dir / name).string());
        f << content;
    }
}

/// Parse, join, compute and write. Input errors before the sections start
/// write nothing; a failing section is left out and listed in the manifest.
inline AuditOutputs run_audit(const std::string& dataset_path, const std::string& log_path, const Grouping& grouping,
                              const AuditOptions& options, const std::filesystem::path& out_dir) {
    auto instances = parse_dataset(dataset_path);
    auto log = parse_trajectory_log(log_path, options.ingest);
    auto [audit, report] = build_audit_set(instances, log.records, grouping, options.driver, options.ingest.vocabulary);
    report.warnings.insert(report.warnings.begin(), log.warnings.begin(), log.warnings.end());

    nlohmann::json inputs = {
        {"dataset", {{"path", std::filesystem::path(dataset_path).filename().string()},
                     {"fnv1a64", fnv1a_hex(detail::read_file(dataset_path))}}},
        {"trajectory_log", {{"path", std::filesystem::path(log_path).filename().string()},
                            {"fnv1a64", fnv1a_hex(detail::read_file(log_path))}}},
        {"ingest", {{"n_instances", report.n_instances},
                    {"n_trajectories", report.n_trajectories},
                    {"n_joined", report.n_joined},
                    {"n_unmatched_trajectories", report.n_unmatched_trajectories},
                    {"n_unmappable_instances", report.n_unmappable_instances},
                    {"n_warnings", report.warnings.size()}}},
    };
    auto outputs = compute_audit(audit, options, inputs);
    outputs.ingest = std::move(report);
    write_outputs(outputs, out_dir);
    return outputs;
}

}  // namespace agentaudit
