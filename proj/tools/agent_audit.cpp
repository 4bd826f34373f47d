// agent-audit: command-line front end for the audit library.
//
// Exit codes: 0 success, 2 input/schema error, 3 judge failure,
// 4 infeasible statistics.

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"

#include "agentaudit/core.hpp"
#include "agentaudit/ingest.hpp"
#include "agentaudit/judge.hpp"
#include "agentaudit/judge_http.hpp"
#include "agentaudit/metrics_transition.hpp"
#include "agentaudit/report.hpp"
#include "agentaudit/sampling.hpp"
#include "agentaudit/simulator.hpp"

namespace aa = agentaudit;

namespace {

std::vector<std::string> split_list(const std::string& s) {
    std::vector<std::string> out;
    std::stringstream ss(s);
    std::string item;
    while (std::getline(ss, item, ',')) {
        item = aa::detail::trim(item);
        if (!item.empty()) out.push_back(item);
    }
    return out;
}

// gender | age | age:<cut> | custom:<grouping.json>
aa::Grouping parse_attribute(const std::string& spec) {
    if (spec == "gender") return aa::Grouping::gender();
    if (spec == "age") return aa::Grouping::age();
    if (spec.rfind("age:", 0) == 0) {
        auto cut = aa::detail::parse_double(spec.substr(4));
        if (!cut) throw aa::InputError("bad age threshold in '" + spec + "'");
        return aa::Grouping::age(*cut);
    }
    if (spec.rfind("custom:", 0) == 0) return aa::parse_grouping(spec.substr(7));
    throw aa::InputError("unknown --attribute '" + spec + "' (gender, age, age:<cut> or custom:<file>)");
}

void write_text(const std::filesystem::path& path, const std::string& content) {
    if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
    std::ofstream f(path, std::ios::binary | std::ios::trunc);
    if (!f) throw aa::InputError("cannot write " + path.string());
    f << content;
}

struct InputArgs {
    std::string dataset;
    std::string logs;
    std::string attribute = "gender";
    std::string driver;
    std::string tools;
    std::size_t max_malformed = 0;
    std::size_t digest_limit = 1024;

    void add_to(CLI::App* cmd) {
        cmd->add_option("--dataset", dataset, "Dataset JSON")->required()->check(CLI::ExistingFile);
        cmd->add_option("--logs", logs, "Trajectory log (JSON lines)")->required()->check(CLI::ExistingFile);
        cmd->add_option("--attribute", attribute, "gender, age, age:<cut> or custom:<grouping.json>")
            ->capture_default_str();
        cmd->add_option("--driver", driver, "Restrict to one driver_id");
        cmd->add_option("--tools", tools, "Comma-separated tool vocabulary (default CLS,QA,RG,SEG,VIS,GRD)");
        cmd->add_option("--max-malformed", max_malformed, "Malformed log lines tolerated as warnings")
            ->capture_default_str();
        cmd->add_option("--digest-limit", digest_limit, "Observation digest byte limit")->capture_default_str();
    }

    aa::IngestOptions ingest() const {
        aa::IngestOptions o;
        o.max_malformed = max_malformed;
        o.digest_byte_limit = digest_limit;
        if (!tools.empty()) o.vocabulary = aa::ToolVocabulary(split_list(tools));
        return o;
    }

    std::optional<std::string> driver_filter() const {
        return driver.empty() ? std::nullopt : std::optional<std::string>(driver);
    }

    aa::AuditSet load(bool quiet = false) const {
        auto opts = ingest();
        auto instances = aa::parse_dataset(dataset);
        auto log = aa::parse_trajectory_log(logs, opts);
        auto [audit, report] =
            aa::build_audit_set(instances, log.records, parse_attribute(attribute), driver_filter(), opts.vocabulary);
        if (!quiet) {
            for (const auto& w : log.warnings) std::cerr << "warning: " << w << "\n";
            for (const auto& w : report.warnings) std::cerr << "warning: " << w << "\n";
        }
        return audit;
    }
};

std::optional<std::pair<std::string, std::string>> parse_pair(const std::string& s) {
    if (s.empty()) return std::nullopt;
    auto parts = split_list(s);
    if (parts.size() != 2) throw aa::InputError("--pair needs two comma-separated group labels");
    return std::make_pair(parts[0], parts[1]);
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Fairness audit for tool-using agents: outcome, tool-exposure, tool-transition and reasoning gaps"};
    app.require_subcommand(1);
    app.set_version_flag("--version", aa::tool_version);

    // audit
    auto* audit_cmd = app.add_subcommand("audit", "Run the full audit and write CSV/JSON outputs");
    InputArgs audit_in;
    audit_in.add_to(audit_cmd);
    int n_boot = 1000;
    std::uint64_t seed = 42;
    double ci = 0.95;
    bool stratified = false;
    unsigned workers = 1;
    std::string judge_config_path, scores_path, out_dir = "audit-out", sections = "all";
    bool judge_offline = false;
    std::string hedge_path, demo_path, pair, states;
    std::uint64_t transition_support = 5;
    std::size_t exposure_support = 1;
    std::string reduction = "max";
    audit_cmd->add_option("--bootstrap", n_boot, "Bootstrap resamples")->capture_default_str()->check(CLI::PositiveNumber);
    audit_cmd->add_option("--seed", seed, "Bootstrap seed")->capture_default_str();
    audit_cmd->add_option("--ci", ci, "Confidence level")->capture_default_str()->check(CLI::Range(0.0, 1.0));
    audit_cmd->add_flag("--stratified", stratified, "Resample within each group");
    audit_cmd->add_option("--workers", workers, "Bootstrap worker threads (results do not depend on it)")
        ->capture_default_str();
    audit_cmd->add_option("--judge-config", judge_config_path, "Judge configuration JSON")->check(CLI::ExistingFile);
    audit_cmd->add_flag("--judge-offline", judge_offline, "Use cached judge verdicts only");
    audit_cmd->add_option("--scores", scores_path, "Precomputed judge score file")->check(CLI::ExistingFile);
    audit_cmd->add_option("--out", out_dir, "Output directory")->capture_default_str();
    audit_cmd->add_option("--sections", sections, "endtoend,exposure,transition,reasoning or all")
        ->capture_default_str();
    audit_cmd->add_option("--hedge-lexicon", hedge_path, "Hedge term file")->check(CLI::ExistingFile);
    audit_cmd->add_option("--demo-lexicon", demo_path, "Demographic term file")->check(CLI::ExistingFile);
    audit_cmd->add_option("--pair", pair, "Transition delta groups as first,second");
    audit_cmd->add_option("--states", states, "Tool states kept in the exported delta");
    audit_cmd->add_option("--min-support", transition_support, "Transition rows need this many outgoing transitions")
        ->capture_default_str();
    audit_cmd->add_option("--exposure-min-support", exposure_support, "Exposed records needed per group")
        ->capture_default_str();
    audit_cmd->add_option("--reduction", reduction, "DP/EoD reduction over options: max or mean")
        ->capture_default_str()
        ->check(CLI::IsMember({"max", "mean"}));

    // simulate
    auto* sim_cmd = app.add_subcommand("simulate", "Generate a synthetic dataset and log with injected biases");
    std::string sim_config_path, sim_out = "sim-out";
    std::optional<std::size_t> sim_n;
    std::optional<std::uint64_t> sim_seed;
    sim_cmd->add_option("--config", sim_config_path, "Simulator configuration JSON (built-in default when omitted)")
        ->check(CLI::ExistingFile);
    sim_cmd->add_option("--n-per-group", sim_n, "Override records per group");
    sim_cmd->add_option("--seed", sim_seed, "Override the simulator seed");
    sim_cmd->add_option("--out", sim_out, "Output directory")->capture_default_str();

    // judge-score
    auto* judge_cmd = app.add_subcommand("judge-score", "Score final responses with an LLM judge");
    InputArgs judge_in;
    judge_in.add_to(judge_cmd);
    std::string judge_cfg, judge_out = "scores.json";
    bool judge_cmd_offline = false;
    judge_cmd->add_option("--judge-config", judge_cfg, "Judge configuration JSON")->required()->check(CLI::ExistingFile);
    judge_cmd->add_flag("--judge-offline", judge_cmd_offline, "Use cached judge verdicts only");
    judge_cmd->add_option("--out", judge_out, "Score file to write")->capture_default_str();

    // sample
    auto* sample_cmd = app.add_subcommand("sample", "Draw a demographics-balanced cohort of ids");
    std::string metadata_csv, metadata_dataset, id_column = "id", sample_out;
    std::vector<std::string> strata_specs;
    std::size_t n_total = 400;
    std::uint64_t sample_seed = 42;
    auto* meta_opt = sample_cmd->add_option("--metadata", metadata_csv, "Metadata CSV")->check(CLI::ExistingFile);
    auto* ds_opt = sample_cmd->add_option("--dataset", metadata_dataset, "Dataset JSON (attributes used as metadata)")
                       ->check(CLI::ExistingFile);
    meta_opt->excludes(ds_opt);
    sample_cmd->add_option("--id-column", id_column, "Id column of the CSV")->capture_default_str();
    sample_cmd->add_option("--strata", strata_specs, "Grouping per stratum (gender, age, age:<cut>, custom:<file>)")
        ->required();
    sample_cmd->add_option("--n", n_total, "Total ids to draw")->capture_default_str();
    sample_cmd->add_option("--seed", sample_seed, "Sampling seed")->capture_default_str();
    sample_cmd->add_option("--out", sample_out, "Id list file (stdout when omitted)");

    // export
    auto* export_cmd = app.add_subcommand("export", "Export transition matrices as CSV");
    InputArgs export_in;
    export_in.add_to(export_cmd);
    std::string export_group, export_pair, export_states, export_out = "export";
    std::uint64_t export_support = 5;
    export_cmd->add_option("--group", export_group, "Export this group's counts and probabilities");
    export_cmd->add_option("--pair", export_pair, "Export the delta first,second with its mask");
    export_cmd->add_option("--states", export_states, "Tool states kept in the delta");
    export_cmd->add_option("--min-support", export_support, "Minimum row support for the delta")->capture_default_str();
    export_cmd->add_option("--out", export_out, "Output directory")->capture_default_str();

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        int rc = app.exit(e);
        return rc == 0 ? 0 : static_cast<int>(aa::ExitCode::input_error);
    }

    try {
        if (*audit_cmd) {
            aa::AuditOptions opt;
            opt.driver = audit_in.driver_filter();
            opt.attribute_spec = audit_in.attribute;
            opt.bootstrap.n_resamples = n_boot;
            opt.bootstrap.seed = seed;
            opt.bootstrap.ci_level = ci;
            opt.bootstrap.stratified = stratified;
            opt.bootstrap.workers = workers;
            opt.sections = aa::parse_sections(sections);
            opt.exposure.min_support = exposure_support;
            opt.transition.min_support = transition_support;
            opt.dp_reduction = opt.eod_reduction = reduction == "mean" ? aa::Reduction::mean : aa::Reduction::max;
            if (!hedge_path.empty()) opt.hedge_lexicon = aa::load_lexicon(hedge_path, "hedge");
            if (!demo_path.empty()) opt.demo_lexicon = aa::load_lexicon(demo_path, "demographic");
            opt.transition_pair = parse_pair(pair);
            opt.transition_states = split_list(states);
            opt.ingest = audit_in.ingest();
            aa::HttpJudgeTransport http;
            if (!scores_path.empty()) {
                opt.scores_path = scores_path;
            } else if (!judge_config_path.empty()) {
                opt.judge = aa::load_judge_config(judge_config_path);
                if (judge_offline) opt.judge->offline = true;
                opt.judge_transport = &http;
            }
            auto outputs =
                aa::run_audit(audit_in.dataset, audit_in.logs, parse_attribute(audit_in.attribute), opt, out_dir);
            for (const auto& w : outputs.ingest.warnings) std::cerr << "warning: " << w << "\n";
            std::cout << "wrote " << outputs.files.size() << " files to " << out_dir << " (sections: "
                      << aa::detail::join(outputs.sections_run, ",") << ")\n";
            if (!outputs.ok()) {
                for (const auto& f : outputs.failures) std::cerr << "error: section " << f.section << ": " << f.message << "\n";
                return static_cast<int>(outputs.failures.front().code);
            }
            return 0;
        }

        if (*sim_cmd) {
            aa::SimConfig config = sim_config_path.empty() ? aa::default_sim_config() : aa::load_sim_config(sim_config_path);
            if (sim_n) config.n_per_group = *sim_n;
            if (sim_seed) config.seed = *sim_seed;
            auto sim = aa::generate(config);
            aa::write_simulation(sim, config, sim_out);
            std::cout << "wrote " << sim.instances.size() << " records to " << sim_out;
            if (sim.n_truncated) std::cout << " (" << sim.n_truncated << " walks truncated at " << config.max_length << ")";
            std::cout << "\n";
            return 0;
        }

        if (*judge_cmd) {
            auto audit = judge_in.load();
            auto config = aa::load_judge_config(judge_cfg);
            if (judge_cmd_offline) config.offline = true;
            aa::HttpJudgeTransport http;
            auto verdicts = aa::score_audit_set(audit, config, &http);
            write_text(judge_out, aa::serialize_scores(aa::to_score_map(verdicts, config.model)));
            std::size_t cached = 0;
            for (const auto& [id, v] : verdicts) cached += v.cached ? 1 : 0;
            std::cout << "scored " << verdicts.size() << " responses (" << cached << " from cache) -> " << judge_out
                      << "\n";
            return 0;
        }

        if (*sample_cmd) {
            std::vector<aa::MetadataRow> metadata;
            if (!metadata_csv.empty()) {
                metadata = aa::load_metadata_csv(metadata_csv, id_column);
            } else if (!metadata_dataset.empty()) {
                metadata = aa::metadata_from_instances(aa::parse_dataset(metadata_dataset));
            } else {
                throw aa::InputError("sample needs --metadata or --dataset");
            }
            std::vector<aa::Grouping> strata;
            for (const auto& s : strata_specs) strata.push_back(parse_attribute(s));
            auto sample = aa::balanced_sample(metadata, strata, n_total, sample_seed);
            std::string text;
            for (const auto& id : sample.ids) text += id + "\n";
            if (sample_out.empty()) {
                std::cout << text;
            } else {
                write_text(sample_out, text);
            }
            std::cerr << sample.ids.size() << " ids, " << sample.per_cell << " per cell";
            if (sample.n_unmappable) std::cerr << "; " << sample.n_unmappable << " rows unmappable";
            std::cerr << "\n";
            return 0;
        }

        if (*export_cmd) {
            if (export_group.empty() == export_pair.empty()) throw aa::InputError("export needs exactly one of --group or --pair");
            auto audit = export_in.load();
            std::filesystem::path dir(export_out);
            if (!export_group.empty()) {
                auto m = aa::estimate_transitions(audit, export_group);
                auto name = aa::detail::safe_name(export_group);
                write_text(dir / ("transition_counts_" + name + ".csv"), aa::export_matrix(m, true));
                write_text(dir / ("transition_probs_" + name + ".csv"), aa::export_matrix(m));
            } else {
                auto [first, second] = *parse_pair(export_pair);
                auto delta = aa::transition_bias(audit, first, second, {export_support});
                auto kept = split_list(export_states);
                if (!kept.empty()) delta = aa::select_tools(delta, kept);
                write_text(dir / "transition_delta.csv", aa::export_matrix(delta));
                write_text(dir / "transition_delta_mask.csv", aa::export_mask(delta));
                write_text(dir / "transition_meta.json", aa::transition_meta(delta, export_support).dump(1) + "\n");
            }
            std::cout << "wrote matrices to " << export_out << "\n";
            return 0;
        }
    } catch (const aa::AuditError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return static_cast<int>(e.code());
    } catch (const std::filesystem::filesystem_error& e) {
        std::cerr << "error: " << e.what() << "\n";
        return static_cast<int>(aa::ExitCode::input_error);
    }
    return 0;
}
