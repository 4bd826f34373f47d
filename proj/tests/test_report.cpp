#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>
#include <sstream>

#include "agentaudit/report.hpp"
#include "agentaudit/simulator.hpp"
#include "support.hpp"

using namespace agentaudit;
using testing_support::make_audit;
using testing_support::Rec;

namespace {

AuditSet sim_audit(std::size_t n_per_group = 150) {
    auto c = default_sim_config();
    c.n_per_group = n_per_group;
    auto sim = generate(c);
    return build_audit_set(sim.instances, sim.trajectories, simulation_grouping(c)).first;
}

AuditOptions fast_options() {
    AuditOptions o;
    o.bootstrap.n_resamples = 50;
    return o;
}

std::string slurp(const std::filesystem::path& p) {
    std::ifstream f(p, std::ios::binary);
    std::stringstream ss;
    ss << f.rdbuf();
    return ss.str();
}

std::size_t line_count(const std::string& s) { return static_cast<std::size_t>(std::count(s.begin(), s.end(), '\n')); }

}  // namespace

TEST(FormatMeanCi, PercentWithTwoDecimals) {
    MetricResult r;
    r.boot_mean = 0.5;
    r.ci_low = 0.45123;
    r.ci_high = 0.6;
    EXPECT_EQ(format_mean_ci(r), "50.00_[45.12, 60.00]");
    r.boot_mean = 0.0;
    r.ci_low = 0.0;
    r.ci_high = 0.00004;
    EXPECT_EQ(format_mean_ci(r), "0.00_[0.00, 0.00]");
}

TEST(ParseSections, NamesAndAll) {
    EXPECT_EQ(parse_sections("transition"), std::set<Section>{Section::transition});
    EXPECT_EQ(parse_sections("endtoend, reasoning").size(), 2u);
    EXPECT_EQ(parse_sections("all").size(), 4u);
    EXPECT_THROW(parse_sections("bogus"), InputError);
    EXPECT_THROW(parse_sections(""), InputError);
}

TEST(MatrixExport, LayoutHasStartRowAndEndColumn) {
    auto audit = sim_audit();
    auto csv = export_matrix(estimate_transitions(audit, std::string("Female")));
    auto m = parse_matrix_csv(csv);
    EXPECT_EQ(m.col_labels, (std::vector<std::string>{"CLS", "QA", "RG", "SEG", "VIS", "GRD", "END"}));
    EXPECT_EQ(m.row_labels, (std::vector<std::string>{"START", "CLS", "QA", "RG", "SEG", "VIS", "GRD"}));
    EXPECT_EQ(csv.substr(0, csv.find('\n')), "from,CLS,QA,RG,SEG,VIS,GRD,END");
}

TEST(MatrixExport, MaskedCellsEmptyInDeltaAndFalseInMask) {
    // B never leaves START through CLS, so the CLS row has no support in B.
    auto audit = make_audit({{"A", 0, 0, {"CLS", "SEG"}}, {"A", 0, 0, {"CLS"}}, {"B", 0, 0, {"SEG"}}, {"B", 0, 0, {}}});
    TransitionOptions opt;
    opt.min_support = 1;
    auto d = transition_bias(audit, "A", "B", opt);
    auto parsed = parse_matrix_csv(export_matrix(d));
    EXPECT_FALSE(parsed.values[1][0].has_value());
    EXPECT_TRUE(parsed.values[0][0].has_value());
    EXPECT_EQ(*parsed.values[0][0], 1.0);  // A: START->CLS twice, B: never

    auto mask = export_mask(d);
    std::istringstream in(mask);
    std::string header, start_row, cls_row;
    std::getline(in, header);
    std::getline(in, start_row);
    std::getline(in, cls_row);
    EXPECT_EQ(start_row, "START,true,true,true,true,true,true,true");
    EXPECT_EQ(cls_row, "CLS,false,false,false,false,false,false,false");
}

TEST(MatrixExport, RoundTripPreservesValues) {
    auto audit = sim_audit();
    auto d = transition_bias(audit, "Female", "Male");
    auto parsed = parse_matrix_csv(export_matrix(d));
    ASSERT_EQ(parsed.values.size(), d.delta.rows());
    for (std::size_t r = 0; r < d.delta.rows(); ++r) {
        for (std::size_t c = 0; c < d.delta.cols(); ++c) {
            if (d.masked_in(r, c)) {
                EXPECT_EQ(*parsed.values[r][c], d.delta(r, c));
            } else {
                EXPECT_FALSE(parsed.values[r][c].has_value());
            }
        }
    }
    EXPECT_THROW(parse_matrix_csv("x,a\n"), InputError);
    EXPECT_THROW(parse_matrix_csv("from,a\nr,1,2\n"), InputError);
}

TEST(MatrixExport, MetaRecordsSignConvention) {
    auto d = transition_bias(sim_audit(), "Male", "Female");
    auto meta = transition_meta(d, 5);
    EXPECT_EQ(meta["delta"], "P(Male) - P(Female)");
    EXPECT_EQ(meta["sign_convention"]["positive"], "red");
    EXPECT_EQ(meta["sign_convention"]["negative"], "blue");
}

TEST(ComputeAudit, AllSectionsProduceTheirFiles) {
    auto out = compute_audit(sim_audit(), fast_options());
    EXPECT_TRUE(out.ok());
    for (const char* f : {"endtoend.csv", "exposure.csv", "transition_delta.csv", "transition_delta_mask.csv",
                          "transition_meta.json", "transition_counts_Female.csv", "transition_probs_Male.csv",
                          "reasoning.csv", "manifest.json"}) {
        EXPECT_TRUE(out.files.count(f)) << f;
    }
    auto endtoend = out.files.at("endtoend.csv");
    EXPECT_EQ(line_count(endtoend), 6u);  // header + five metrics
    for (const char* m : {"\nACC,", "\ndelta_ACC,", "\nDP,", "\nEoD,", "\nFUT,"}) {
        EXPECT_NE(endtoend.find(m), std::string::npos) << m;
    }
    auto manifest = nlohmann::json::parse(out.files.at("manifest.json"));
    EXPECT_EQ(manifest["sections_run"].size(), 4u);
    EXPECT_EQ(manifest["settings"]["bootstrap"]["n_resamples"], 50);
    EXPECT_EQ(manifest["group_sizes"]["Female"], 150);
    EXPECT_TRUE(manifest["summary"].contains("endtoend"));
}

TEST(ComputeAudit, SectionSelectionEmitsOnlyThoseFiles) {
    auto o = fast_options();
    o.sections = parse_sections("transition");
    auto out = compute_audit(sim_audit(), o);
    for (const auto& [name, content] : out.files) {
        EXPECT_TRUE(name.rfind("transition_", 0) == 0 || name == "manifest.json") << name;
    }
    auto manifest = nlohmann::json::parse(out.files.at("manifest.json"));
    EXPECT_EQ(manifest["sections_run"], nlohmann::json::array({"transition"}));
}

TEST(ComputeAudit, PairAndStateSelection) {
    auto o = fast_options();
    o.sections = {Section::transition};
    o.transition_pair = {"Male", "Female"};
    o.transition_states = {"CLS", "SEG"};
    auto out = compute_audit(sim_audit(), o);
    auto m = parse_matrix_csv(out.files.at("transition_delta.csv"));
    EXPECT_EQ(m.row_labels, (std::vector<std::string>{"START", "CLS", "SEG"}));
    EXPECT_EQ(m.col_labels, (std::vector<std::string>{"CLS", "SEG", "END"}));
    auto meta = nlohmann::json::parse(out.files.at("transition_meta.json"));
    EXPECT_EQ(meta["first_group"], "Male");
}

TEST(ComputeAudit, FailingSectionIsRecordedAndOmitted) {
    auto o = fast_options();
    o.sections = {Section::transition, Section::reasoning};
    o.scores_path = "/nonexistent/scores.json";
    auto out = compute_audit(sim_audit(), o);
    EXPECT_FALSE(out.ok());
    ASSERT_EQ(out.failures.size(), 1u);
    EXPECT_EQ(out.failures[0].section, "reasoning");
    EXPECT_EQ(out.failures[0].code, ExitCode::input_error);
    EXPECT_FALSE(out.files.count("reasoning.csv"));
    EXPECT_TRUE(out.files.count("transition_delta.csv"));
    auto manifest = nlohmann::json::parse(out.files.at("manifest.json"));
    EXPECT_EQ(manifest["sections_failed"][0]["section"], "reasoning");
}

TEST(ComputeAudit, ReasoningWithoutJudgeSkipsJudgeRow) {
    auto o = fast_options();
    o.sections = {Section::reasoning};
    auto out = compute_audit(sim_audit(), o);
    auto csv = out.files.at("reasoning.csv");
    EXPECT_EQ(csv.find("\njudge"), std::string::npos);
    EXPECT_NE(csv.find("\nhedge,"), std::string::npos);
    EXPECT_NE(csv.find("\ndemo,"), std::string::npos);
}

TEST(RunAudit, ByteIdenticalAcrossRerunsAndWorkers) {
    auto c = default_sim_config();
    c.n_per_group = 120;
    auto base = std::filesystem::temp_directory_path() / "agentaudit_report_determinism";
    std::filesystem::remove_all(base);
    auto sim = generate(c);
    write_simulation(sim, c, base / "in");

    auto run = [&](unsigned workers, const std::string& name) {
        auto o = fast_options();
        o.bootstrap.workers = workers;
        o.scores_path = (base / "in" / "scores.json").string();
        run_audit((base / "in" / "dataset.json").string(), (base / "in" / "trajectories.jsonl").string(),
                  Grouping::gender(), o, base / name);
        return base / name;
    };
    auto a = run(1, "a"), b = run(1, "b"), w = run(3, "w");
    std::size_t n_files = 0;
    for (const auto& entry : std::filesystem::directory_iterator(a)) {
        ++n_files;
        auto name = entry.path().filename();
        EXPECT_EQ(slurp(entry.path()), slurp(b / name)) << name;
        auto other = slurp(w / name);
        // Worker count is not recorded anywhere, so every file matches.
        EXPECT_EQ(slurp(entry.path()), other) << name;
    }
    EXPECT_GE(n_files, 10u);
    std::filesystem::remove_all(base);
}

TEST(RunAudit, MissingInputWritesNothing) {
    auto dir = std::filesystem::temp_directory_path() / "agentaudit_report_missing";
    std::filesystem::remove_all(dir);
    EXPECT_THROW(run_audit("/nonexistent/d.json", "/nonexistent/l.jsonl", Grouping::gender(), fast_options(), dir),
                 InputError);
    EXPECT_FALSE(std::filesystem::exists(dir));
}
