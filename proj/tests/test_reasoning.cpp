#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>

#include "agentaudit/metrics_reasoning.hpp"
#include "support.hpp"

using namespace agentaudit;
using testing_support::make_audit;
using testing_support::Rec;

namespace {

Rec says(const std::string& g, const std::string& text) { return {g, 0, 0, {}, text}; }

}  // namespace

TEST(Tokenize, SplitsOnPunctuationAndLowercases) {
    EXPECT_EQ(tokenize("The opacity, MAY-be."), (std::vector<std::string>{"the", "opacity", "may", "be"}));
    EXPECT_TRUE(tokenize("").empty());
    EXPECT_EQ(tokenize("caf\xc3\xa9 ok").front(), "caf\xc3\xa9");
}

TEST(CountLexicon, HedgeExamples) {
    auto hedge = Lexicon::hedge();
    EXPECT_EQ(count_lexicon("The opacity may possibly indicate effusion.", hedge), 2u);
    EXPECT_EQ(count_lexicon("Likely, it LIKELY appears so.", hedge), 3u);
    EXPECT_EQ(count_lexicon("mayor of the city", hedge), 0u);
    EXPECT_EQ(count_lexicon("", hedge), 0u);
}

TEST(CountLexicon, DemographicExample) {
    EXPECT_EQ(count_lexicon("The female patient, elderly, shows...", Lexicon::demographic()), 2u);
}

TEST(CountLexicon, MultiTokenTerms) {
    Lexicon lex("x", {"no evidence", "suggests"});
    EXPECT_EQ(count_lexicon("No evidence of X; no, evidence suggests Y", lex), 3u);
}

TEST(Lexicon, RejectsDuplicatesAndEmpty) {
    EXPECT_THROW(Lexicon("x", {}), InputError);
    EXPECT_THROW(Lexicon("x", {"May", "may "}), InputError);
    EXPECT_THROW(Lexicon("x", {"--"}), InputError);
}

TEST(Lexicon, LoadSkipsCommentsAndBlanks) {
    auto path = std::filesystem::temp_directory_path() / "agentaudit_lexicon.txt";
    {
        std::ofstream f(path);
        f << "# hedges\nmay\n\n  perhaps \n";
    }
    auto lex = load_lexicon(path.string(), "h");
    EXPECT_EQ(lex.terms(), (std::vector<std::string>{"may", "perhaps"}));
    std::filesystem::remove(path);
}

TEST(FeatureGap, TwoGroupMeans) {
    auto audit = make_audit({says("A", ""), says("A", ""), says("B", ""), says("B", "")});
    std::vector<double> v = {0.4, 0.2, 0.1, 0.1};
    auto res = feature_gap(audit, "f", [&](const AuditRecord& r) { return v[r.key]; });
    EXPECT_NEAR(res.gap, 0.2, 1e-15);
    EXPECT_EQ(res.argmax_label, "A");
    EXPECT_EQ(res.argmin_label, "B");
}

TEST(FeatureGap, ConstantFeatureIsZero) {
    auto audit = make_audit({says("A", ""), says("B", ""), says("B", "")});
    EXPECT_EQ(feature_gap(audit, "f", [](const AuditRecord&) { return 3.5; }).gap, 0.0);
}

TEST(FeatureGap, ThreeGroups) {
    auto audit = make_audit({says("A", ""), says("B", ""), says("C", "")}, {"A", "B", "C"});
    std::vector<double> v = {0.3, 0.1, 0.2};
    auto res = feature_gap(audit, "f", [&](const AuditRecord& r) { return v[r.key]; });
    EXPECT_NEAR(res.gap, 0.2, 1e-15);
    EXPECT_EQ(res.argmax_label, "A");
    EXPECT_EQ(res.argmin_label, "B");
}

TEST(FeatureGap, EmptyGroupAndNonFiniteRejected) {
    auto audit = make_audit({says("A", "")});
    EXPECT_THROW(feature_gap(audit, "f", [](const AuditRecord&) { return 1.0; }), EmptySelectionError);
    auto two = make_audit({says("A", ""), says("B", "")});
    EXPECT_THROW(feature_gap(two, "f", [](const AuditRecord&) { return std::nan(""); }), InputError);
}

TEST(HedgeGap, DirectMeans) {
    auto audit = make_audit({says("A", "may might"), says("A", "likely possibly"), says("B", "no cues"),
                             says("B", "")});
    EXPECT_EQ(hedge_gap(audit).gap, 2.0);
}

TEST(HedgeGap, IdenticalTextIsZero) {
    auto audit = make_audit({says("A", "it may be"), says("B", "it may be"), says("B", "it may be")});
    EXPECT_EQ(hedge_gap(audit).gap, 0.0);
}

TEST(HedgeGap, MixedFixtureHandCounted) {
    // Hand counts: A = {1, 2, 0} (mean 1), B = {3, 1, 0} (mean 4/3).
    auto audit = make_audit({says("A", "It may be."), says("A", "Possibly, it appears so."), says("A", "Mayor."),
                             says("B", "Might, MIGHT, might."), says("B", "It may."), says("B", "")});
    auto res = hedge_gap(audit);
    EXPECT_EQ(res.groups[0].mean, 1.0);
    EXPECT_EQ(res.groups[1].mean, 4.0 / 3.0);
    EXPECT_EQ(res.gap, 4.0 / 3.0 - 1.0);
    EXPECT_EQ(res.argmax_label, "B");
}

TEST(DemoGap, MixedFixtureHandCounted) {
    // A: {2, 0, 1} -> 1; B: {0, 0, 0} -> 0.
    auto audit = make_audit({says("A", "female, elderly"), says("A", "femaleness"), says("A", "Young adult"),
                             says("B", "a person"), says("B", "patient"), says("B", "")});
    auto res = demo_gap(audit);
    EXPECT_EQ(res.gap, 1.0);
    EXPECT_EQ(res.argmax_label, "A");
}

TEST(DemoGap, AllZeroCountsGiveZero) {
    auto audit = make_audit({says("A", "normal study"), says("B", "normal study")});
    EXPECT_EQ(demo_gap(audit).gap, 0.0);
}

TEST(JudgeGap, ConstantScoresIsZero) {
    auto audit = make_audit({says("A", ""), says("B", "")});
    std::map<std::string, double> scores{{audit[0].instance.id, 0.8}, {audit[1].instance.id, 0.8}};
    EXPECT_EQ(judge_gap(audit, scores).gap, 0.0);
}

TEST(JudgeGap, MeansDiffer) {
    auto audit = make_audit({says("A", ""), says("A", ""), says("B", ""), says("B", "")});
    std::map<std::string, double> scores{{audit[0].instance.id, 1.0},
                                         {audit[1].instance.id, 0.8},
                                         {audit[2].instance.id, 0.6},
                                         {audit[3].instance.id, 0.8}};
    EXPECT_NEAR(judge_gap(audit, scores).gap, 0.2, 1e-15);
}

TEST(JudgeGap, MissingScoresListed) {
    auto audit = make_audit({says("A", ""), says("B", ""), says("B", "")});
    std::map<std::string, double> scores{{audit[0].instance.id, 0.5}};
    try {
        judge_gap(audit, scores);
        FAIL();
    } catch (const InputError& e) {
        std::string msg = e.what();
        EXPECT_NE(msg.find(audit[1].instance.id), std::string::npos);
        EXPECT_NE(msg.find(audit[2].instance.id), std::string::npos);
    }
}

TEST(ScoreFile, RoundTrip) {
    ScoreMap m{{"a", {7, 2.0 / 3.0, "judge-x", "abc"}}, {"b", {1, 0, "judge-x", "def"}}};
    EXPECT_EQ(parse_scores_text(serialize_scores(m)), m);
    EXPECT_THROW(parse_scores_text(R"({"a": {"raw": 3}})"), InputError);
}
