#include <gtest/gtest.h>

#include "agentaudit/metrics_transition.hpp"
#include "support.hpp"

using namespace agentaudit;
using testing_support::make_audit;
using testing_support::Rec;

namespace {

Rec path(const std::string& g, std::vector<std::string> tools) { return {g, 0, 0, std::move(tools)}; }

std::size_t col(const TransitionMatrix& m, const std::string& l) {
    return static_cast<std::size_t>(std::find(m.col_labels.begin(), m.col_labels.end(), l) - m.col_labels.begin());
}
std::size_t row(const TransitionMatrix& m, const std::string& l) {
    return static_cast<std::size_t>(std::find(m.row_labels.begin(), m.row_labels.end(), l) - m.row_labels.begin());
}

}  // namespace

TEST(EstimateTransitions, Layout) {
    auto m = estimate_transitions(make_audit({path("A", {"CLS"}), path("B", {})}), std::string("A"));
    EXPECT_EQ(m.row_labels, (std::vector<std::string>{"START", "CLS", "QA", "RG", "SEG", "VIS", "GRD"}));
    EXPECT_EQ(m.col_labels, (std::vector<std::string>{"CLS", "QA", "RG", "SEG", "VIS", "GRD", "END"}));
    EXPECT_EQ(m.counts.rows(), 7u);
    EXPECT_EQ(m.counts.cols(), 7u);
}

TEST(EstimateTransitions, StartRowNormalization) {
    auto audit = make_audit({path("A", {"CLS"}), path("A", {"CLS"}), path("A", {"CLS"}), path("A", {"RG"}),
                             path("B", {})});
    auto m = estimate_transitions(audit, std::string("A"));
    EXPECT_EQ(m.probs(0, col(m, "CLS")), 0.75);
    EXPECT_EQ(m.probs(0, col(m, "RG")), 0.25);
    EXPECT_EQ(m.row_support[0], 4u);
}

TEST(EstimateTransitions, SingleCallChain) {
    auto m = estimate_transitions(make_audit({path("A", {"SEG"}), path("B", {})}), std::string("A"));
    EXPECT_EQ(m.counts(0, col(m, "SEG")), 1u);
    EXPECT_EQ(m.counts(row(m, "SEG"), col(m, "END")), 1u);
    EXPECT_EQ(m.total_transitions(), 2u);
    EXPECT_EQ(m.probs(0, col(m, "SEG")), 1.0);
    EXPECT_EQ(m.probs(row(m, "SEG"), col(m, "END")), 1.0);
    EXPECT_EQ(m.row_support[row(m, "CLS")], 0u);
    for (std::size_t c = 0; c < m.probs.cols(); ++c) EXPECT_EQ(m.probs(row(m, "CLS"), c), 0.0);
}

TEST(EstimateTransitions, EmptyTrajectoriesGoStraightToEnd) {
    auto m = estimate_transitions(make_audit({path("A", {}), path("A", {}), path("B", {"CLS"})}), std::string("A"));
    EXPECT_EQ(m.probs(0, col(m, "END")), 1.0);
}

TEST(EstimateTransitions, SelfLoopsCountedAndUnknownToolsSkipped) {
    auto m = estimate_transitions(make_audit({path("A", {"GRD", "GRD", "OCR", "GRD"}), path("B", {})}),
                                  std::string("A"));
    EXPECT_EQ(m.counts(row(m, "GRD"), col(m, "GRD")), 2u);
    EXPECT_EQ(m.counts(row(m, "GRD"), col(m, "END")), 1u);
    EXPECT_EQ(m.total_transitions(), 4u);
}

TEST(EstimateTransitions, EmptyGroupIsAnError) {
    auto audit = make_audit({path("A", {})}, {"A", "B"});
    EXPECT_THROW(estimate_transitions(audit, std::string("B")), EmptySelectionError);
    EXPECT_THROW(estimate_transitions(audit, std::string("Z")), InputError);
    EXPECT_EQ(estimate_transitions(audit, std::nullopt).total_transitions(), 1u);
}

TEST(TransitionBias, IdenticalRoutingIsZero) {
    std::vector<Rec> recs;
    for (int i = 0; i < 6; ++i) {
        recs.push_back(path("A", {"CLS", "SEG"}));
        recs.push_back(path("B", {"CLS", "SEG"}));
    }
    auto d = transition_bias(make_audit(recs), "A", "B");
    for (std::size_t r = 0; r < d.delta.rows(); ++r) {
        for (std::size_t c = 0; c < d.delta.cols(); ++c) {
            if (d.masked_in(r, c)) EXPECT_EQ(d.delta(r, c), 0.0);
        }
    }
    EXPECT_TRUE(d.masked_in(0, 0));
    EXPECT_FALSE(d.masked_in(2, 0));  // QA never visited
}

TEST(TransitionBias, SupportMaskRequiresBothGroups) {
    std::vector<Rec> recs;
    for (int i = 0; i < 5; ++i) recs.push_back(path("A", {"CLS"}));
    for (int i = 0; i < 4; ++i) recs.push_back(path("B", {"CLS"}));
    auto audit = make_audit(recs);
    EXPECT_FALSE(transition_bias(audit, "A", "B").masked_in(0, 0));
    EXPECT_TRUE(transition_bias(audit, "A", "B", {4}).masked_in(0, 0));
}

TEST(TransitionBias, SwapNegatesExactly) {
    std::vector<Rec> recs;
    for (int i = 0; i < 7; ++i) recs.push_back(path("A", {i % 3 ? "CLS" : "RG", "SEG"}));
    for (int i = 0; i < 9; ++i) recs.push_back(path("B", {i % 2 ? "CLS" : "RG"}));
    auto audit = make_audit(recs);
    auto ab = transition_bias(audit, "A", "B", {1});
    auto ba = transition_bias(audit, "B", "A", {1});
    for (std::size_t r = 0; r < ab.delta.rows(); ++r) {
        for (std::size_t c = 0; c < ab.delta.cols(); ++c) {
            EXPECT_EQ(ab.delta(r, c), -ba.delta(r, c));
            EXPECT_EQ(ab.mask(r, c), ba.mask(r, c));
        }
    }
}

TEST(TransitionBias, UnknownGroupRejected) {
    auto audit = make_audit({path("A", {}), path("B", {})});
    EXPECT_THROW(transition_bias(audit, "A", "Z"), InputError);
}

TEST(SelectTools, KeepsStartAndEnd) {
    std::vector<Rec> recs;
    for (int i = 0; i < 5; ++i) recs.push_back(path("A", {"SEG", "CLS"}));
    for (int i = 0; i < 5; ++i) recs.push_back(path("B", {"CLS"}));
    auto d = select_tools(transition_bias(make_audit(recs), "A", "B"), {"SEG", "CLS"});
    EXPECT_EQ(d.row_labels, (std::vector<std::string>{"START", "SEG", "CLS"}));
    EXPECT_EQ(d.col_labels, (std::vector<std::string>{"SEG", "CLS", "END"}));
    EXPECT_EQ(d.delta(0, 0), 1.0);   // START->SEG: 1 vs 0
    EXPECT_EQ(d.delta(0, 1), -1.0);  // START->CLS: 0 vs 1
    EXPECT_THROW(select_tools(d, {"OCR"}), InputError);
}
