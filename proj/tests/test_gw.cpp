#include <gtest/gtest.h>

#include <cmath>
#include <tuple>

#include "oracles.hpp"
#include "ssep/gw.hpp"

using namespace ssep;

namespace {

ModelParams params(int N, double r, double b, double rho) {
    ModelParams p;
    p.N = N;
    p.theta = 0.5;
    p.r = p.r_prime = r;
    p.b = p.b_prime = b;
    p.c = p.c_prime = 0.3;
    p.rho_bar = p.rho_bar_prime = rho;
    return p;
}

}  // namespace

TEST(OutcomeProbs, LimitExamples) {
    const auto o = outcome_probs(params(100, 1.0, 0.5, 0.5), Side::Left, OutcomeMode::Limit);
    EXPECT_NEAR(o.p_plus, 1.0 / 3.0, 1e-15);
    EXPECT_NEAR(o.p_minus, 1.0 / 3.0, 1e-15);
    EXPECT_NEAR(o.p_branch, 1.0 / 3.0, 1e-15);
    const auto z = outcome_probs(params(100, 2.0, 0.0, 0.25), Side::Left, OutcomeMode::Limit);
    EXPECT_DOUBLE_EQ(z.p_branch, 0.0);
    EXPECT_DOUBLE_EQ(z.p_plus, 0.25);
}

TEST(OutcomeProbs, FiniteNMatchesExcursionChain) {
    for (int N : {20, 100, 1000}) {
        const ModelParams p = params(N, 1.0, 0.5, 0.4);
        const auto o = outcome_probs(p, Side::Left, OutcomeMode::FiniteN);
        const auto ex = oracle::excursion_absorption(1.0, 0.4, 0.5, 0.3, std::pow(N, 0.5));
        const double total = ex.plus + ex.minus + ex.branch;
        EXPECT_NEAR(total, 1.0, 1e-12);
        EXPECT_NEAR(o.p_plus, ex.plus / total, 1e-12) << N;
        EXPECT_NEAR(o.p_minus, ex.minus / total, 1e-12) << N;
        EXPECT_NEAR(o.p_branch, ex.branch / total, 1e-12) << N;
    }
}

TEST(OutcomeProbs, FiniteNConvergesToLimit) {
    const auto lim = outcome_probs(params(100, 1.0, 0.5, 0.4), Side::Left, OutcomeMode::Limit);
    double prev = 1.0;
    for (int N : {100, 10000, 1000000}) {
        const auto o = outcome_probs(params(N, 1.0, 0.5, 0.4), Side::Left, OutcomeMode::FiniteN);
        const double d = std::abs(o.p_plus - lim.p_plus) + std::abs(o.p_branch - lim.p_branch);
        EXPECT_LT(d, prev);
        prev = d;
    }
    EXPECT_LT(prev, 1e-2);
}

TEST(OutcomeProbs, NormalizedAndRightSideUsesPrimedRates) {
    ModelParams p = params(50, 1.0, 0.5, 0.4);
    p.r_prime = 3.0;
    p.b_prime = 0.1;
    p.rho_bar_prime = 0.9;
    for (auto mode : {OutcomeMode::FiniteN, OutcomeMode::Limit}) {
        for (auto side : {Side::Left, Side::Right}) {
            const auto o = outcome_probs(p, side, mode);
            EXPECT_NEAR(o.p_plus + o.p_minus + o.p_branch, 1.0, 1e-14);
            EXPECT_GE(o.p_plus, 0.0);
            EXPECT_GE(o.p_minus, 0.0);
            EXPECT_GE(o.p_branch, 0.0);
        }
    }
    const auto right = outcome_probs(p, Side::Right, OutcomeMode::Limit);
    EXPECT_NEAR(right.p_plus, 3.0 * 0.9 / 3.1, 1e-14);
}

TEST(GwTree, NoBranchingGivesSingleEdge) {
    Rng rng(1);
    for (int i = 0; i < 100; ++i) {
        const auto t = sample_gw_tree({0.3, 0.7, 0.0}, rng);
        ASSERT_TRUE(t);
        EXPECT_EQ(t->size(), 2U);
        EXPECT_TRUE(t->canonical() == "(+)" || t->canonical() == "(-)");
    }
}

TEST(GwTree, SamplesAreValid) {
    Rng rng(2);
    for (int i = 0; i < 5000; ++i) {
        const auto t = sample_gw_tree({0.3, 0.3, 0.4}, rng);
        ASSERT_TRUE(t);
        ASSERT_TRUE(t->valid()) << t->violation();
        ASSERT_EQ(solve_tree_random_order(*t, rng), solve_tree(*t));
    }
}

TEST(GwTree, MeanBranchCount) {
    // Each vertex is a branch point with probability p; the total number of
    // vertices processed has mean 1 / (1 - 2p).
    for (double pb : {0.1, 0.25, 0.4}) {
        const OutcomeProbs probs{(1.0 - pb) / 2.0, (1.0 - pb) / 2.0, pb};
        const auto e = estimate_alpha_gw(probs, 200000, 7);
        const double mean = pb / (1.0 - 2.0 * pb);
        // Var of the branch count of a subcritical binary GW tree.
        const double var = pb * (1.0 - pb) / std::pow(1.0 - 2.0 * pb, 3);
        EXPECT_NEAR(e.mean_branches, mean, 4.0 * std::sqrt(var / 200000.0)) << pb;
    }
}

TEST(GwTree, OverflowIsReported) {
    Rng rng(3);
    int overflow = 0;
    for (int i = 0; i < 1000; ++i) overflow += !sample_gw_tree({0.2, 0.2, 0.6}, rng, 50).has_value();
    EXPECT_GT(overflow, 100);
    EXPECT_THROW(sample_gw_tree({0.0, 0.0, 1.0}, rng), std::invalid_argument);
}

TEST(GwAlpha, ZeroFillGivesReservoirDensity) {
    const auto e = estimate_alpha_gw(params(100, 1.0, 0.0, 0.3), 100000, 11);
    EXPECT_NEAR(e.alpha_hat, 0.3, 4.0 * e.stderr_);
    EXPECT_EQ(e.mean_branches, 0.0);
}

TEST(GwAlpha, FullReservoirIsExactlyOne) {
    const auto e = estimate_alpha_gw(params(100, 1.0, 0.5, 1.0), 20000, 12);
    EXPECT_EQ(e.alpha_hat, 1.0);
    EXPECT_EQ(e.n_plus, e.n_samples);
}

TEST(GwAlpha, MatchesFixedPointOfSolvingMap) {
    // P(+) = p_plus + p_branch (2a - a^2), solved by bisection.
    for (auto [r, b, rho] : {std::tuple{1.0, 0.5, 0.5}, std::tuple{2.0, 1.0, 0.3}, std::tuple{1.0, 0.2, 0.1}}) {
        const auto probs = outcome_probs(params(100, r, b, rho), Side::Left, OutcomeMode::Limit);
        const double a = oracle::bisect(
            [&](double x) { return probs.p_plus + probs.p_branch * (2.0 * x - x * x) - x; }, 0.0, 1.0);
        EXPECT_NEAR(a, alpha_from_params(r, b, rho), 1e-12);
        const auto e = estimate_alpha_gw(probs, 400000, 13);
        EXPECT_EQ(e.n_overflow, 0U);
        EXPECT_NEAR(e.alpha_hat, a, 4.0 * e.stderr_) << r << " " << b << " " << rho;
    }
}

TEST(GwAlpha, ThreadCountDoesNotChangeResult) {
    const OutcomeProbs probs{0.3, 0.4, 0.3};
    const auto a = estimate_alpha_gw(probs, 50000, 21, 1);
    const auto b = estimate_alpha_gw(probs, 50000, 21, 3);
    EXPECT_EQ(a.n_plus, b.n_plus);
    EXPECT_EQ(a.mean_branches, b.mean_branches);
}

TEST(TreeLaws, ZeroFillLawsCoincide) {
    const auto rep = compare_tree_laws(params(100, 1.0, 0.0, 0.4), 0.5, 20000, 5, 15);
    EXPECT_EQ(rep.failed_rate, 0.0);
    // Both laws put mass only on (+) and (-), each a Bernoulli(rho).
    EXPECT_LT(rep.tv_with_remainder, 4.0 * std::sqrt(2.0 * 0.24 / 20000.0));
}

TEST(TreeLaws, SingleEdgePlusFrequency) {
    const ModelParams p = params(200, 1.0, 0.5, 0.4);
    const auto rep = compare_tree_laws(p, 0.5, 10000, 6, 15);
    const double target = rep.probs.p_plus;
    EXPECT_NEAR(rep.p_root_plus_dual, target, 4.0 * rep.p_root_plus_dual_stderr + 0.02);
    EXPECT_LT(rep.tv_with_remainder, 0.08);
    double dual = 0.0, gw = 0.0;
    for (const auto& e : rep.entries) {
        dual += e.freq_dual;
        gw += e.freq_gw;
    }
    EXPECT_NEAR(dual, 1.0, 1e-9);
    EXPECT_NEAR(gw, 1.0, 1e-9);
}
