#include <gtest/gtest.h>

#include <cmath>

#include "ssep/estimators.hpp"
#include "ssep/pde.hpp"

using namespace ssep;

namespace {

ModelParams params(int N) {
    ModelParams p;
    p.N = N;
    p.theta = 0.5;
    p.r = p.r_prime = 1.0;
    p.rho_bar = 0.2;
    p.rho_bar_prime = 0.9;
    p.b = p.b_prime = 0.5;
    p.c = p.c_prime = 0.3;
    return p;
}

}  // namespace

TEST(Density, TimeZeroRecoversProfile) {
    const auto f0 = InitialProfile::linear(0.1, 0.9);
    const std::uint64_t n = 20000;
    const auto d = estimate_density(f0, params(20), 0.0, n, 1);
    for (Site x = 1; x <= 19; ++x) {
        const double q = f0(x / 20.0);
        EXPECT_NEAR(d.at(x), q, 4.0 * std::sqrt(q * (1 - q) / n)) << x;
        EXPECT_NEAR(d.se(x), std::sqrt(q * (1 - q) / n), 0.1 * std::sqrt(q * (1 - q) / n) + 1e-6);
    }
}

TEST(Correlation, ProductMeasureAtTimeZero) {
    const std::uint64_t n = 20000;
    const auto c = estimate_correlation(InitialProfile::constant(0.4), params(12), 0.0, n, 2, all_pairs(12));
    int outside = 0;
    for (std::size_t k = 0; k < c.pairs.size(); ++k) outside += std::abs(c.values[k]) > 4.0 * c.stderr_[k];
    EXPECT_LE(outside, 1);
    EXPECT_EQ(c.pairs.size(), 55U);
}

TEST(Correlation, NegativeUnderGradient) {
    // A macroscopic pair far from the boundary; the bulk correlation is of order 1/N and negative.
    const auto c = estimate_correlation(InitialProfile::constant(0.8), params(30), 0.1, 40000, 3, {{10, 20}}, 1,
                                        Engine::Superposed);
    EXPECT_LT(c.values[0], 2.0 * c.stderr_[0]);
}

TEST(Replicas, ThreadCountGivesIdenticalEstimates) {
    const auto f0 = InitialProfile::sine_bump(0.2, 0.5);
    const ModelParams p = params(16);
    for (Engine e : {Engine::Gillespie, Engine::Graphical, Engine::Superposed}) {
        const auto a = sample_fields(f0, p, {0.05, 0.1}, 3000, 9, all_pairs(16), 1, e);
        const auto b = sample_fields(f0, p, {0.05, 0.1}, 3000, 9, all_pairs(16), 3, e);
        for (std::size_t k = 0; k < 2; ++k) {
            EXPECT_EQ(a.density[k].values, b.density[k].values);
            EXPECT_EQ(a.density[k].stderr_, b.density[k].stderr_);
            EXPECT_EQ(a.correlation[k].values, b.correlation[k].values);
        }
    }
}

TEST(Replicas, SeedChangesEstimate) {
    const auto a = estimate_density(InitialProfile::constant(0.5), params(16), 0.05, 500, 1);
    const auto b = estimate_density(InitialProfile::constant(0.5), params(16), 0.05, 500, 2);
    EXPECT_NE(a.values, b.values);
}

TEST(Replicas, MergeIsAssociativeAndCommutative) {
    auto run = [](std::uint64_t lo, std::uint64_t hi) {
        OccupationAccumulator acc(8, all_pairs(8));
        for (std::uint64_t i = lo; i < hi; ++i) {
            Rng rng(replica_seed(4, i));
            acc.add(sample_initial(InitialProfile::constant(0.3), 8, rng));
        }
        return acc;
    };
    auto ab = run(0, 10);
    ab.merge(run(10, 25));
    auto abc1 = ab;
    abc1.merge(run(25, 40));
    auto bc = run(10, 25);
    bc.merge(run(25, 40));
    auto abc2 = run(0, 10);
    abc2.merge(bc);
    auto cba = run(25, 40);
    cba.merge(run(10, 25));
    cba.merge(run(0, 10));
    const auto d1 = abc1.density(0.0), d2 = abc2.density(0.0), d3 = cba.density(0.0), all = run(0, 40).density(0.0);
    EXPECT_EQ(d1.values, d2.values);
    EXPECT_EQ(d1.values, d3.values);
    EXPECT_EQ(d1.values, all.values);
    EXPECT_EQ(abc1.correlation(0.0).values, run(0, 40).correlation(0.0).values);
}

TEST(Replicas, BadArguments) {
    EXPECT_THROW(estimate_density(InitialProfile::constant(0.5), params(16), 0.05, 0, 1), std::invalid_argument);
    EXPECT_THROW(sample_fields(InitialProfile::constant(0.5), params(16), {0.2, 0.1}, 10, 1), std::invalid_argument);
}

TEST(TimeAverage, ZeroFillEquilibrium) {
    ModelParams p = params(20);
    p.b = p.b_prime = 0.0;
    p.rho_bar = p.rho_bar_prime = 0.6;
    const auto d = estimate_time_averaged_density(InitialProfile::constant(0.6), p, 0.1, 0.5, 0.05, 400, 5, 1,
                                                  Engine::Superposed);
    for (Site x = 1; x <= 19; ++x) EXPECT_NEAR(d.at(x), 0.6, 4.0 * d.se(x) + 1e-9) << x;
    EXPECT_THROW(estimate_time_averaged_density(InitialProfile::constant(0.6), p, 0.5, 0.1, 0.05, 4, 5),
                 std::invalid_argument);
    EXPECT_THROW(estimate_time_averaged_density(InitialProfile::constant(0.6), p, 0.1, 0.5, 0.05, 4, 5, 1,
                                                Engine::Graphical),
                 std::invalid_argument);
}

TEST(TimeAverage, SingleSnapshotMatchesPlainEstimate) {
    const ModelParams p = params(14);
    const auto f0 = InitialProfile::constant(0.5);
    const auto a = estimate_time_averaged_density(f0, p, 0.2, 0.2, 1.0, 4000, 6, 1, Engine::Superposed);
    const auto b = estimate_density(f0, p, 0.2, 4000, 7, 1, Engine::Superposed);
    for (Site x = 1; x <= 13; ++x) EXPECT_NEAR(a.at(x), b.at(x), 4.0 * std::hypot(a.se(x), b.se(x))) << x;
}

TEST(BoundaryDensity, SiteThreeRelaxesToAlpha) {
    // After a macroscopic time of order N^(-theta) the boundary region sits at alpha,
    // up to corrections vanishing with N.
    const ModelParams p = params(200);
    const auto bd = boundary_densities(p);
    const auto d = estimate_density(InitialProfile::constant(0.8), p, 0.3, 500, 8, 1, Engine::Superposed);
    EXPECT_NEAR(d.at(3), bd.alpha, 4.0 * d.se(3) + 0.03);
    EXPECT_NEAR(d.at(197), bd.alpha_prime, 4.0 * d.se(197) + 0.03);
}
