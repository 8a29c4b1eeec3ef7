#include <gtest/gtest.h>

#include <cmath>

#include "oracles.hpp"
#include "ssep/estimators.hpp"
#include "ssep/forward.hpp"

using namespace ssep;

namespace {

ModelParams small(int N) {
    ModelParams p;
    p.N = N;
    p.theta = 0.5;
    p.r = 1.0;
    p.rho_bar = 0.2;
    p.b = 0.5;
    p.c = 0.3;
    p.r_prime = 1.0;
    p.rho_bar_prime = 0.9;
    p.b_prime = 0.5;
    p.c_prime = 0.3;
    return p;
}

std::uint64_t total_marks(const MarkStream& s) { return s.size(); }

}  // namespace

TEST(SampleInitial, ConstantOneAndZero) {
    const ModelParams p = small(50);
    EXPECT_EQ(sample_initial(InitialProfile::constant(1.0), p, 1), Configuration(50, 1));
    EXPECT_EQ(sample_initial(InitialProfile::constant(0.0), p, 1), Configuration(50, 0));
}

TEST(SampleInitial, HalfDensityPerSite) {
    const ModelParams p = small(100);
    const int draws = 10000;
    std::vector<int> ones(100, 0);
    Rng rng(3);
    for (int i = 0; i < draws; ++i) {
        const auto eta = sample_initial(InitialProfile::constant(0.5), p.N, rng);
        for (Site x = 1; x <= 99; ++x) ones[static_cast<std::size_t>(x)] += eta[x];
    }
    for (Site x = 1; x <= 99; ++x) EXPECT_NEAR(ones[static_cast<std::size_t>(x)] / double(draws), 0.5, 4.0 * 0.5 / 100.0);
}

TEST(SampleInitial, FollowsProfile) {
    const ModelParams p = small(20);
    const auto f = InitialProfile::linear(0.1, 0.9);
    const int draws = 20000;
    std::vector<int> ones(20, 0);
    Rng rng(4);
    for (int i = 0; i < draws; ++i) {
        const auto eta = sample_initial(f, p.N, rng);
        for (Site x = 1; x <= 19; ++x) ones[static_cast<std::size_t>(x)] += eta[x];
    }
    for (Site x = 1; x <= 19; ++x) {
        const double q = f(x / 20.0);
        EXPECT_NEAR(ones[static_cast<std::size_t>(x)] / double(draws), q, 4.0 * std::sqrt(q * (1 - q) / draws));
    }
}

TEST(Gillespie, ZeroTimeIsIdentity) {
    const ModelParams p = small(12);
    const auto eta0 = sample_initial(InitialProfile::constant(0.5), p, 9);
    EXPECT_EQ(run_gillespie(eta0, p, 0.0, 1), eta0);
}

TEST(Gillespie, BulkOnlyConservesParticles) {
    ModelParams p = small(30);
    p.r = p.r_prime = 1e-300;  // effectively closed
    p.b = p.b_prime = p.c = p.c_prime = 0.0;
    p.rho_bar = p.rho_bar_prime = 0.0;
    for (std::uint64_t seed = 0; seed < 20; ++seed) {
        const auto eta0 = sample_initial(InitialProfile::constant(0.4), p, seed);
        Rng rng(seed + 100);
        GillespieSimulator sim(p, eta0, rng);
        for (double t : {0.01, 0.05, 0.2}) {
            sim.advance_to(t);
            ASSERT_EQ(sim.state().particle_count(), eta0.particle_count());
        }
    }
}

TEST(Gillespie, ActiveBondBookkeeping) {
    const ModelParams p = small(25);
    Rng rng(5);
    GillespieSimulator sim(p, sample_initial(InitialProfile::constant(0.5), p, 5), rng);
    for (int k = 1; k <= 50; ++k) {
        sim.advance_to(0.002 * k);
        ASSERT_EQ(sim.active_bonds(), active_bond_count(sim.state()));
    }
}

TEST(Graphical, EmptyStreamIsIdentity) {
    const ModelParams p = small(10);
    const auto eta0 = sample_initial(InitialProfile::constant(0.5), p, 2);
    const MarkStream empty{p.N, 1.0, 0, {}};
    EXPECT_EQ(run_graphical(eta0, empty, 1.0), eta0);
}

TEST(Graphical, PlusMarkFillsFirstSite) {
    for (unsigned v : {0U, 1U}) {
        Configuration eta0(10);
        eta0.set(1, v);
        const MarkStream s{10, 1.0, 0, {{0.3, MarkType::Plus, Side::Left, 1}}};
        EXPECT_EQ(run_graphical(eta0, s, 1.0)[1], 1);
        EXPECT_EQ(run_graphical(eta0, s, 0.3)[1], v);  // marks at t_end are not yet applied
    }
}

TEST(Graphical, CopyAndBranchRules) {
    const int N = 10;
    for (unsigned a : {0U, 1U}) {
        for (unsigned b : {0U, 1U}) {
            Configuration eta0(N);
            eta0.set(1, a);
            eta0.set(2, b);
            eta0.set(N - 1, a);
            eta0.set(N - 2, b);
            const MarkStream copy{N, 1.0, 0, {{0.1, MarkType::Copy, Side::Left, 2}, {0.2, MarkType::Copy, Side::Right, N - 2}}};
            const MarkStream branch{N, 1.0, 0, {{0.1, MarkType::Branch, Side::Left, 2}, {0.2, MarkType::Branch, Side::Right, N - 2}}};
            const auto c = run_graphical(eta0, copy, 1.0);
            const auto br = run_graphical(eta0, branch, 1.0);
            EXPECT_EQ(c[2], a);
            EXPECT_EQ(c[N - 2], a);
            EXPECT_EQ(br[2], a | b);
            EXPECT_EQ(br[N - 2], a | b);
            EXPECT_EQ(c[1], a);
        }
    }
}

TEST(Graphical, HorizonExceeded) {
    const ModelParams p = small(10);
    const auto s = generate(p, 0.1, 1);
    EXPECT_THROW(run_graphical(Configuration(10), s, 0.2), std::out_of_range);
}

TEST(Graphical, Deterministic) {
    const ModelParams p = small(16);
    const auto s = generate(p, 0.3, 8);
    ASSERT_GT(total_marks(s), 0U);
    const auto eta0 = sample_initial(InitialProfile::constant(0.5), p, 4);
    EXPECT_EQ(run_graphical(eta0, s, 0.3), run_graphical(eta0, s, 0.3));
}

// Exact transient law at N=6 against each engine, per-site means and covariances.
class EngineLaw : public ::testing::TestWithParam<Engine> {};

TEST_P(EngineLaw, MatchesMatrixExponentialAtN6) {
    const ModelParams p = small(6);
    const auto f = InitialProfile::linear(0.3, 0.6);
    const double t = 0.5;
    const auto law = oracle::evolve(oracle::generator(p), oracle::product_law(6, [&](int x) { return f(x / 6.0); }), t);
    const std::uint64_t n = 40000;
    const auto est = sample_fields(f, p, {t}, n, 77, all_pairs(6), 1, GetParam());
    const auto& d = est.density[0];
    for (Site x = 1; x <= 5; ++x) EXPECT_NEAR(d.at(x), oracle::mean_at(law, x), 4.0 * d.se(x) + 1e-12) << x;
    const auto& c = est.correlation[0];
    for (std::size_t k = 0; k < c.pairs.size(); ++k) {
        const auto [x, y] = c.pairs[k];
        const double exact = oracle::joint_at(law, x, y) - oracle::mean_at(law, x) * oracle::mean_at(law, y);
        EXPECT_NEAR(c.values[k], exact, 4.0 * c.stderr_[k] + 1e-12) << x << "," << y;
    }
}

INSTANTIATE_TEST_SUITE_P(AllEngines, EngineLaw,
                         ::testing::Values(Engine::Gillespie, Engine::Graphical, Engine::Superposed),
                         [](const auto& info) {
                             return std::string(info.param == Engine::Gillespie   ? "Gillespie"
                                                : info.param == Engine::Graphical ? "Graphical"
                                                                                  : "Superposed");
                         });

TEST(Engines, GillespieAgreesWithGraphicalAtN8) {
    const ModelParams p = small(8);
    const auto f = InitialProfile::constant(0.5);
    const std::uint64_t n = 30000;
    const auto a = sample_fields(f, p, {0.3}, n, 1, all_pairs(8), 1, Engine::Gillespie);
    const auto b = sample_fields(f, p, {0.3}, n, 2, all_pairs(8), 1, Engine::Graphical);
    for (Site x = 1; x <= 7; ++x) {
        const double s = std::hypot(a.density[0].se(x), b.density[0].se(x));
        EXPECT_LT(std::abs(a.density[0].at(x) - b.density[0].at(x)), 4.0 * s) << x;
    }
    for (std::size_t k = 0; k < a.correlation[0].pairs.size(); ++k) {
        const double s = std::hypot(a.correlation[0].stderr_[k], b.correlation[0].stderr_[k]);
        EXPECT_LT(std::abs(a.correlation[0].values[k] - b.correlation[0].values[k]), 4.0 * s + 1e-12);
    }
}

TEST(Stationary, EmpiricalLawAtN5MatchesNullspace) {
    const ModelParams p = small(5);
    const auto pi = oracle::stationary(oracle::generator(p));
    std::vector<double> counts(16, 0.0);
    const int n = 40000;
    for (int i = 0; i < n; ++i) {
        Rng rng(replica_seed(55, static_cast<std::uint64_t>(i)));
        counts[run_gillespie(sample_initial(InitialProfile::constant(0.5), 5, rng), p, 10.0, rng).to_bits()] += 1.0;
    }
    double tv = 0.0;
    for (int s = 0; s < 16; ++s) tv += std::abs(counts[static_cast<std::size_t>(s)] / n - pi(s));
    EXPECT_LT(0.5 * tv, 0.015);
}

TEST(Stationary, ReservoirOnlyProductMeasureIsInvariant) {
    ModelParams p = small(5);
    p.b = p.b_prime = p.c = p.c_prime = 0.0;
    p.rho_bar = p.rho_bar_prime = 0.35;
    const auto Q = oracle::generator(p);
    const auto mu = oracle::product_law(5, [](int) { return 0.35; });
    EXPECT_LT((Q.transpose() * mu).cwiseAbs().maxCoeff(), 1e-9);
    // Detailed balance holds term by term.
    for (int s = 0; s < 16; ++s)
        for (int u = 0; u < 16; ++u) EXPECT_NEAR(mu(s) * Q(s, u), mu(u) * Q(u, s), 1e-9);
}

TEST(Stationary, BoundaryFlipsBreakProductMeasure) {
    ModelParams p = small(5);
    p.rho_bar = p.rho_bar_prime = 0.35;
    const auto mu = oracle::product_law(5, [](int) { return 0.35; });
    for (double c : {0.0, 0.3}) {
        for (double b : {0.0, 0.5}) {
            if (b == 0.0 && c == 0.0) continue;
            p.b = p.b_prime = b;
            p.c = p.c_prime = c;
            EXPECT_GT((oracle::generator(p).transpose() * mu).cwiseAbs().maxCoeff(), 1e-3) << b << " " << c;
        }
    }
}

TEST(Estimators, ZeroFillEquilibriumStaysFlat) {
    ModelParams p = small(20);
    p.b = p.b_prime = 0.0;
    p.rho_bar = p.rho_bar_prime = 0.3;
    const auto d = estimate_density(InitialProfile::constant(0.3), p, 0.2, 4000, 8, 1, Engine::Superposed);
    for (Site x = 1; x <= 19; ++x) EXPECT_NEAR(d.at(x), 0.3, 4.5 * std::sqrt(0.21 / 4000)) << x;
}

TEST(Superposed, MarkCountIsPoisson) {
    const ModelParams p = small(12);
    const SuperposedSampler s(p);
    double expected = p.bulk_rate() * (p.N - 2);
    for (const Clock& c : component_clocks(p))
        if (c.type != MarkType::Exchange) expected += c.rate;
    EXPECT_NEAR(s.total_rate(), expected, 1e-9 * expected);
    double sum = 0.0;
    const int n = 5000;
    Rng rng(1);
    Configuration eta(12);
    for (int i = 0; i < n; ++i) sum += static_cast<double>(s.advance(eta, 0.01, rng));
    EXPECT_NEAR(sum / n, expected * 0.01, 4.0 * std::sqrt(expected * 0.01 / n));
}
