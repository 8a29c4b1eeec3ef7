#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <map>
#include <sstream>

#include "ssep/marks.hpp"

using namespace ssep;

namespace {

ModelParams params10() {
    ModelParams p;
    p.N = 10;
    p.theta = 0.5;
    p.r = 1.0;
    p.rho_bar = 0.3;
    p.b = 0.5;
    p.c = 0.4;
    p.r_prime = 2.0;
    p.rho_bar_prime = 0.8;
    p.b_prime = 0.7;
    p.c_prime = 0.6;
    return p;
}

std::map<std::uint8_t, double> kind_rates(const ModelParams& p) {
    std::map<std::uint8_t, double> rates;
    for (const Clock& c : component_clocks(p)) rates[kind_code(c.type, c.side)] += c.rate;
    return rates;
}

// Kolmogorov distance between the sample and Exp(rate).
double ks_exponential(std::vector<double> xs, double rate) {
    std::sort(xs.begin(), xs.end());
    const double n = static_cast<double>(xs.size());
    double d = 0.0;
    for (std::size_t i = 0; i < xs.size(); ++i) {
        const double F = 1.0 - std::exp(-rate * xs[i]);
        d = std::max({d, (i + 1) / n - F, F - i / n});
    }
    return d;
}

}  // namespace

TEST(MarkStream, ClockIntensities) {
    const ModelParams p = params10();
    const auto clocks = component_clocks(p);
    ASSERT_EQ(clocks.size(), static_cast<std::size_t>(p.N + 6));
    const double s = std::pow(10.0, 1.5);
    auto rate_of = [&](MarkType t, Side side) {
        for (const Clock& c : clocks)
            if (c.type == t && c.side == side) return c.rate;
        return -1.0;
    };
    EXPECT_NEAR(rate_of(MarkType::Plus, Side::Left), s * 0.3, 1e-12);
    EXPECT_NEAR(rate_of(MarkType::Minus, Side::Left), s * 0.7, 1e-12);
    EXPECT_NEAR(rate_of(MarkType::Copy, Side::Left), s * 0.4, 1e-12);
    EXPECT_NEAR(rate_of(MarkType::Branch, Side::Left), s * 0.5, 1e-12);
    EXPECT_NEAR(rate_of(MarkType::Plus, Side::Right), s * 1.6, 1e-12);
    EXPECT_NEAR(rate_of(MarkType::Minus, Side::Right), s * 0.4, 1e-12);
    EXPECT_NEAR(rate_of(MarkType::Copy, Side::Right), s * 0.6, 1e-12);
    EXPECT_NEAR(rate_of(MarkType::Branch, Side::Right), s * 0.7, 1e-12);
    for (const Clock& c : clocks)
        if (c.type == MarkType::Exchange) {
            EXPECT_DOUBLE_EQ(c.rate, 100.0);
        }
}

TEST(MarkStream, ZeroHorizonIsEmpty) { EXPECT_TRUE(generate(params10(), 0.0, 1).empty()); }

TEST(MarkStream, NegativeHorizonRejected) { EXPECT_THROW(generate(params10(), -1.0, 1), std::invalid_argument); }

TEST(MarkStream, ExchangeOnlyCount) {
    ModelParams p;
    p.N = 5;
    p.r = 1.0;
    p.rho_bar = 0.5;
    const double T = 0.2;
    double total = 0.0;
    const int seeds = 2000;
    for (int s = 0; s < seeds; ++s) {
        const auto stream = generate(p, T, static_cast<std::uint64_t>(s), kind_bit(MarkType::Exchange, Side::Left));
        for (const Mark& m : stream.marks) ASSERT_EQ(m.type, MarkType::Exchange);
        total += static_cast<double>(stream.size());
    }
    const double mean = 3.0 * 25.0 * T;
    EXPECT_NEAR(total / seeds, mean, 4.0 * std::sqrt(mean / seeds));
}

TEST(MarkStream, PerKindCountsArePoisson) {
    const ModelParams p = params10();
    const double T = 0.1;
    const int seeds = 10000;
    const auto rates = kind_rates(p);
    std::map<std::uint8_t, double> sum, sum_sq;
    for (int s = 0; s < seeds; ++s) {
        std::map<std::uint8_t, double> count;
        for (const Mark& m : generate(p, T, static_cast<std::uint64_t>(s) + 1000).marks) count[m.code()] += 1.0;
        for (const auto& [code, rate] : rates) {
            sum[code] += count[code];
            sum_sq[code] += count[code] * count[code];
        }
    }
    for (const auto& [code, rate] : rates) {
        const double mu = rate * T;
        const double mean = sum[code] / seeds;
        EXPECT_NEAR(mean, mu, 4.0 * std::sqrt(mu / seeds)) << "kind " << int(code);
        const double var = sum_sq[code] / seeds - mean * mean;
        // Var of the sample variance of a Poisson(mu) count is about (mu + 2 mu^2) / n.
        EXPECT_NEAR(var, mu, 4.0 * std::sqrt((mu + 2.0 * mu * mu) / seeds)) << "kind " << int(code);
    }
}

TEST(MarkStream, InterArrivalTimesAreExponential) {
    // Long horizon so dropping each clock's censored last gap is negligible.
    const ModelParams p = params10();
    const double T = 20.0;
    const auto rates = kind_rates(p);
    std::map<std::pair<std::uint8_t, Site>, std::vector<double>> gaps;
    for (int s = 0; s < 100; ++s) {
        std::map<std::pair<std::uint8_t, Site>, double> last;
        for (const Mark& m : generate(p, T, static_cast<std::uint64_t>(s) * 7919).marks) {
            const auto key = std::make_pair(m.code(), m.position);
            const double prev = last.count(key) ? last[key] : 0.0;
            gaps[key].push_back(m.time - prev);
            last[key] = m.time;
        }
    }
    for (const auto& [key, xs] : gaps) {
        const double rate = key.first == 0 ? p.bulk_rate() : rates.at(key.first);
        const double crit = 1.949 / std::sqrt(static_cast<double>(xs.size()));  // level 0.001
        EXPECT_LT(ks_exponential(xs, rate), crit) << "kind " << int(key.first) << " at " << key.second;
    }
}

TEST(MarkStream, BranchFractionAmongLeftBoundaryMarks) {
    const ModelParams p = params10();
    std::uint64_t boundary = 0, branch = 0;
    for (int s = 0; s < 3000; ++s) {
        for (const Mark& m : generate(p, 0.2, static_cast<std::uint64_t>(s)).marks) {
            if (m.type == MarkType::Exchange || m.side != Side::Left) continue;
            ++boundary;
            branch += m.type == MarkType::Branch;
        }
    }
    const double q = p.b / (p.r + p.b + p.c);
    const double n = static_cast<double>(boundary);
    EXPECT_NEAR(branch / n, q, 4.0 * std::sqrt(q * (1 - q) / n));
}

TEST(MarkStream, SortedDistinctAndInWindow) {
    const auto s = generate(params10(), 0.3, 77);
    ASSERT_FALSE(s.empty());
    for (std::size_t i = 0; i < s.size(); ++i) {
        ASSERT_GE(s.marks[i].time, 0.0);
        ASSERT_LT(s.marks[i].time, 0.3);
        if (i) {
            ASSERT_LT(s.marks[i - 1].time, s.marks[i].time);
        }
    }
}

TEST(MarkStream, ReplayIsDeterministic) {
    const auto a = generate(params10(), 0.3, 123);
    const auto b = generate(params10(), 0.3, 123);
    EXPECT_EQ(a.marks, b.marks);
    EXPECT_NE(a.marks, generate(params10(), 0.3, 124).marks);
}

TEST(MarkStream, LongerHorizonExtendsPrefix) {
    const auto a = generate(params10(), 0.2, 9);
    const auto b = generate(params10(), 0.4, 9);
    EXPECT_EQ(restrict(b, 0.0, 0.2).marks, a.marks);
}

TEST(MarkStream, KindSubsetsReproduceIndependently) {
    const ModelParams p = params10();
    const KindMask left_branch = kind_bit(MarkType::Branch, Side::Left);
    const auto full = generate(p, 0.5, 31);
    const auto only = generate(p, 0.5, 31, left_branch);
    std::vector<Mark> filtered;
    for (const Mark& m : full.marks)
        if (m.type == MarkType::Branch && m.side == Side::Left) filtered.push_back(m);
    EXPECT_EQ(filtered, only.marks);
}

TEST(MarkStream, TieOrderIsKindThenPosition) {
    const Mark a{0.5, MarkType::Exchange, Side::Left, 4};
    const Mark b{0.5, MarkType::Exchange, Side::Left, 2};
    const Mark c{0.5, MarkType::Plus, Side::Left, 1};
    EXPECT_TRUE(mark_before(b, a));
    EXPECT_TRUE(mark_before(a, c));
    EXPECT_FALSE(mark_before(c, a));
}

TEST(Restrict, FullWindowIsIdentity) {
    const auto s = generate(params10(), 0.3, 5);
    EXPECT_EQ(restrict(s, 0.0, 0.3).marks, s.marks);
}

TEST(Restrict, EmptyWindow) {
    const auto s = generate(params10(), 0.3, 5);
    EXPECT_TRUE(restrict(s, 0.1, 0.1).empty());
}

TEST(Restrict, SplitAndConcatenate) {
    const auto s = generate(params10(), 0.3, 5);
    auto a = restrict(s, 0.0, 0.17).marks;
    const auto b = restrict(s, 0.17, 0.3).marks;
    a.insert(a.end(), b.begin(), b.end());
    EXPECT_EQ(a, s.marks);
}

TEST(Restrict, WindowOutsideHorizon) {
    const auto s = generate(params10(), 0.3, 5);
    EXPECT_THROW(restrict(s, 0.0, 0.4), std::out_of_range);
    EXPECT_THROW(restrict(s, 0.2, 0.1), std::out_of_range);
    EXPECT_THROW(restrict(s, -0.1, 0.1), std::out_of_range);
}

TEST(ReversedMarks, ReverseOrderAndClock) {
    const auto s = generate(params10(), 0.3, 5);
    const auto rev = reversed_marks(s, 0.2);
    const auto fwd = restrict(s, 0.0, 0.2).marks;
    ASSERT_EQ(rev.size(), fwd.size());
    for (std::size_t i = 0; i < rev.size(); ++i) {
        const Mark& f = fwd[fwd.size() - 1 - i];
        EXPECT_DOUBLE_EQ(rev[i].time, 0.2 - f.time);
        EXPECT_EQ(rev[i].code(), f.code());
        EXPECT_EQ(rev[i].position, f.position);
    }
}

TEST(BinaryDump, RoundTrip) {
    const auto s = generate(params10(), 0.3, 99);
    std::stringstream buf;
    write_binary(buf, s);
    EXPECT_EQ(buf.str().size(), s.size() * 11);
    const auto back = read_binary(buf, s.N, s.horizon);
    EXPECT_EQ(back.marks, s.marks);
}

TEST(BinaryDump, LittleEndianLayout) {
    MarkStream s{10, 1.0, 0, {{0.5, MarkType::Branch, Side::Right, 8}}};
    std::stringstream buf;
    write_binary(buf, s);
    const std::string bytes = buf.str();
    ASSERT_EQ(bytes.size(), 11U);
    // 0.5 = 0x3FE0000000000000
    EXPECT_EQ(static_cast<unsigned char>(bytes[7]), 0x3F);
    EXPECT_EQ(static_cast<unsigned char>(bytes[6]), 0xE0);
    EXPECT_EQ(static_cast<unsigned char>(bytes[8]), 8);  // branch, right
    EXPECT_EQ(static_cast<unsigned char>(bytes[9]), 8);
    EXPECT_EQ(static_cast<unsigned char>(bytes[10]), 0);
}

TEST(BinaryDump, RejectsBadRecords) {
    std::stringstream truncated(std::string(5, '\0'));
    EXPECT_THROW(read_binary(truncated, 10, 1.0), std::runtime_error);
    EXPECT_THROW(decode_mark(0.1, 9, 1), std::runtime_error);
}
