#pragma once

// Boundary-driven symmetric exclusion on {1, ..., N-1} with slow reservoirs.
//
// Bulk: every bond (x, x+1) is stirred at rate N^2.
// Left boundary, all rates multiplied by N^(2-theta):
//   site 1 is refreshed from a Bernoulli(rho_bar) reservoir at rate r,
//   site 2 copies site 1 at rate c,
//   site 2 is filled if site 1 is occupied at rate b.
// The right boundary mirrors this with primed parameters on sites N-1, N-2.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

namespace ssep {

using Site = int;

struct ModelParams {
    int N = 100;
    double theta = 0.5;

    double r = 1.0;
    double rho_bar = 0.5;
    double b = 0.0;
    double c = 0.0;

    double r_prime = 1.0;
    double rho_bar_prime = 0.5;
    double b_prime = 0.0;
    double c_prime = 0.0;

    /// (1 - theta) / 2, the exponent of the relaxation time scale at the boundary.
    double theta_hat() const { return (1.0 - theta) / 2.0; }

    /// Dual branching process dies out a.s. iff the fill rate is below the reservoir rate.
    bool h1_holds() const { return b < r && b_prime < r_prime; }

    double bulk_rate() const { return static_cast<double>(N) * N; }
    double boundary_scale() const { return std::pow(static_cast<double>(N), 2.0 - theta); }

    Site first() const { return 1; }
    Site last() const { return N - 1; }
    int num_sites() const { return N - 1; }

    /// Throws std::domain_error on the first violated invariant.
    void validate() const {
        auto fail = [](const std::string& what) { throw std::domain_error("ModelParams: " + what); };
        if (N < 5) fail("N must be >= 5");
        if (!(theta > 0.0 && theta < 1.0)) fail("theta must lie in (0,1)");
        for (double v : {r, b, c, r_prime, b_prime, c_prime, rho_bar, rho_bar_prime}) {
            if (!std::isfinite(v) || v < 0.0) fail("rates must be finite and non-negative");
        }
        if (!(r > 0.0) || !(r_prime > 0.0)) fail("reservoir rates r, r' must be positive");
        if (rho_bar > 1.0 || rho_bar_prime > 1.0) fail("reservoir densities must lie in [0,1]");
    }
};

/// Rates in the (alpha_1, gamma_1, alpha_2, gamma_2, beta_1, delta_1, beta_2, delta_2)
/// convention: alpha_1 = r rho, gamma_1 = r (1-rho), alpha_2 = b + c, gamma_2 = c
/// and the primed mirror on the right.
struct PartOneRates {
    double alpha1, gamma1, alpha2, gamma2;
    double beta1, delta1, beta2, delta2;
};

inline ModelParams from_part_one(const PartOneRates& p, int N, double theta) {
    if (p.alpha2 < p.gamma2 || p.beta2 < p.delta2) {
        throw std::domain_error("from_part_one: need alpha2 >= gamma2 and beta2 >= delta2 (fill rate b >= 0)");
    }
    ModelParams m;
    m.N = N;
    m.theta = theta;
    m.r = p.alpha1 + p.gamma1;
    m.rho_bar = m.r > 0.0 ? p.alpha1 / m.r : 0.0;
    m.c = p.gamma2;
    m.b = p.alpha2 - p.gamma2;
    m.r_prime = p.beta1 + p.delta1;
    m.rho_bar_prime = m.r_prime > 0.0 ? p.beta1 / m.r_prime : 0.0;
    m.c_prime = p.delta2;
    m.b_prime = p.beta2 - p.delta2;
    m.validate();
    return m;
}

inline PartOneRates to_part_one(const ModelParams& m) {
    return {m.r * m.rho_bar,           m.r * (1.0 - m.rho_bar),
            m.b + m.c,                 m.c,
            m.r_prime * m.rho_bar_prime, m.r_prime * (1.0 - m.rho_bar_prime),
            m.b_prime + m.c_prime,     m.c_prime};
}

/// Root in [0,1] of r (rho - a) + b a (1 - a) = 0.
///
/// Closed form (sqrt((r-b)^2 + 4 b r rho) + b - r) / (2b), evaluated in the
/// rationalized form 2 r rho / (sqrt(D) + r - b) whenever r >= b so that small b
/// does not cancel. b = 0 degenerates to a = rho.
inline double alpha_from_params(double r, double b, double rho_bar) {
    if (!(rho_bar >= 0.0 && rho_bar <= 1.0)) throw std::domain_error("alpha_from_params: rho_bar outside [0,1]");
    if (!(r > 0.0)) throw std::domain_error("alpha_from_params: r must be positive");
    if (!(b >= 0.0) || !std::isfinite(b)) throw std::domain_error("alpha_from_params: b must be non-negative");
    if (b == 0.0) return rho_bar;
    const double disc = std::sqrt((r - b) * (r - b) + 4.0 * b * r * rho_bar);
    double a;
    if (r >= b) {
        const double denom = disc + r - b;
        a = denom > 0.0 ? 2.0 * r * rho_bar / denom : 0.0;
    } else {
        a = (disc + b - r) / (2.0 * b);
    }
    return std::clamp(a, 0.0, 1.0);
}

struct BoundaryDensities {
    double alpha;
    double alpha_prime;
};

inline BoundaryDensities boundary_densities(const ModelParams& p) {
    return {alpha_from_params(p.r, p.b, p.rho_bar), alpha_from_params(p.r_prime, p.b_prime, p.rho_bar_prime)};
}

/// Occupancy vector on {1, ..., N-1}; indexed by site, not by offset.
class Configuration {
public:
    Configuration() = default;
    explicit Configuration(int N, std::uint8_t fill = 0) : occ_(static_cast<std::size_t>(N - 1), fill ? 1 : 0) {
        if (N < 2) throw std::invalid_argument("Configuration: N must be >= 2");
    }
    static Configuration from_bits(int N, std::uint64_t bits) {
        Configuration eta(N);
        for (Site x = 1; x <= N - 1; ++x) eta.set(x, (bits >> (x - 1)) & 1U);
        return eta;
    }

    int N() const { return static_cast<int>(occ_.size()) + 1; }
    int size() const { return static_cast<int>(occ_.size()); }

    std::uint8_t operator[](Site x) const { return occ_[static_cast<std::size_t>(x - 1)]; }
    std::uint8_t at(Site x) const {
        check(x);
        return (*this)[x];
    }
    void set(Site x, unsigned v) {
        check(x);
        occ_[static_cast<std::size_t>(x - 1)] = v ? 1 : 0;
    }
    void flip(Site x) {
        check(x);
        occ_[static_cast<std::size_t>(x - 1)] ^= 1U;
    }
    void swap_sites(Site x, Site y) {
        check(x);
        check(y);
        std::swap(occ_[static_cast<std::size_t>(x - 1)], occ_[static_cast<std::size_t>(y - 1)]);
    }

    int particle_count() const {
        int n = 0;
        for (auto v : occ_) n += v;
        return n;
    }
    /// Bit x-1 holds site x. Only meaningful for N <= 65.
    std::uint64_t to_bits() const {
        std::uint64_t bits = 0;
        for (std::size_t i = 0; i < occ_.size(); ++i) bits |= static_cast<std::uint64_t>(occ_[i]) << i;
        return bits;
    }
    const std::vector<std::uint8_t>& raw() const { return occ_; }

    friend bool operator==(const Configuration&, const Configuration&) = default;

private:
    void check(Site x) const {
        if (x < 1 || x > size()) throw std::out_of_range("Configuration: site " + std::to_string(x) + " outside Lambda_N");
    }
    std::vector<std::uint8_t> occ_;
};

/// Un-scaled boundary flip rates; the simulator multiplies them by N^(2-theta).
struct BoundaryRates {
    double c_l1, c_l2, c_r1, c_r2;
    double sum() const { return c_l1 + c_l2 + c_r1 + c_r2; }
};

inline BoundaryRates boundary_rates(const Configuration& eta, const ModelParams& p) {
    const int n = p.N;
    const double e1 = eta[1], e2 = eta[2], f1 = eta[n - 1], f2 = eta[n - 2];
    BoundaryRates rates;
    rates.c_l1 = p.r * (p.rho_bar * (1.0 - e1) + (1.0 - p.rho_bar) * e1);
    rates.c_r1 = p.r_prime * (p.rho_bar_prime * (1.0 - f1) + (1.0 - p.rho_bar_prime) * f1);
    rates.c_l2 = p.c * (e1 * (1.0 - e2) + (1.0 - e1) * e2) + p.b * e1 * (1.0 - e2);
    rates.c_r2 = p.c_prime * (f1 * (1.0 - f2) + (1.0 - f1) * f2) + p.b_prime * f1 * (1.0 - f2);
    return rates;
}

struct Transition {
    enum class Kind : std::uint8_t { Exchange, Flip };
    Kind kind;
    Site x;  // exchange: bond (x, x+1); flip: the flipped site

    static Transition exchange(Site x) { return {Kind::Exchange, x}; }
    static Transition flip(Site x) { return {Kind::Flip, x}; }
};

inline Configuration apply_transition(const Configuration& eta, Transition move) {
    const int n = eta.N();
    Configuration out = eta;
    if (move.kind == Transition::Kind::Exchange) {
        if (move.x < 1 || move.x > n - 2) throw std::out_of_range("apply_transition: bond index outside [1, N-2]");
        out.swap_sites(move.x, move.x + 1);
    } else {
        const Site x = move.x;
        if (x != 1 && x != 2 && x != n - 2 && x != n - 1) {
            throw std::out_of_range("apply_transition: flips only act on sites 1, 2, N-2, N-1");
        }
        out.flip(x);
    }
    return out;
}

inline int active_bond_count(const Configuration& eta) {
    int k = 0;
    for (Site x = 1; x + 1 <= eta.size(); ++x) k += eta[x] != eta[x + 1];
    return k;
}

/// Total rate of transitions that change the configuration.
inline double total_jump_rate(const Configuration& eta, const ModelParams& p) {
    return p.bulk_rate() * active_bond_count(eta) + p.boundary_scale() * boundary_rates(eta, p).sum();
}

}  // namespace ssep
