#pragma once

// Deterministic references: the discrete density and correlation equations
// (explicit Euler in time), the Dirichlet heat equation by its sine series,
// the linear stationary profile, and a random-walk Monte Carlo for the
// Feynman-Kac form of the discrete density equation.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <numbers>
#include <stdexcept>
#include <string>
#include <vector>

#include "ssep/estimators.hpp"
#include "ssep/model.hpp"
#include "ssep/profile.hpp"
#include "ssep/rng.hpp"

namespace ssep {

/// N^2 [f(x+1) + f(x-1) - 2 f(x)] for an interior index of f.
inline double discrete_laplacian_at(const std::vector<double>& f, int N, std::size_t x) {
    if (x == 0 || x + 1 >= f.size()) throw std::out_of_range("discrete_laplacian: boundary index");
    const double n2 = static_cast<double>(N) * N;
    return n2 * (f[x + 1] + f[x - 1] - 2.0 * f[x]);
}

/// Laplacian at every interior index; the two end entries are left at 0.
inline std::vector<double> discrete_laplacian(const std::vector<double>& f, int N) {
    if (f.size() < 3) throw std::invalid_argument("discrete_laplacian: need at least three values");
    std::vector<double> out(f.size(), 0.0);
    for (std::size_t x = 1; x + 1 < f.size(); ++x) out[x] = discrete_laplacian_at(f, N, x);
    return out;
}

inline std::vector<double> stationary_profile(double alpha, double alpha_prime, const std::vector<double>& u_grid) {
    std::vector<double> out;
    out.reserve(u_grid.size());
    for (double u : u_grid) out.push_back(alpha + u * (alpha_prime - alpha));
    return out;
}

/// Dirichlet data at sites 3 and N-3: constants, or functions of time.
struct DensityBoundary {
    std::function<double(double)> left;
    std::function<double(double)> right;

    static DensityBoundary fixed(double alpha, double alpha_prime) {
        return {[alpha](double) { return alpha; }, [alpha_prime](double) { return alpha_prime; }};
    }
    static DensityBoundary traces(std::function<double(double)> left, std::function<double(double)> right) {
        return {std::move(left), std::move(right)};
    }
    static DensityBoundary from_params(const ModelParams& p) {
        const auto d = boundary_densities(p);
        return fixed(d.alpha, d.alpha_prime);
    }
};

struct DiscreteDensitySolution {
    int N = 0;
    double dt = 0.0;
    std::vector<double> times;
    std::vector<std::vector<double>> values;  // values[k][x] for x in 0..N; only 3..N-3 are meaningful

    double at(std::size_t k, Site x) const {
        if (x < 3 || x > N - 3) throw std::out_of_range("DiscreteDensitySolution: site outside {3..N-3}");
        return values.at(k)[static_cast<std::size_t>(x)];
    }
};

namespace detail {
inline void check_density_dt(int N, double dt) {
    const double n2 = static_cast<double>(N) * N;
    if (!(dt > 0.0) || dt > 1.0 / (4.0 * n2)) throw std::domain_error("solve_discrete_density: dt must lie in (0, 1/(4N^2)]");
}

// Steps needed to cover `span` with steps no longer than dt.
inline std::uint64_t step_count(double span, double dt) {
    if (span <= 0.0) return 0;
    return static_cast<std::uint64_t>(std::ceil(span / dt - 1e-9));
}

/// Explicit Euler for d rho/dt = Delta_N rho on {4..N-4} with Dirichlet data at 3 and N-3.
class DensityStepper {
public:
    DensityStepper(int N, const InitialProfile& f0, DensityBoundary boundary)
        : N_(N), bc_(std::move(boundary)), rho_(static_cast<std::size_t>(N + 1), 0.0), next_(rho_) {
        if (N < 8) throw std::invalid_argument("discrete density: need N >= 8");
        for (Site x = 3; x <= N - 3; ++x) rho_[static_cast<std::size_t>(x)] = f0(static_cast<double>(x) / N);
        apply_boundary(0.0);
    }

    const std::vector<double>& rho() const { return rho_; }

    // Advances from t to t + dt; boundary data are imposed at the new time.
    void step(double t, double dt) {
        const double k = dt * static_cast<double>(N_) * N_;
        for (std::size_t x = 4; x <= static_cast<std::size_t>(N_ - 4); ++x) {
            next_[x] = rho_[x] + k * (rho_[x + 1] + rho_[x - 1] - 2.0 * rho_[x]);
        }
        std::swap(rho_, next_);
        apply_boundary(t + dt);
    }

private:
    void apply_boundary(double t) {
        rho_[3] = bc_.left(t);
        rho_[static_cast<std::size_t>(N_ - 3)] = bc_.right(t);
    }

    int N_;
    DensityBoundary bc_;
    std::vector<double> rho_, next_;
};
}  // namespace detail

/// Solution at each of `output_times` (ascending, >= 0). The step is shrunk so every output time is hit exactly.
inline DiscreteDensitySolution solve_discrete_density(int N, const InitialProfile& f0, const DensityBoundary& boundary,
                                                      const std::vector<double>& output_times, double dt = 0.0) {
    if (dt == 0.0) dt = 1.0 / (8.0 * N * N);
    detail::check_density_dt(N, dt);
    if (!std::is_sorted(output_times.begin(), output_times.end()) ||
        (!output_times.empty() && output_times.front() < 0.0)) {
        throw std::invalid_argument("solve_discrete_density: output times must be non-negative and ascending");
    }
    DiscreteDensitySolution sol;
    sol.N = N;
    sol.dt = dt;
    detail::DensityStepper stepper(N, f0, boundary);
    double t = 0.0;
    for (double target : output_times) {
        const auto n = detail::step_count(target - t, dt);
        const double h = n ? (target - t) / static_cast<double>(n) : 0.0;
        const double start = t;
        for (std::uint64_t i = 0; i < n; ++i) stepper.step(start + static_cast<double>(i) * h, h);
        t = target;
        sol.times.push_back(target);
        sol.values.push_back(stepper.rho());
    }
    return sol;
}

inline DiscreteDensitySolution solve_discrete_density(const ModelParams& params, const InitialProfile& f0,
                                                      const std::vector<double>& output_times, double dt = 0.0) {
    params.validate();
    return solve_discrete_density(params.N, f0, DensityBoundary::from_params(params), output_times, dt);
}

struct HeatSolution {
    std::vector<double> values;
    double truncation_bound = 0.0;  // bound on the omitted tail of the series
    int n_modes = 0;
};

/// Sine coefficients of f0 - rho* by composite Simpson quadrature.
inline std::vector<double> heat_coefficients(const InitialProfile& f0, double alpha, double alpha_prime, int n_modes,
                                             int n_intervals = 20000) {
    if (n_intervals % 2) ++n_intervals;
    const double h = 1.0 / n_intervals;
    std::vector<double> g(static_cast<std::size_t>(n_intervals + 1));
    for (int i = 0; i <= n_intervals; ++i) {
        const double u = i * h;
        g[static_cast<std::size_t>(i)] = f0(u) - (alpha + u * (alpha_prime - alpha));
    }
    std::vector<double> c(static_cast<std::size_t>(n_modes + 1), 0.0);
    for (int k = 1; k <= n_modes; ++k) {
        double s = 0.0;
        // Endpoints vanish: sin(k pi 0) = sin(k pi) = 0.
        for (int i = 1; i < n_intervals; ++i) {
            const double w = (i % 2) ? 4.0 : 2.0;
            s += w * g[static_cast<std::size_t>(i)] * std::sin(k * std::numbers::pi * i * h);
        }
        c[static_cast<std::size_t>(k)] = 2.0 * s * h / 3.0;
    }
    return c;
}

/// Dirichlet heat equation on [0,1] with values alpha, alpha' at the ends, by its sine series.
/// With n_modes = 0 the series is cut once the tail bound falls below 1e-13 (at most 4000 modes).
inline HeatSolution heat_solution(const InitialProfile& f0, double alpha, double alpha_prime, double t,
                                  const std::vector<double>& u_grid, int n_modes = 0) {
    if (t < 0.0) throw std::invalid_argument("heat_solution: negative time");
    if (n_modes < 0) throw std::invalid_argument("heat_solution: n_modes must be >= 1");
    HeatSolution out;
    if (t == 0.0) {
        for (double u : u_grid) out.values.push_back(f0(u));
        return out;
    }
    double sup = 0.0;
    for (int i = 0; i <= 4000; ++i) {
        const double u = i / 4000.0;
        sup = std::max(sup, std::abs(f0(u) - (alpha + u * (alpha_prime - alpha))));
    }
    auto tail = [&](int n) {
        double s = 0.0;
        for (int k = n + 1;; ++k) {
            const double term = std::exp(-k * k * std::numbers::pi * std::numbers::pi * t);
            s += term;
            if (term < 1e-300 || term < 1e-18 * s || k > n + 1000000) break;
        }
        return 2.0 * sup * s;
    };
    if (n_modes == 0) {
        n_modes = 1;
        while (n_modes < 4000 && tail(n_modes) > 1e-13) n_modes = std::min(4000, n_modes * 2);
    }
    out.n_modes = n_modes;
    out.truncation_bound = tail(n_modes);
    const auto c = heat_coefficients(f0, alpha, alpha_prime, n_modes);
    for (double u : u_grid) {
        double v = alpha + u * (alpha_prime - alpha);
        for (int k = 1; k <= n_modes; ++k) {
            v += c[static_cast<std::size_t>(k)] * std::exp(-k * k * std::numbers::pi * std::numbers::pi * t) *
                 std::sin(k * std::numbers::pi * u);
        }
        out.values.push_back(v);
    }
    return out;
}

enum class PairRegion : std::uint8_t { Outside, Bulk, Diagonal, Boundary };

/// The pair domain: bulk cells, the diagonal {(x, x+1)}, and the boundary where phi is prescribed.
struct CorrelationDomain {
    int N = 0;
    double delta = 0.0;
    Site a = 0;  // ceil(delta N)
    Site b = 0;  // floor((1 - delta) N)
    std::vector<PairRegion> region;  // (N+1)^2, row-major in x

    static CorrelationDomain make(int N, double delta) {
        if (!(delta > 0.0 && delta < 0.5)) throw std::invalid_argument("correlation domain: delta must lie in (0, 1/2)");
        CorrelationDomain d;
        d.N = N;
        d.delta = delta;
        d.a = static_cast<Site>(std::ceil(delta * N - 1e-9));
        d.b = static_cast<Site>(std::floor((1.0 - delta) * N + 1e-9));
        if (d.a < 5 || d.b > N - 6 || d.a + 2 > d.b) throw std::invalid_argument("correlation domain: delta grid degenerate");
        d.region.assign(static_cast<std::size_t>((N + 1) * (N + 1)), PairRegion::Outside);
        for (Site x = 4; x <= d.b - 1; ++x)
            for (Site y = std::max(d.a + 1, x + 2); y <= N - 4; ++y) d.set(x, y, PairRegion::Bulk);
        for (Site x = d.a; x <= d.b; ++x) d.set(x, x + 1, PairRegion::Diagonal);
        for (Site y = d.a; y <= N - 3; ++y) d.set(3, y, PairRegion::Boundary);
        for (Site x = 3; x <= d.b; ++x) d.set(x, N - 3, PairRegion::Boundary);
        for (Site y = d.b + 2; y <= N - 4; ++y) d.set(d.b, y, PairRegion::Boundary);
        for (Site x = 4; x <= d.a - 1; ++x) d.set(x, d.a, PairRegion::Boundary);
        return d;
    }

    PairRegion at(Site x, Site y) const {
        if (x < 0 || y < 0 || x > N || y > N) return PairRegion::Outside;
        return region[index(x, y)];
    }
    std::size_t index(Site x, Site y) const {
        return static_cast<std::size_t>(x) * static_cast<std::size_t>(N + 1) + static_cast<std::size_t>(y);
    }
    std::vector<SitePair> cells(PairRegion kind) const {
        std::vector<SitePair> out;
        for (Site x = 0; x <= N; ++x)
            for (Site y = 0; y <= N; ++y)
                if (at(x, y) == kind) out.push_back({x, y});
        return out;
    }

private:
    void set(Site x, Site y, PairRegion r) { region[index(x, y)] = r; }
};

struct CorrelationSolution {
    CorrelationDomain domain;
    double dt = 0.0;
    std::vector<double> times;
    std::vector<std::vector<double>> phi;  // phi[k] indexed by domain.index(x, y)

    double at(std::size_t k, Site x, Site y) const {
        if (domain.at(x, y) == PairRegion::Outside) throw std::out_of_range("CorrelationSolution: pair outside the domain");
        return phi.at(k)[domain.index(x, y)];
    }
    /// Largest |phi| over bulk and diagonal cells at output k.
    double sup_abs(std::size_t k) const {
        double m = 0.0;
        for (std::size_t i = 0; i < domain.region.size(); ++i) {
            const auto r = domain.region[i];
            if (r == PairRegion::Bulk || r == PairRegion::Diagonal) m = std::max(m, std::abs(phi.at(k)[i]));
        }
        return m;
    }
};

/// Prescribed phi on the domain boundary as a function of (x, y, t); zero by default.
using PairBoundary = std::function<double(Site, Site, double)>;

/// Integrates the correlation equation with zero initial data, co-integrating the
/// density equation for the diagonal source -N^2 (rho(x+1) - rho(x))^2.
inline CorrelationSolution solve_correlation_field(int N, const InitialProfile& f0, const DensityBoundary& density_bc,
                                                   double delta, const std::vector<double>& output_times,
                                                   double dt = 0.0, const PairBoundary& boundary = {}) {
    const double n2 = static_cast<double>(N) * N;
    if (dt == 0.0) dt = 1.0 / (8.0 * n2);
    if (!(dt > 0.0) || dt > 1.0 / (8.0 * n2)) throw std::domain_error("solve_correlation_field: dt must lie in (0, 1/(8N^2)]");
    if (!std::is_sorted(output_times.begin(), output_times.end()) ||
        (!output_times.empty() && output_times.front() < 0.0)) {
        throw std::invalid_argument("solve_correlation_field: output times must be non-negative and ascending");
    }
    CorrelationSolution sol;
    sol.domain = CorrelationDomain::make(N, delta);
    sol.dt = dt;
    const CorrelationDomain& d = sol.domain;
    const auto bulk = d.cells(PairRegion::Bulk);
    const auto diag = d.cells(PairRegion::Diagonal);
    const auto edge = d.cells(PairRegion::Boundary);
    std::vector<double> phi(d.region.size(), 0.0), next(phi);
    auto impose = [&](std::vector<double>& f, double t) {
        for (const auto& [x, y] : edge) f[d.index(x, y)] = boundary ? boundary(x, y, t) : 0.0;
    };
    impose(phi, 0.0);
    detail::DensityStepper density(N, f0, density_bc);
    const std::size_t row = static_cast<std::size_t>(N + 1);

    auto step = [&](double t, double h) {
        const double k = h * n2;
        const auto& rho = density.rho();
        for (const auto& [x, y] : bulk) {
            const std::size_t i = d.index(x, y);
            next[i] = phi[i] + k * (phi[i + row] + phi[i - row] + phi[i + 1] + phi[i - 1] - 4.0 * phi[i]);
        }
        for (const auto& [x, y] : diag) {
            const std::size_t i = d.index(x, y);
            const double grad = rho[static_cast<std::size_t>(y)] - rho[static_cast<std::size_t>(x)];
            // (x-1, x+1) and (x, x+2)
            next[i] = phi[i] + k * (phi[i - row] + phi[i + 1] - 2.0 * phi[i]) - h * n2 * grad * grad;
        }
        impose(next, t + h);
        std::swap(phi, next);
        density.step(t, h);
    };

    double t = 0.0;
    for (double target : output_times) {
        const auto n = detail::step_count(target - t, dt);
        const double h = n ? (target - t) / static_cast<double>(n) : 0.0;
        const double start = t;
        for (std::uint64_t i = 0; i < n; ++i) step(start + static_cast<double>(i) * h, h);
        t = target;
        sol.times.push_back(target);
        sol.phi.push_back(phi);
    }
    return sol;
}

struct HittingEstimate {
    double p_left = 0.0;
    double p_right = 0.0;
    double p_interior = 0.0;
    double interior_term = 0.0;  // E[f0(X_t / N); no exit by t]
    double estimate = 0.0;       // p_left alpha + p_right alpha' + interior_term
    double stderr_ = 0.0;        // of `estimate`
    std::uint64_t n_samples = 0;
};

/// Walks jumping to each neighbour at rate N^2, absorbed at 3 and N-3, run for time t.
inline HittingEstimate rw_hitting_estimate(Site x, double t, const ModelParams& params, const InitialProfile& f0,
                                           std::uint64_t n_samples, std::uint64_t seed, unsigned threads = 1) {
    params.validate();
    const int N = params.N;
    if (x < 3 || x > N - 3) throw std::out_of_range("rw_hitting_estimate: site outside {3..N-3}");
    if (n_samples < 1 || t < 0.0) throw std::invalid_argument("rw_hitting_estimate: need n_samples >= 1 and t >= 0");
    const auto bd = boundary_densities(params);
    struct Acc {
        std::uint64_t n = 0, left = 0, right = 0, inside = 0;
        std::vector<std::uint64_t> end_counts;
        void merge(const Acc& o) {
            n += o.n;
            left += o.left;
            right += o.right;
            inside += o.inside;
            if (end_counts.size() < o.end_counts.size()) end_counts.resize(o.end_counts.size(), 0);
            for (std::size_t i = 0; i < o.end_counts.size(); ++i) end_counts[i] += o.end_counts[i];
        }
    };
    const double rate = 2.0 * static_cast<double>(N) * N;
    auto fn = [&](std::uint64_t, Rng& rng, Acc& acc) {
        if (acc.end_counts.empty()) acc.end_counts.assign(static_cast<std::size_t>(N + 1), 0);
        ++acc.n;
        Site pos = x;
        double s = 0.0;
        while (pos != 3 && pos != N - 3) {
            s += rng.exponential(rate);
            if (s >= t) break;
            pos += rng.bernoulli(0.5) ? 1 : -1;
        }
        if (pos == 3) {
            ++acc.left;
        } else if (pos == N - 3) {
            ++acc.right;
        } else {
            ++acc.inside;
            ++acc.end_counts[static_cast<std::size_t>(pos)];
        }
    };
    const Acc acc = run_replicas(n_samples, threads, seed, Acc{}, fn);
    HittingEstimate e;
    const double n = static_cast<double>(acc.n);
    e.n_samples = acc.n;
    e.p_left = static_cast<double>(acc.left) / n;
    e.p_right = static_cast<double>(acc.right) / n;
    e.p_interior = static_cast<double>(acc.inside) / n;
    // Per-walk value Y = alpha on left exit, alpha' on right exit, f0(X_t/N) otherwise.
    double sum = acc.left * bd.alpha + acc.right * bd.alpha_prime;
    double sum_sq = acc.left * bd.alpha * bd.alpha + acc.right * bd.alpha_prime * bd.alpha_prime;
    double interior = 0.0;
    for (std::size_t y = 0; y < acc.end_counts.size(); ++y) {
        if (!acc.end_counts[y]) continue;
        const double v = f0(static_cast<double>(y) / N);
        interior += static_cast<double>(acc.end_counts[y]) * v;
        sum_sq += static_cast<double>(acc.end_counts[y]) * v * v;
    }
    sum += interior;
    e.interior_term = interior / n;
    e.estimate = sum / n;
    const double var = n > 1 ? std::max(0.0, sum_sq / n - e.estimate * e.estimate) * n / (n - 1.0) : 0.0;
    e.stderr_ = std::sqrt(var / n);
    return e;
}

}  // namespace ssep
