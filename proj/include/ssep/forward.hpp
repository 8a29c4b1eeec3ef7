#pragma once

// Forward simulation of eta_t: an event-driven (Gillespie) engine that tracks
// the active bonds, and a graphical engine that replays a mark stream.
// Time is macroscopic: the N^2 and N^(2-theta) factors live in the rates.

#include <algorithm>
#include <cstdint>
#include <random>
#include <stdexcept>
#include <vector>

#include "ssep/marks.hpp"
#include "ssep/model.hpp"
#include "ssep/profile.hpp"
#include "ssep/rng.hpp"

namespace ssep {

inline Configuration sample_initial(const InitialProfile& profile, int N, Rng& rng) {
    Configuration eta(N);
    for (Site x = 1; x <= N - 1; ++x) eta.set(x, rng.bernoulli(profile(static_cast<double>(x) / N)));
    return eta;
}

inline Configuration sample_initial(const InitialProfile& profile, const ModelParams& params, std::uint64_t seed) {
    Rng rng(seed);
    return sample_initial(profile, params.N, rng);
}

/// Applies one mark of the graphical construction in place.
inline void apply_mark(Configuration& eta, const Mark& m) {
    switch (m.type) {
        case MarkType::Exchange: eta.swap_sites(m.position, m.position + 1); break;
        case MarkType::Plus: eta.set(m.position, 1); break;
        case MarkType::Minus: eta.set(m.position, 0); break;
        case MarkType::Copy: {
            const Site source = m.side == Side::Left ? m.position - 1 : m.position + 1;
            eta.set(m.position, eta[source]);
            break;
        }
        case MarkType::Branch: {
            const Site source = m.side == Side::Left ? m.position - 1 : m.position + 1;
            if (eta[source]) eta.set(m.position, 1);
            break;
        }
    }
}

/// eta at time t_end (marks in [0, t_end) applied in order).
inline Configuration run_graphical(const Configuration& eta0, const MarkStream& stream, double t_end) {
    if (t_end > stream.horizon) throw std::out_of_range("run_graphical: t_end exceeds the stream horizon");
    if (eta0.N() != stream.N) throw std::invalid_argument("run_graphical: configuration and stream disagree on N");
    Configuration eta = eta0;
    for (const Mark& m : stream.marks) {
        if (m.time >= t_end) break;
        apply_mark(eta, m);
    }
    return eta;
}

/// Event-driven simulator; only bonds with eta(x) != eta(x+1) carry bulk rate.
class GillespieSimulator {
public:
    GillespieSimulator(const ModelParams& params, Configuration eta0, Rng& rng)
        : p_(params), eta_(std::move(eta0)), rng_(rng), pos_(static_cast<std::size_t>(params.N), -1) {
        if (eta_.N() != p_.N) throw std::invalid_argument("GillespieSimulator: configuration size mismatch");
        bulk_ = p_.bulk_rate();
        scale_ = p_.boundary_scale();
        active_.reserve(static_cast<std::size_t>(p_.N));
        for (Site x = 1; x <= p_.N - 2; ++x) refresh_bond(x);
    }

    double time() const { return time_; }
    const Configuration& state() const { return eta_; }
    std::uint64_t events() const { return events_; }
    int active_bonds() const { return static_cast<int>(active_.size()); }

    /// Runs until time t; the state at t is eta_t (memorylessness lets later calls resume).
    void advance_to(double t) {
        const int n = p_.N;
        while (true) {
            const BoundaryRates br = boundary_rates(eta_, p_);
            const double bulk_total = bulk_ * static_cast<double>(active_.size());
            const double total = bulk_total + scale_ * br.sum();
            if (!(total > 0.0)) break;
            const double dt = rng_.exponential(total);
            if (time_ + dt >= t) break;
            time_ += dt;
            ++events_;
            double u = rng_.uniform() * total;
            if (u < bulk_total) {
                const auto k = std::min(static_cast<std::size_t>(u / bulk_), active_.size() - 1);
                const Site x = active_[k];
                eta_.swap_sites(x, x + 1);
                refresh_neighbourhood(x);
                refresh_neighbourhood(x + 1);
                continue;
            }
            u = (u - bulk_total) / scale_;
            Site flipped;
            if (u < br.c_l1) {
                flipped = 1;
            } else if ((u -= br.c_l1) < br.c_l2) {
                flipped = 2;
            } else if ((u -= br.c_l2) < br.c_r1) {
                flipped = n - 1;
            } else {
                flipped = n - 2;
            }
            eta_.flip(flipped);
            refresh_neighbourhood(flipped);
        }
        time_ = std::max(time_, t);
    }

private:
    void refresh_neighbourhood(Site x) {
        if (x - 1 >= 1) refresh_bond(x - 1);
        if (x <= p_.N - 2) refresh_bond(x);
    }

    void refresh_bond(Site x) {
        const bool active = eta_[x] != eta_[x + 1];
        int& slot = pos_[static_cast<std::size_t>(x)];
        if (active && slot < 0) {
            slot = static_cast<int>(active_.size());
            active_.push_back(x);
        } else if (!active && slot >= 0) {
            const Site moved = active_.back();
            active_[static_cast<std::size_t>(slot)] = moved;
            pos_[static_cast<std::size_t>(moved)] = slot;
            active_.pop_back();
            slot = -1;
        }
    }

    ModelParams p_;
    Configuration eta_;
    Rng& rng_;
    double bulk_ = 0.0;
    double scale_ = 0.0;
    double time_ = 0.0;
    std::uint64_t events_ = 0;
    std::vector<Site> active_;
    std::vector<int> pos_;
};

/// Graphical construction sampled by superposition: over an interval of length
/// dt the number of marks is Poisson(total rate * dt) and each mark picks its
/// clock with probability proportional to the clock's rate.
class SuperposedSampler {
public:
    explicit SuperposedSampler(const ModelParams& params) : bulk_(params.bulk_rate()) {
        params.validate();
        for (const Clock& c : component_clocks(params)) {
            if (c.type == MarkType::Exchange) {
                ++bonds_;
            } else if (c.rate > 0.0) {
                boundary_.push_back(c);
            }
        }
        bulk_total_ = bulk_ * bonds_;
        total_ = bulk_total_;
        for (const Clock& c : boundary_) total_ += c.rate;
    }

    double total_rate() const { return total_; }

    /// Applies the marks of an interval of length dt to eta; returns the mark count.
    std::uint64_t advance(Configuration& eta, double dt, Rng& rng) const {
        if (dt <= 0.0) return 0;
        std::poisson_distribution<std::uint64_t> count(total_ * dt);
        const std::uint64_t n = count(rng);
        for (std::uint64_t i = 0; i < n; ++i) {
            double u = rng.uniform() * total_;
            if (u < bulk_total_) {
                const Site x = 1 + std::min(static_cast<Site>(u / bulk_), bonds_ - 1);
                eta.swap_sites(x, x + 1);
                continue;
            }
            u -= bulk_total_;
            const Clock* pick = &boundary_.back();
            for (const Clock& c : boundary_) {
                if (u < c.rate) {
                    pick = &c;
                    break;
                }
                u -= c.rate;
            }
            apply_mark(eta, Mark{0.0, pick->type, pick->side, pick->position});
        }
        return n;
    }

private:
    double bulk_;
    int bonds_ = 0;
    double bulk_total_ = 0.0;
    double total_ = 0.0;
    std::vector<Clock> boundary_;
};

inline Configuration run_gillespie(const Configuration& eta0, const ModelParams& params, double t_end, Rng& rng) {
    if (t_end < 0.0) throw std::invalid_argument("run_gillespie: negative t_end");
    GillespieSimulator sim(params, eta0, rng);
    sim.advance_to(t_end);
    return sim.state();
}

inline Configuration run_gillespie(const Configuration& eta0, const ModelParams& params, double t_end,
                                   std::uint64_t seed) {
    Rng rng(seed);
    return run_gillespie(eta0, params, t_end, rng);
}

}  // namespace ssep
