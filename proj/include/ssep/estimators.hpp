#pragma once

// Monte Carlo estimates of the density profile and two-point correlations.
//
// Replica i runs on its own engine seeded from replica_seed(seed, i). Every accumulator
// holds integer counts only, so merging is exact, associative and commutative
// and the estimates do not depend on the thread count.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <thread>
#include <utility>
#include <vector>

#include "ssep/forward.hpp"
#include "ssep/marks.hpp"
#include "ssep/model.hpp"
#include "ssep/profile.hpp"
#include "ssep/rng.hpp"

namespace ssep {

struct DensityField {
    double t = 0.0;
    std::vector<double> values;  // index x - 1 for site x
    std::vector<double> stderr_;
    std::uint64_t n_samples = 0;

    double at(Site x) const { return values.at(static_cast<std::size_t>(x - 1)); }
    double se(Site x) const { return stderr_.at(static_cast<std::size_t>(x - 1)); }
    int N() const { return static_cast<int>(values.size()) + 1; }
};

using SitePair = std::pair<Site, Site>;

struct CorrelationField {
    double t = 0.0;
    std::vector<SitePair> pairs;  // x < y
    std::vector<double> values;
    std::vector<double> stderr_;
    std::uint64_t n_samples = 0;
};

/// All pairs x < y of {1, ..., N-1}, row-major (upper-triangular storage order).
inline std::vector<SitePair> all_pairs(int N) {
    std::vector<SitePair> out;
    for (Site x = 1; x <= N - 1; ++x)
        for (Site y = x + 1; y <= N - 1; ++y) out.emplace_back(x, y);
    return out;
}

/// Counts of occupied sites and jointly occupied pairs over a set of samples.
class OccupationAccumulator {
public:
    OccupationAccumulator() = default;
    OccupationAccumulator(int N, std::vector<SitePair> pairs)
        : N_(N), ones_(static_cast<std::size_t>(N - 1), 0), pairs_(std::move(pairs)), both_(pairs_.size(), 0) {
        for (const auto& [x, y] : pairs_) {
            if (!(1 <= x && x < y && y <= N - 1)) throw std::invalid_argument("OccupationAccumulator: need 1 <= x < y <= N-1");
        }
    }

    void add(const Configuration& eta) {
        ++n_;
        const auto& occ = eta.raw();
        for (std::size_t i = 0; i < occ.size(); ++i) ones_[i] += occ[i];
        for (std::size_t k = 0; k < pairs_.size(); ++k) both_[k] += eta[pairs_[k].first] & eta[pairs_[k].second];
    }

    void merge(const OccupationAccumulator& other) {
        if (other.n_ == 0) return;
        if (n_ == 0 && ones_.empty()) {
            *this = other;
            return;
        }
        n_ += other.n_;
        for (std::size_t i = 0; i < ones_.size(); ++i) ones_[i] += other.ones_[i];
        for (std::size_t k = 0; k < both_.size(); ++k) both_[k] += other.both_[k];
    }

    std::uint64_t count() const { return n_; }
    std::uint64_t ones(Site x) const { return ones_[static_cast<std::size_t>(x - 1)]; }
    const std::vector<SitePair>& pairs() const { return pairs_; }

    DensityField density(double t) const {
        DensityField f;
        f.t = t;
        f.n_samples = n_;
        const double n = static_cast<double>(n_);
        for (std::uint64_t k : ones_) {
            const double p = n > 0 ? static_cast<double>(k) / n : 0.0;
            f.values.push_back(p);
            f.stderr_.push_back(n > 1 ? std::sqrt(p * (1.0 - p) / (n - 1.0)) : 0.0);
        }
        return f;
    }

    /// Unbiased covariance per pair; the standard error comes from the plug-in
    /// variance of (eta(x) - mean)(eta(y) - mean) over the 2x2 joint table.
    CorrelationField correlation(double t) const {
        CorrelationField f;
        f.t = t;
        f.pairs = pairs_;
        f.n_samples = n_;
        const double n = static_cast<double>(n_);
        for (std::size_t k = 0; k < pairs_.size(); ++k) {
            if (n_ < 2) {
                f.values.push_back(0.0);
                f.stderr_.push_back(0.0);
                continue;
            }
            const double px = static_cast<double>(ones(pairs_[k].first)) / n;
            const double py = static_cast<double>(ones(pairs_[k].second)) / n;
            const double p11 = static_cast<double>(both_[k]) / n;
            const double p10 = px - p11, p01 = py - p11, p00 = 1.0 - px - py + p11;
            const double mean_z = p11 - px * py;
            const double ez2 = p11 * sq((1 - px) * (1 - py)) + p10 * sq((1 - px) * py) + p01 * sq(px * (1 - py)) +
                               p00 * sq(px * py);
            f.values.push_back(mean_z * n / (n - 1.0));
            f.stderr_.push_back(std::sqrt(std::max(0.0, ez2 - mean_z * mean_z) / n));
        }
        return f;
    }

private:
    static double sq(double v) { return v * v; }

    int N_ = 0;
    std::uint64_t n_ = 0;
    std::vector<std::uint64_t> ones_;
    std::vector<SitePair> pairs_;
    std::vector<std::uint64_t> both_;
};

/// Runs fn(replica_index, rng, accumulator) for every replica, splitting the
/// replicas over `threads` workers with one accumulator each, then merges.
template <class Acc, class Fn>
Acc run_replicas(std::uint64_t n_replicas, unsigned threads, std::uint64_t seed, const Acc& prototype, Fn fn) {
    threads = std::max(1U, std::min<unsigned>(threads, static_cast<unsigned>(std::max<std::uint64_t>(1, n_replicas))));
    std::vector<Acc> partial(threads, prototype);
    auto work = [&](unsigned tid) {
        for (std::uint64_t i = tid; i < n_replicas; i += threads) {
            Rng rng(replica_seed(seed, i));
            fn(i, rng, partial[tid]);
        }
    };
    if (threads == 1) {
        work(0);
    } else {
        std::vector<std::jthread> pool;
        for (unsigned tid = 0; tid < threads; ++tid) pool.emplace_back(work, tid);
    }
    Acc total = prototype;
    for (const Acc& a : partial) total.merge(a);
    return total;
}

enum class Engine { Gillespie, Graphical, Superposed };

struct FieldEstimates {
    std::vector<DensityField> density;
    std::vector<CorrelationField> correlation;
};

namespace detail {
struct SnapshotAccumulator {
    std::vector<OccupationAccumulator> at_time;
    void merge(const SnapshotAccumulator& o) {
        for (std::size_t i = 0; i < at_time.size(); ++i) at_time[i].merge(o.at_time[i]);
    }
};
}  // namespace detail

/// One trajectory per replica from the product measure fitting f0, observed at
/// every time in `times` (ascending).
inline FieldEstimates sample_fields(const InitialProfile& profile, const ModelParams& params,
                                    const std::vector<double>& times, std::uint64_t n_samples, std::uint64_t seed,
                                    const std::vector<SitePair>& pairs = {}, unsigned threads = 1,
                                    Engine engine = Engine::Gillespie) {
    params.validate();
    if (n_samples < 1) throw std::invalid_argument("sample_fields: n_samples must be >= 1");
    if (!std::is_sorted(times.begin(), times.end()) || (!times.empty() && times.front() < 0.0)) {
        throw std::invalid_argument("sample_fields: times must be non-negative and ascending");
    }
    detail::SnapshotAccumulator proto;
    proto.at_time.assign(times.size(), OccupationAccumulator(params.N, pairs));
    const double horizon = times.empty() ? 0.0 : times.back();

    const SuperposedSampler superposed(params);
    auto replica = [&](std::uint64_t, Rng& rng, detail::SnapshotAccumulator& acc) {
        Configuration eta0 = sample_initial(profile, params.N, rng);
        if (engine == Engine::Gillespie) {
            GillespieSimulator sim(params, std::move(eta0), rng);
            for (std::size_t k = 0; k < times.size(); ++k) {
                sim.advance_to(times[k]);
                acc.at_time[k].add(sim.state());
            }
        } else if (engine == Engine::Superposed) {
            Configuration eta = std::move(eta0);
            double now = 0.0;
            for (std::size_t k = 0; k < times.size(); ++k) {
                superposed.advance(eta, times[k] - now, rng);
                now = times[k];
                acc.at_time[k].add(eta);
            }
        } else {
            MarkGenerator gen(params, horizon, rng());
            Configuration eta = std::move(eta0);
            auto pending = gen.next();
            for (std::size_t k = 0; k < times.size(); ++k) {
                while (pending && pending->time < times[k]) {
                    apply_mark(eta, *pending);
                    pending = gen.next();
                }
                acc.at_time[k].add(eta);
            }
        }
    };
    const auto total = run_replicas(n_samples, threads, seed, proto, replica);
    FieldEstimates out;
    for (std::size_t k = 0; k < times.size(); ++k) {
        out.density.push_back(total.at_time[k].density(times[k]));
        out.correlation.push_back(total.at_time[k].correlation(times[k]));
    }
    return out;
}

inline DensityField estimate_density(const InitialProfile& profile, const ModelParams& params, double t,
                                     std::uint64_t n_samples, std::uint64_t seed, unsigned threads = 1,
                                     Engine engine = Engine::Gillespie) {
    return sample_fields(profile, params, {t}, n_samples, seed, {}, threads, engine).density.front();
}

inline CorrelationField estimate_correlation(const InitialProfile& profile, const ModelParams& params, double t,
                                             std::uint64_t n_samples, std::uint64_t seed,
                                             const std::vector<SitePair>& pairs, unsigned threads = 1,
                                             Engine engine = Engine::Gillespie) {
    return sample_fields(profile, params, {t}, n_samples, seed, pairs, threads, engine).correlation.front();
}

/// Per-replica time averages of eta(x) over snapshots burn_in, burn_in + spacing, ..., <= t_end.
class TimeAverageAccumulator {
public:
    TimeAverageAccumulator() = default;
    explicit TimeAverageAccumulator(int N) : sum_(static_cast<std::size_t>(N - 1), 0), sum_sq_(sum_.size(), 0) {}

    void add_replica(const std::vector<std::uint64_t>& occupied_snapshots, std::uint64_t n_snapshots) {
        if (snapshots_ == 0) snapshots_ = n_snapshots;
        if (snapshots_ != n_snapshots) throw std::logic_error("TimeAverageAccumulator: snapshot count changed");
        ++replicas_;
        for (std::size_t i = 0; i < sum_.size(); ++i) {
            sum_[i] += occupied_snapshots[i];
            sum_sq_[i] += occupied_snapshots[i] * occupied_snapshots[i];
        }
    }
    void merge(const TimeAverageAccumulator& o) {
        if (o.replicas_ == 0) return;
        if (snapshots_ == 0) snapshots_ = o.snapshots_;
        replicas_ += o.replicas_;
        for (std::size_t i = 0; i < sum_.size(); ++i) {
            sum_[i] += o.sum_[i];
            sum_sq_[i] += o.sum_sq_[i];
        }
    }

    /// Mean of the replica averages; the standard error uses the spread between replicas.
    DensityField field(double t) const {
        DensityField f;
        f.t = t;
        f.n_samples = replicas_;
        const double r = static_cast<double>(replicas_), k = static_cast<double>(snapshots_);
        for (std::size_t i = 0; i < sum_.size(); ++i) {
            const double mean = static_cast<double>(sum_[i]) / (r * k);
            const double second = static_cast<double>(sum_sq_[i]) / (r * k * k);
            const double var = r > 1 ? std::max(0.0, second - mean * mean) * r / (r - 1.0) : 0.0;
            f.values.push_back(mean);
            f.stderr_.push_back(std::sqrt(var / std::max(1.0, r)));
        }
        return f;
    }

private:
    std::vector<std::uint64_t> sum_, sum_sq_;
    std::uint64_t snapshots_ = 0;
    std::uint64_t replicas_ = 0;
};

inline DensityField estimate_time_averaged_density(const InitialProfile& profile, const ModelParams& params,
                                                   double burn_in, double t_end, double spacing,
                                                   std::uint64_t n_replicas, std::uint64_t seed,
                                                   unsigned threads = 1, Engine engine = Engine::Gillespie) {
    params.validate();
    if (!(spacing > 0.0) || t_end < burn_in) throw std::invalid_argument("time average: need spacing > 0 and t_end >= burn_in");
    std::vector<double> grid;
    for (std::uint64_t k = 0;; ++k) {
        const double t = burn_in + static_cast<double>(k) * spacing;
        if (t > t_end + 1e-12) break;
        grid.push_back(t);
    }
    if (engine == Engine::Graphical) throw std::invalid_argument("time average: use the Gillespie or superposed engine");
    const SuperposedSampler superposed(params);
    auto replica = [&](std::uint64_t, Rng& rng, TimeAverageAccumulator& acc) {
        std::vector<std::uint64_t> occupied(static_cast<std::size_t>(params.N - 1), 0);
        auto record = [&](const Configuration& eta) {
            const auto& occ = eta.raw();
            for (std::size_t i = 0; i < occ.size(); ++i) occupied[i] += occ[i];
        };
        if (engine == Engine::Gillespie) {
            GillespieSimulator sim(params, sample_initial(profile, params.N, rng), rng);
            for (double t : grid) {
                sim.advance_to(t);
                record(sim.state());
            }
        } else {
            Configuration eta = sample_initial(profile, params.N, rng);
            double now = 0.0;
            for (double t : grid) {
                superposed.advance(eta, t - now, rng);
                now = t;
                record(eta);
            }
        }
        acc.add_replica(occupied, grid.size());
    };
    return run_replicas(n_replicas, threads, seed, TimeAverageAccumulator(params.N), replica).field(t_end);
}

}  // namespace ssep
