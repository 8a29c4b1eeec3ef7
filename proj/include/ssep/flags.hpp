#pragma once

// The flag (set-of-unknowns) processes, run in the dual clock.
//
// Branching dynamics A: exchange marks move flags (labels swap when both ends
// are flagged); a plus/minus mark deletes a flag at site 1 (N-1); a branch mark
// with site 2 (N-2) flagged adds a flag at site 1 (N-1); a copy mark moves the
// flag from site 2 to site 1, or deletes it when site 1 is already flagged,
// which is the failure event of the determination tree.
//
// Frozen dynamics B: same motion, plus/minus/branch marks ignored, and a copy
// mark with both boundary sites flagged swaps the two flags. |B| is conserved.

#include <algorithm>
#include <cstdint>
#include <limits>
#include <optional>
#include <random>
#include <stdexcept>
#include <utility>
#include <vector>

#include "ssep/marks.hpp"
#include "ssep/model.hpp"
#include "ssep/rng.hpp"
#include "ssep/tree.hpp"

namespace ssep {

struct Flag {
    int label;
    Site position;
    friend bool operator==(const Flag&, const Flag&) = default;
};

/// At most one flag per site; labels are unique and never reused.
class FlagSet {
public:
    FlagSet() = default;
    explicit FlagSet(int N) : label_at_(static_cast<std::size_t>(N + 1), 0) {}

    static FlagSet single(int N, Site x) {
        FlagSet a(N);
        a.add(x);
        return a;
    }
    static FlagSet of_sites(int N, const std::vector<Site>& sites) {
        FlagSet a(N);
        for (Site x : sites) a.add(x);
        return a;
    }

    int N() const { return static_cast<int>(label_at_.size()) - 1; }
    int size() const { return count_; }
    bool empty() const { return count_ == 0; }
    int next_label() const { return next_label_; }
    /// Labels handed out so far.
    int labels_used() const { return next_label_ - 1; }

    bool flagged(Site x) const { return label_at_[static_cast<std::size_t>(x)] != 0; }
    int label_at(Site x) const { return label_at_[static_cast<std::size_t>(x)]; }
    Site position_of(int label) const {
        return label < static_cast<int>(position_.size()) ? position_[static_cast<std::size_t>(label)] : 0;
    }

    /// Adds a flag labelled with the smallest unused label; returns the label.
    int add(Site x) {
        check(x);
        if (flagged(x)) throw std::logic_error("FlagSet: site already flagged");
        const int label = next_label_++;
        label_at_[static_cast<std::size_t>(x)] = label;
        position_.resize(static_cast<std::size_t>(next_label_), 0);
        position_[static_cast<std::size_t>(label)] = x;
        ++count_;
        return label;
    }
    int remove(Site x) {
        const int label = label_at(x);
        if (label == 0) throw std::logic_error("FlagSet: removing an unflagged site");
        label_at_[static_cast<std::size_t>(x)] = 0;
        position_[static_cast<std::size_t>(label)] = 0;
        --count_;
        return label;
    }
    void move(Site from, Site to) {
        const int label = label_at(from);
        if (label == 0 || flagged(to)) throw std::logic_error("FlagSet: invalid move");
        label_at_[static_cast<std::size_t>(from)] = 0;
        label_at_[static_cast<std::size_t>(to)] = label;
        position_[static_cast<std::size_t>(label)] = to;
    }
    /// Exchanges the contents of two sites (either may be empty).
    void exchange(Site x, Site y) {
        const int lx = label_at(x), ly = label_at(y);
        label_at_[static_cast<std::size_t>(x)] = ly;
        label_at_[static_cast<std::size_t>(y)] = lx;
        if (lx) position_[static_cast<std::size_t>(lx)] = y;
        if (ly) position_[static_cast<std::size_t>(ly)] = x;
    }

    /// Flags sorted by position.
    std::vector<Flag> flags() const {
        std::vector<Flag> out;
        for (Site x = 1; x <= N() - 1; ++x)
            if (flagged(x)) out.push_back({label_at(x), x});
        return out;
    }
    std::vector<Site> sites() const {
        std::vector<Site> out;
        for (Site x = 1; x <= N() - 1; ++x)
            if (flagged(x)) out.push_back(x);
        return out;
    }

private:
    void check(Site x) const {
        if (x < 1 || x > N() - 1) throw std::out_of_range("FlagSet: site outside Lambda_N");
    }

    std::vector<int> label_at_;
    std::vector<Site> position_{0};
    int next_label_ = 1;
    int count_ = 0;
};

struct DualStats {
    int kappa = 1;          // labels used
    double lifespan = 0.0;  // extinction time, or the horizon if the set survived
    Site max_position = 0;
    bool failed = false;
    bool hit_horizon = false;
    int boundary_events = 0;  // changes of |A|
    int first_change = 0;     // sign of the first change of |A|: +1 branch, -1 deletion, 0 none
};

enum class FlagDynamics { Branching, Frozen };

/// Receives the events a determination tree is built from. All callbacks optional.
struct NullFlagObserver {
    void on_reservoir(int /*label*/, Sign /*value*/, double /*time*/) {}
    void on_branch(int /*label*/, int /*other_label*/, double /*time*/) {}
    void on_merge(int /*removed_label*/, int /*kept_label*/, double /*time*/) {}
};

struct FlagSnapshot {
    double time;
    std::vector<Flag> flags;
};

/// State machine of one flag process; feed it marks in increasing dual time.
template <class Observer = NullFlagObserver>
class FlagProcess {
public:
    FlagProcess(FlagSet initial, FlagDynamics dynamics, Observer* observer = nullptr)
        : set_(std::move(initial)), dynamics_(dynamics), observer_(observer) {
        if (set_.empty()) throw std::invalid_argument("FlagProcess: initial set must be non-empty");
        stats_.kappa = set_.labels_used();
        for (Site x : set_.sites()) stats_.max_position = std::max(stats_.max_position, x);
    }

    const FlagSet& set() const { return set_; }
    const DualStats& stats() const { return stats_; }
    bool extinct() const { return set_.empty(); }

    /// Applies a mark at dual time `time`. Returns true if the flag set changed.
    bool apply(const Mark& m, double time) {
        const int N = set_.N();
        const Site s1 = m.side == Side::Left ? 1 : N - 1;
        const Site s2 = m.side == Side::Left ? 2 : N - 2;
        const int before = set_.size();
        bool changed = false;
        switch (m.type) {
            case MarkType::Exchange: {
                const Site x = m.position;
                if (set_.flagged(x) || set_.flagged(x + 1)) {
                    set_.exchange(x, x + 1);
                    if (set_.flagged(x + 1)) track(x + 1);
                    changed = true;
                }
                break;
            }
            case MarkType::Plus:
            case MarkType::Minus:
                if (dynamics_ == FlagDynamics::Branching && set_.flagged(s1)) {
                    const int k = set_.remove(s1);
                    if (observer_) observer_->on_reservoir(k, m.type == MarkType::Plus ? Sign::Plus : Sign::Minus, time);
                    changed = true;
                }
                break;
            case MarkType::Copy:
                if (set_.flagged(s2)) {
                    if (!set_.flagged(s1)) {
                        set_.move(s2, s1);
                    } else if (dynamics_ == FlagDynamics::Frozen) {
                        set_.exchange(s1, s2);
                    } else {
                        const int kept = set_.label_at(s1);
                        const int removed = set_.remove(s2);
                        stats_.failed = true;
                        if (observer_) observer_->on_merge(removed, kept, time);
                    }
                    changed = true;
                }
                break;
            case MarkType::Branch:
                if (dynamics_ == FlagDynamics::Branching && set_.flagged(s2)) {
                    const int k = set_.label_at(s2);
                    int other = set_.label_at(s1);
                    if (other == 0) {
                        other = set_.add(s1);
                        track(s1);
                        changed = true;
                    }
                    if (observer_) observer_->on_branch(k, other, time);
                }
                break;
        }
        const int after = set_.size();
        if (after != before) {
            if (stats_.boundary_events == 0) stats_.first_change = after > before ? 1 : -1;
            ++stats_.boundary_events;
        }
        stats_.kappa = set_.labels_used();
        if (after == 0 && before > 0) stats_.lifespan = time;
        return changed;
    }

    /// Moves the only flag along a stretch of pure exchange motion that reached `to`.
    void relocate(Site from, Site to, Site furthest) {
        if (from != to) set_.move(from, to);
        track(std::max(to, furthest));
    }

    void finish(double horizon) {
        if (!set_.empty()) {
            stats_.hit_horizon = true;
            stats_.lifespan = horizon;
        }
    }

private:
    void track(Site x) { stats_.max_position = std::max(stats_.max_position, x); }

    FlagSet set_;
    FlagDynamics dynamics_;
    Observer* observer_;
    DualStats stats_;
};

/// Samples the next mark that can affect a flag set, by the rates of the
/// clocks adjacent to the flags. Equal in law to scanning a full stream.
class LocalMarkSampler {
public:
    explicit LocalMarkSampler(const ModelParams& params) : p_(params) {
        bulk_ = p_.bulk_rate();
        const double s = p_.boundary_scale();
        plus_l_ = s * p_.r * p_.rho_bar;
        minus_l_ = s * p_.r * (1.0 - p_.rho_bar);
        copy_l_ = s * p_.c;
        branch_l_ = s * p_.b;
        plus_r_ = s * p_.r_prime * p_.rho_bar_prime;
        minus_r_ = s * p_.r_prime * (1.0 - p_.rho_bar_prime);
        copy_r_ = s * p_.c_prime;
        branch_r_ = s * p_.b_prime;
    }

    /// Next relevant mark strictly after `now`, or nullopt if it falls at or after `horizon`.
    std::optional<Mark> next(const FlagSet& set, double now, double horizon, Rng& rng, FlagDynamics dynamics) {
        const int N = p_.N;
        candidates_.clear();
        bonds_.clear();
        for (Site x : set.sites()) {
            if (x >= 2) bonds_.push_back(x - 1);
            if (x <= N - 2) bonds_.push_back(x);
        }
        std::sort(bonds_.begin(), bonds_.end());
        bonds_.erase(std::unique(bonds_.begin(), bonds_.end()), bonds_.end());
        double total = bulk_ * static_cast<double>(bonds_.size());
        const bool branching = dynamics == FlagDynamics::Branching;
        auto offer = [&](double rate, MarkType t, Side side, Site pos) {
            if (rate > 0.0) {
                candidates_.push_back({rate, Mark{0.0, t, side, pos}});
                total += rate;
            }
        };
        if (branching && set.flagged(1)) {
            offer(plus_l_, MarkType::Plus, Side::Left, 1);
            offer(minus_l_, MarkType::Minus, Side::Left, 1);
        }
        if (set.flagged(2)) {
            offer(copy_l_, MarkType::Copy, Side::Left, 2);
            if (branching) offer(branch_l_, MarkType::Branch, Side::Left, 2);
        }
        if (branching && set.flagged(N - 1)) {
            offer(plus_r_, MarkType::Plus, Side::Right, N - 1);
            offer(minus_r_, MarkType::Minus, Side::Right, N - 1);
        }
        if (set.flagged(N - 2)) {
            offer(copy_r_, MarkType::Copy, Side::Right, N - 2);
            if (branching) offer(branch_r_, MarkType::Branch, Side::Right, N - 2);
        }
        if (!(total > 0.0)) return std::nullopt;
        const double t = now + rng.exponential(total);
        if (t >= horizon) return std::nullopt;
        double u = rng.uniform() * total;
        const double bulk_total = bulk_ * static_cast<double>(bonds_.size());
        Mark m;
        if (u < bulk_total) {
            const auto k = std::min(static_cast<std::size_t>(u / bulk_), bonds_.size() - 1);
            m = Mark{t, MarkType::Exchange, Side::Left, bonds_[k]};
            return m;
        }
        u -= bulk_total;
        for (const auto& [rate, mark] : candidates_) {
            if (u < rate) {
                m = mark;
                m.time = t;
                return m;
            }
            u -= rate;
        }
        m = candidates_.back().second;
        m.time = t;
        return m;
    }

private:
    ModelParams p_;
    double bulk_, plus_l_, minus_l_, copy_l_, branch_l_, plus_r_, minus_r_, copy_r_, branch_r_;
    std::vector<std::pair<double, Mark>> candidates_;
    std::vector<Site> bonds_;
};

struct FlagRun {
    FlagSet final_set;
    DualStats stats;
    std::vector<FlagSnapshot> trajectory;  // initial state, then one entry per change
};

namespace detail {
template <class Observer, class NextMark>
FlagRun drive_flags(FlagProcess<Observer>& proc, double t_end, bool record, NextMark&& next_mark) {
    FlagRun run;
    if (record) run.trajectory.push_back({0.0, proc.set().flags()});
    while (!proc.extinct()) {
        auto m = next_mark(proc.set());
        if (!m) break;
        const bool changed = proc.apply(*m, m->time);
        if (record && changed) run.trajectory.push_back({m->time, proc.set().flags()});
    }
    proc.finish(t_end);
    run.final_set = proc.set();
    run.stats = proc.stats();
    return run;
}
}  // namespace detail

/// Drives a flag process with the marks of [0, t_end) taken in order (dual time = stream time).
template <class Observer = NullFlagObserver>
FlagRun run_flag_process(const FlagSet& A0, const std::vector<Mark>& marks, double t_end, FlagDynamics dynamics,
                         bool record = false, Observer* observer = nullptr) {
    FlagProcess<Observer> proc(A0, dynamics, observer);
    std::size_t i = 0;
    return detail::drive_flags(proc, t_end, record, [&](const FlagSet&) -> std::optional<Mark> {
        if (i >= marks.size() || marks[i].time >= t_end) return std::nullopt;
        return marks[i++];
    });
}

inline FlagRun run_flag_process(const FlagSet& A0, const MarkStream& stream, double t_end, bool record = false) {
    if (t_end > stream.horizon) throw std::out_of_range("run_flag_process: t_end exceeds the stream horizon");
    return run_flag_process<NullFlagObserver>(A0, stream.marks, t_end, FlagDynamics::Branching, record);
}

inline FlagRun run_frozen_flag_process(const FlagSet& A0, const MarkStream& stream, double t_end, bool record = false) {
    if (t_end > stream.horizon) throw std::out_of_range("run_frozen_flag_process: t_end exceeds the stream horizon");
    return run_flag_process<NullFlagObserver>(A0, stream.marks, t_end, FlagDynamics::Frozen, record);
}

/// Same process driven by its generator directly (only clocks next to flags are sampled).
template <class Observer = NullFlagObserver>
FlagRun simulate_flag_process(const FlagSet& A0, const ModelParams& params, double t_end, Rng& rng,
                              FlagDynamics dynamics = FlagDynamics::Branching, bool record = false,
                              Observer* observer = nullptr) {
    FlagProcess<Observer> proc(A0, dynamics, observer);
    LocalMarkSampler sampler(params);
    const int N = params.N;
    const double jump_rate = 2.0 * params.bulk_rate();
    double now = 0.0;
    return detail::drive_flags(proc, t_end, record, [&](const FlagSet& set) -> std::optional<Mark> {
        // A lone flag in {3..N-3} only feels its two exchange clocks: a simple random walk
        // with jumps at rate 2N^2, run here until it reaches 2 or N-2 or the horizon.
        if (!record && set.size() == 1) {
            const Site x = set.sites().front();
            if (x >= 3 && x <= N - 3) {
                std::poisson_distribution<std::uint64_t> budget(jump_rate * (t_end - now));
                const std::uint64_t available = budget(rng);
                Site pos = x, furthest = x;
                std::uint64_t steps = 0, bits = 0;
                int left = 0;
                while (steps < available && pos > 2 && pos < N - 2) {
                    if (left == 0) {
                        bits = rng();
                        left = 64;
                    }
                    pos += (bits & 1U) ? 1 : -1;
                    bits >>= 1;
                    --left;
                    ++steps;
                    furthest = std::max(furthest, pos);
                }
                proc.relocate(x, pos, furthest);
                if (pos > 2 && pos < N - 2) {
                    now = t_end;
                    return std::nullopt;
                }
                // The k-th of `available` uniform jump times on [now, t_end).
                std::gamma_distribution<double> ga(static_cast<double>(steps), 1.0);
                std::gamma_distribution<double> gb(static_cast<double>(available - steps + 1), 1.0);
                const double a = ga(rng), b = gb(rng);
                now += (t_end - now) * a / (a + b);
            }
        }
        auto m = sampler.next(set, now, t_end, rng, dynamics);
        if (m) now = m->time;
        return m;
    });
}

}  // namespace ssep
