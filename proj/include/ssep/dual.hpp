#pragma once

// Backward resolution of eta_t(x): determination trees built from the flag
// process, the exact mark-by-mark resolver, and per-run dual statistics.

#include <algorithm>
#include <cstdint>
#include <functional>
#include <limits>
#include <optional>
#include <stdexcept>
#include <unordered_map>
#include <vector>

#include "ssep/flags.hpp"
#include "ssep/forward.hpp"
#include "ssep/marks.hpp"
#include "ssep/model.hpp"
#include "ssep/rng.hpp"
#include "ssep/tree.hpp"

namespace ssep {

/// Grows the tree as the flag process reports boundary events.
/// Leaves sharing a label are updated together, so a tree can grow much faster
/// than the flag set; past max_vertices the builder stops and reports overflow.
class TreeBuilder {
public:
    explicit TreeBuilder(std::size_t max_vertices = std::numeric_limits<std::size_t>::max(), int root_label = 1)
        : tree_(root_label), max_vertices_(max_vertices) {
        open(root_label).push_back(tree_.root());
    }

    void on_reservoir(int label, Sign value, double) {
        if (overflow_) return;
        if (tree_.size() + open(label).size() > max_vertices_) {
            overflow_ = true;
            return;
        }
        for (int v : open(label)) tree_.add_child(v, 0, value);
        open(label).clear();
    }
    void on_branch(int label, int other, double) {
        if (overflow_) return;
        if (tree_.size() + 2 * open(label).size() > max_vertices_) {
            overflow_ = true;
            return;
        }
        std::vector<int> mine;
        mine.swap(open(label));
        std::vector<int> stay;
        for (int v : mine) {
            stay.push_back(tree_.add_child(v, label));
            open(other).push_back(tree_.add_child(v, other));
        }
        auto& slot = open(label);
        slot.insert(slot.end(), stay.begin(), stay.end());
    }
    void on_merge(int, int, double) { failed_ = true; }

    bool failed() const { return failed_; }
    bool overflow() const { return overflow_; }

    /// Gives every still-open leaf labelled k the sign returned for k.
    /// nullopt when the tree exceeds the vertex cap.
    template <class Close>
    std::optional<DeterminationTree> close(Close&& sign_of_label) {
        std::size_t pending = 0;
        for (const auto& leaves : open_) pending += leaves.size();
        if (overflow_ || tree_.size() + pending > max_vertices_) {
            overflow_ = true;
            return std::nullopt;
        }
        for (std::size_t k = 1; k < open_.size(); ++k) {
            if (open_[k].empty()) continue;
            const Sign s = sign_of_label(static_cast<int>(k));
            for (int v : open_[k]) tree_.add_child(v, 0, s);
            open_[k].clear();
        }
        return tree_;
    }

private:
    std::vector<int>& open(int label) {
        if (static_cast<std::size_t>(label) >= open_.size()) open_.resize(static_cast<std::size_t>(label) + 1);
        return open_[static_cast<std::size_t>(label)];
    }

    DeterminationTree tree_;
    std::size_t max_vertices_;
    std::vector<std::vector<int>> open_;
    bool failed_ = false;
    bool overflow_ = false;
};

struct TreeResult {
    std::optional<DeterminationTree> tree;  // nullopt: the construction failed or overflowed
    DualStats stats;
    bool overflow = false;
    bool failed() const { return stats.failed; }
};

namespace detail {
inline TreeResult finish_tree(TreeBuilder& builder, const FlagRun& run, const std::function<Sign(Site)>& close_at) {
    TreeResult out;
    out.stats = run.stats;
    if (!builder.failed() && !builder.overflow()) {
        const FlagSet& survivors = run.final_set;
        out.tree = builder.close([&](int label) { return close_at(survivors.position_of(label)); });
    }
    out.overflow = builder.overflow();
    return out;
}
}  // namespace detail

/// Tree for eta_t(x), using the marks of [0, t) in reverse and eta0 at the surviving flags.
inline TreeResult build_determination_tree(Site x, const ModelParams& params, const MarkStream& stream, double t,
                                           const Configuration& eta0,
                                           std::size_t max_vertices = std::numeric_limits<std::size_t>::max()) {
    if (x < 1 || x > params.N - 1) throw std::out_of_range("build_determination_tree: site outside Lambda_N");
    if (stream.N != params.N || eta0.N() != params.N) throw std::invalid_argument("build_determination_tree: N mismatch");
    const auto marks = reversed_marks(stream, t);
    TreeBuilder builder(max_vertices);
    const FlagRun run = run_flag_process(FlagSet::single(params.N, x), marks, t, FlagDynamics::Branching, false, &builder);
    return detail::finish_tree(builder, run, [&](Site y) { return eta0[y] ? Sign::Plus : Sign::Minus; });
}

/// Same tree law, driven by the flag generator; surviving leaves are closed by `close_at(site, rng)`.
inline TreeResult sample_determination_tree(Site x, const ModelParams& params, double t, Rng& rng,
                                            const std::function<Sign(Site, Rng&)>& close_at,
                                            std::size_t max_vertices = std::numeric_limits<std::size_t>::max()) {
    if (x < 1 || x > params.N - 1) throw std::out_of_range("sample_determination_tree: site outside Lambda_N");
    TreeBuilder builder(max_vertices);
    const FlagRun run =
        simulate_flag_process(FlagSet::single(params.N, x), params, t, rng, FlagDynamics::Branching, false, &builder);
    return detail::finish_tree(builder, run, [&](Site y) { return close_at(y, rng); });
}

/// Per-site index of the marks that can change a site, for repeated backward queries on one stream.
class DualResolver {
public:
    explicit DualResolver(const MarkStream& stream) : stream_(stream), touching_(static_cast<std::size_t>(stream.N + 1)) {
        for (std::size_t i = 0; i < stream.marks.size(); ++i) {
            const Mark& m = stream.marks[i];
            if (m.type == MarkType::Exchange) {
                touching_[static_cast<std::size_t>(m.position)].push_back(i);
                touching_[static_cast<std::size_t>(m.position + 1)].push_back(i);
            } else {
                touching_[static_cast<std::size_t>(m.position)].push_back(i);
            }
        }
    }

    /// eta_t(x) for the given initial configuration.
    int resolve(Site x, double t, const Configuration& eta0) const {
        if (t > stream_.horizon) throw std::out_of_range("resolve_site: time beyond stream horizon");
        if (x < 1 || x > stream_.N - 1) throw std::out_of_range("resolve_site: site outside Lambda_N");
        if (eta0.N() != stream_.N) throw std::invalid_argument("resolve_site: N mismatch");
        const auto end = std::lower_bound(stream_.marks.begin(), stream_.marks.end(), t,
                                          [](const Mark& m, double s) { return m.time < s; });
        return evaluate(x, static_cast<std::size_t>(end - stream_.marks.begin()), eta0);
    }

private:
    static constexpr std::size_t none = static_cast<std::size_t>(-1);

    // Index of the last mark before position k touching site x.
    std::size_t last_touching(Site x, std::size_t k) const {
        const auto& list = touching_[static_cast<std::size_t>(x)];
        auto it = std::lower_bound(list.begin(), list.end(), k);
        return it == list.begin() ? none : *(it - 1);
    }

    static std::uint64_t key(Site x, std::size_t k) { return (static_cast<std::uint64_t>(k) << 16) | static_cast<std::uint64_t>(x); }

    // Value of site x after the first k marks. Iterative: frames wait on branch marks.
    int evaluate(Site x0, std::size_t k0, const Configuration& eta0) const {
        struct Frame {
            Site x;
            std::size_t k;
            std::uint64_t entry;
            int stage;
            Site source;
            std::size_t j;
        };
        std::unordered_map<std::uint64_t, std::uint8_t> memo;
        std::vector<Frame> stack{{x0, k0, key(x0, k0), 0, 0, 0}};
        int ret = 0;
        auto finish = [&](int value) {
            memo[stack.back().entry] = static_cast<std::uint8_t>(value);
            ret = value;
            stack.pop_back();
        };
        while (!stack.empty()) {
            Frame& f = stack.back();
            if (f.stage == 1) {
                if (ret == 1) {
                    finish(1);
                } else {
                    f.stage = 2;
                    const Site target = f.x;
                    const std::size_t j = f.j;
                    stack.push_back({target, j, key(target, j), 0, 0, 0});
                }
                continue;
            }
            if (f.stage == 2) {
                finish(ret);
                continue;
            }
            bool done = false;
            while (!done) {
                if (auto hit = memo.find(key(f.x, f.k)); hit != memo.end()) {
                    finish(hit->second);
                    break;
                }
                const std::size_t j = last_touching(f.x, f.k);
                if (j == none) {
                    finish(eta0[f.x]);
                    break;
                }
                const Mark& m = stream_.marks[j];
                const Site source = m.side == Side::Left ? m.position - 1 : m.position + 1;
                switch (m.type) {
                    case MarkType::Exchange:
                        f.x = f.x == m.position ? m.position + 1 : m.position;
                        f.k = j;
                        break;
                    case MarkType::Plus: finish(1); done = true; break;
                    case MarkType::Minus: finish(0); done = true; break;
                    case MarkType::Copy:
                        f.x = source;
                        f.k = j;
                        break;
                    case MarkType::Branch: {
                        f.stage = 1;
                        f.j = j;
                        f.source = source;
                        stack.push_back({source, j, key(source, j), 0, 0, 0});
                        done = true;
                        break;
                    }
                }
            }
        }
        return ret;
    }

    const MarkStream& stream_;
    std::vector<std::vector<std::size_t>> touching_;
};

inline int resolve_site(Site x, double t, const Configuration& eta0, const MarkStream& stream) {
    return DualResolver(stream).resolve(x, t, eta0);
}

/// Statistics of the flag process started from {x}, driven by the reversed marks of [0, t).
inline DualStats dual_statistics(Site x, const ModelParams& params, const MarkStream& stream, double t) {
    if (stream.N != params.N) throw std::invalid_argument("dual_statistics: N mismatch");
    const auto marks = reversed_marks(stream, t);
    return run_flag_process<NullFlagObserver>(FlagSet::single(params.N, x), marks, t, FlagDynamics::Branching).stats;
}

/// Same statistics, sampled from the flag generator without materialising a stream.
inline DualStats sample_dual_statistics(Site x, const ModelParams& params, double t, Rng& rng) {
    return simulate_flag_process<NullFlagObserver>(FlagSet::single(params.N, x), params, t, rng).stats;
}

}  // namespace ssep
