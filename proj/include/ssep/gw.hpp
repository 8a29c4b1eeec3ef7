#pragma once

// Galton-Watson tree law of a single flag's boundary excursions, and the
// Monte Carlo fixed point P(L(T) = +) that identifies the boundary value alpha.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <map>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "ssep/dual.hpp"
#include "ssep/estimators.hpp"
#include "ssep/model.hpp"
#include "ssep/rng.hpp"
#include "ssep/tree.hpp"

namespace ssep {

struct OutcomeProbs {
    double p_plus = 0.0;
    double p_minus = 0.0;
    double p_branch = 0.0;
};

enum class OutcomeMode { FiniteN, Limit };

/// Law of the first boundary mark that acts on a flag entering site 2 (N-2 on the right).
inline OutcomeProbs outcome_probs(const ModelParams& params, Side side, OutcomeMode mode) {
    params.validate();
    const bool left = side == Side::Left;
    const double r = left ? params.r : params.r_prime;
    const double b = left ? params.b : params.b_prime;
    const double c = left ? params.c : params.c_prime;
    const double rho = left ? params.rho_bar : params.rho_bar_prime;
    if (mode == OutcomeMode::Limit) {
        if (!(r + b > 0.0)) throw std::domain_error("outcome_probs: r + b must be positive");
        const double plus = r * rho / (r + b), minus = r * (1.0 - rho) / (r + b);
        return {plus, minus, 1.0 - plus - minus};
    }
    const double m = std::pow(static_cast<double>(params.N), params.theta);
    const double p1_plus = (c + m) * r * rho / ((b + c + m) * (r + m));
    const double p1_minus = (c + m) * r * (1.0 - rho) / ((b + c + m) * (r + m));
    const double p2 = b / (b + c + m);
    const double total = p1_plus + p1_minus + p2;
    if (!(total > 0.0)) throw std::domain_error("outcome_probs: degenerate boundary rates");
    const double plus = p1_plus / total, minus = p1_minus / total;
    return {plus, minus, 1.0 - plus - minus};
}

/// Each open vertex gets two open children with probability p_branch, otherwise
/// one signed child. nullopt when more than max_nodes vertices would be needed.
inline std::optional<DeterminationTree> sample_gw_tree(const OutcomeProbs& probs, Rng& rng,
                                                       std::size_t max_nodes = 100000) {
    if (!(probs.p_branch < 1.0)) throw std::invalid_argument("sample_gw_tree: p_branch must be < 1");
    DeterminationTree tree(0);
    std::vector<int> open{tree.root()};
    while (!open.empty()) {
        const int v = open.back();
        open.pop_back();
        const double u = rng.uniform();
        if (u < probs.p_branch) {
            if (tree.size() + 2 > max_nodes) return std::nullopt;
            const int a = tree.add_child(v, 0);
            const int b = tree.add_child(v, 0);
            open.push_back(b);
            open.push_back(a);
        } else {
            if (tree.size() + 1 > max_nodes) return std::nullopt;
            const bool plus = (u - probs.p_branch) < probs.p_plus;
            tree.add_child(v, 0, plus ? Sign::Plus : Sign::Minus);
        }
    }
    return tree;
}

struct GwEstimate {
    double alpha_hat = 0.0;
    double stderr_ = 0.0;
    double overflow_rate = 0.0;
    std::uint64_t n_samples = 0;
    std::uint64_t n_plus = 0;
    std::uint64_t n_overflow = 0;
    double mean_branches = 0.0;
};

namespace detail {
struct GwCounts {
    std::uint64_t n = 0, plus = 0, overflow = 0, branches = 0;
    void merge(const GwCounts& o) {
        n += o.n;
        plus += o.plus;
        overflow += o.overflow;
        branches += o.branches;
    }
};
}  // namespace detail

/// Fraction of sampled trees solving to +, over the trees that did not overflow.
inline GwEstimate estimate_alpha_gw(const OutcomeProbs& probs, std::uint64_t n_samples, std::uint64_t seed,
                                    unsigned threads = 1, std::size_t max_nodes = 100000) {
    if (n_samples < 1) throw std::invalid_argument("estimate_alpha_gw: n_samples must be >= 1");
    // Batches of replicas share one engine so the per-replica reseeding cost stays small.
    constexpr std::uint64_t batch = 1024;
    const std::uint64_t n_batches = (n_samples + batch - 1) / batch;
    auto fn = [&](std::uint64_t i, Rng& rng, detail::GwCounts& acc) {
        const std::uint64_t lo = i * batch, hi = std::min(n_samples, lo + batch);
        for (std::uint64_t k = lo; k < hi; ++k) {
            ++acc.n;
            auto tree = sample_gw_tree(probs, rng, max_nodes);
            if (!tree) {
                ++acc.overflow;
                continue;
            }
            acc.branches += static_cast<std::uint64_t>(tree->branch_count());
            if (solve_tree(*tree) == Sign::Plus) ++acc.plus;
        }
    };
    const auto c = run_replicas(n_batches, threads, seed, detail::GwCounts{}, fn);
    GwEstimate e;
    e.n_samples = c.n;
    e.n_plus = c.plus;
    e.n_overflow = c.overflow;
    const double ok = static_cast<double>(c.n - c.overflow);
    e.overflow_rate = static_cast<double>(c.overflow) / static_cast<double>(c.n);
    if (ok > 0) {
        e.alpha_hat = static_cast<double>(c.plus) / ok;
        e.stderr_ = std::sqrt(e.alpha_hat * (1.0 - e.alpha_hat) / std::max(1.0, ok - 1.0));
        e.mean_branches = static_cast<double>(c.branches) / ok;
    }
    return e;
}

inline GwEstimate estimate_alpha_gw(const ModelParams& params, std::uint64_t n_samples, std::uint64_t seed,
                                    OutcomeMode mode = OutcomeMode::Limit, unsigned threads = 1) {
    return estimate_alpha_gw(outcome_probs(params, Side::Left, mode), n_samples, seed, threads);
}

struct TreeLawEntry {
    std::string tree;  // canonical form, or "FAILED" / "LARGER" for the lumped remainders
    std::size_t size = 0;
    double freq_dual = 0.0;
    double freq_gw = 0.0;
};

struct TreeLawReport {
    std::vector<TreeLawEntry> entries;  // sorted by decreasing dual frequency
    double tv = 0.0;                    // half the l1 distance over trees with <= max_size vertices
    double tv_with_remainder = 0.0;     // same, with FAILED and LARGER as two extra atoms
    double failed_rate = 0.0;
    std::uint64_t n_samples = 0;
    OutcomeProbs probs;
    double p_root_plus_dual = 0.0;  // frequency of the one-edge tree "(+)"
    double p_root_plus_dual_stderr = 0.0;
};

/// Empirical law of the tree built from site 3 over [0, t] against the finite-N GW law.
/// Flags alive at the horizon close with an independent Bernoulli(rho_bar) sign.
inline TreeLawReport compare_tree_laws(const ModelParams& params, double t, std::uint64_t n_samples, std::uint64_t seed,
                                       std::size_t max_size, unsigned threads = 1) {
    params.validate();
    if (n_samples < 1) throw std::invalid_argument("compare_tree_laws: n_samples must be >= 1");
    TreeLawReport rep;
    rep.n_samples = n_samples;
    rep.probs = outcome_probs(params, Side::Left, OutcomeMode::FiniteN);

    struct Counts {
        std::map<std::string, std::uint64_t> dual, gw;
        std::uint64_t dual_failed = 0, dual_larger = 0, gw_larger = 0;
        void merge(const Counts& o) {
            for (const auto& [k, v] : o.dual) dual[k] += v;
            for (const auto& [k, v] : o.gw) gw[k] += v;
            dual_failed += o.dual_failed;
            dual_larger += o.dual_larger;
            gw_larger += o.gw_larger;
        }
    };
    const double rho = params.rho_bar;
    const auto probs = rep.probs;
    auto fn = [&](std::uint64_t, Rng& rng, Counts& acc) {
        const TreeResult res = sample_determination_tree(
            3, params, t, rng, [rho](Site, Rng& g) { return g.bernoulli(rho) ? Sign::Plus : Sign::Minus; }, max_size);
        if (res.failed()) {
            ++acc.dual_failed;
        } else if (res.overflow || res.tree->size() > max_size) {
            ++acc.dual_larger;
        } else {
            ++acc.dual[res.tree->canonical()];
        }
        const auto g = sample_gw_tree(probs, rng, max_size);
        if (!g) {
            ++acc.gw_larger;
        } else {
            ++acc.gw[g->canonical()];
        }
    };
    const Counts c = run_replicas(n_samples, threads, seed, Counts{}, fn);
    const double n = static_cast<double>(n_samples);
    std::map<std::string, TreeLawEntry> merged;
    auto size_of = [](const std::string& s) {
        return static_cast<std::size_t>(std::count(s.begin(), s.end(), '(') + std::count(s.begin(), s.end(), '+') +
                                        std::count(s.begin(), s.end(), '-'));
    };
    for (const auto& [k, v] : c.dual) merged[k] = {k, size_of(k), static_cast<double>(v) / n, 0.0};
    for (const auto& [k, v] : c.gw) {
        auto& e = merged[k];
        e.tree = k;
        e.size = size_of(k);
        e.freq_gw = static_cast<double>(v) / n;
    }
    double l1 = 0.0;
    for (auto& [k, e] : merged) {
        l1 += std::abs(e.freq_dual - e.freq_gw);
        rep.entries.push_back(e);
    }
    rep.tv = 0.5 * l1;
    const double failed = static_cast<double>(c.dual_failed) / n;
    const double larger_dual = static_cast<double>(c.dual_larger) / n;
    const double larger_gw = static_cast<double>(c.gw_larger) / n;
    rep.tv_with_remainder = 0.5 * (l1 + failed + std::abs(larger_dual - larger_gw));
    rep.failed_rate = failed;
    rep.entries.push_back({"FAILED", 0, failed, 0.0});
    rep.entries.push_back({"LARGER", max_size + 1, larger_dual, larger_gw});
    std::stable_sort(rep.entries.begin(), rep.entries.end(),
                     [](const TreeLawEntry& a, const TreeLawEntry& b) { return a.freq_dual > b.freq_dual; });
    if (auto it = c.dual.find("(+)"); it != c.dual.end()) rep.p_root_plus_dual = static_cast<double>(it->second) / n;
    rep.p_root_plus_dual_stderr = std::sqrt(rep.p_root_plus_dual * (1.0 - rep.p_root_plus_dual) / std::max(1.0, n - 1.0));
    return rep;
}

}  // namespace ssep
