#pragma once

// Labelled rooted trees recording how a site's value depends on boundary events.
//
// Internal vertices carry a flag label (0 for the unlabelled vertices of
// sampled Galton-Watson trees), leaves carry a sign. Valid trees satisfy
//   (1) leaves and only leaves are signed,
//   (2) every vertex has 0, 1 or 2 children,
//   (3) a vertex is a leaf iff it is an only child.
// Children are always created after their parent, so indices are topologically sorted.

#include <algorithm>
#include <array>
#include <cstdint>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "ssep/rng.hpp"

namespace ssep {

enum class Sign : std::int8_t { None = 0, Plus = 1, Minus = -1 };

inline char sign_char(Sign s) { return s == Sign::Plus ? '+' : s == Sign::Minus ? '-' : '*'; }

class DeterminationTree {
public:
    struct Vertex {
        int parent = -1;
        std::array<int, 2> child{-1, -1};
        int n_children = 0;
        int label = 0;
        Sign sign = Sign::None;
    };

    explicit DeterminationTree(int root_label = 1) { vertices_.push_back(Vertex{-1, {-1, -1}, 0, root_label, Sign::None}); }

    int root() const { return 0; }
    std::size_t size() const { return vertices_.size(); }
    const Vertex& vertex(int v) const { return vertices_.at(static_cast<std::size_t>(v)); }

    int add_child(int parent, int label, Sign sign = Sign::None) {
        Vertex& p = vertices_.at(static_cast<std::size_t>(parent));
        if (p.n_children >= 2) throw std::logic_error("DeterminationTree: vertex already has two children");
        const int id = static_cast<int>(vertices_.size());
        p.child[static_cast<std::size_t>(p.n_children++)] = id;
        vertices_.push_back(Vertex{parent, {-1, -1}, 0, label, sign});
        return id;
    }

    /// Empty string when the tree belongs to the valid set, otherwise the first violation.
    std::string violation() const {
        const Vertex& r = vertices_[0];
        if (r.n_children == 0) return "root has no children";
        if (r.sign != Sign::None) return "root carries a sign";
        for (std::size_t v = 1; v < vertices_.size(); ++v) {
            const Vertex& x = vertices_[v];
            const bool leaf = x.n_children == 0;
            const bool only_child = vertices_[static_cast<std::size_t>(x.parent)].n_children == 1;
            if (leaf != (x.sign != Sign::None)) return "vertex " + std::to_string(v) + ": leaves and only leaves carry a sign";
            if (leaf != only_child) return "vertex " + std::to_string(v) + ": leaves must be exactly the only children";
        }
        return {};
    }
    bool valid() const { return violation().empty(); }

    /// Nested-parentheses form with sign leaves, e.g. "((+)(-))"; internal labels are dropped.
    std::string canonical() const {
        std::string out;
        write_canonical(0, out);
        return out;
    }

    std::string to_dot() const {
        std::ostringstream os;
        os << "digraph determination_tree {\n";
        for (std::size_t v = 0; v < vertices_.size(); ++v) {
            const Vertex& x = vertices_[v];
            os << "  v" << v << " [label=\"";
            if (x.sign != Sign::None) {
                os << sign_char(x.sign);
            } else if (x.label > 0) {
                os << x.label;
            } else {
                os << '*';
            }
            os << "\"];\n";
            if (x.parent >= 0) os << "  v" << x.parent << " -> v" << v << ";\n";
        }
        os << "}\n";
        return os.str();
    }

    /// Number of vertices with two children.
    int branch_count() const {
        return static_cast<int>(std::count_if(vertices_.begin(), vertices_.end(), [](const Vertex& v) { return v.n_children == 2; }));
    }

private:
    void write_canonical(int v, std::string& out) const {
        // Iterative to survive deep trees.
        struct Frame {
            int v;
            int next;
        };
        std::vector<Frame> stack{{v, 0}};
        while (!stack.empty()) {
            Frame& f = stack.back();
            const Vertex& x = vertices_[static_cast<std::size_t>(f.v)];
            if (x.n_children == 0) {
                out.push_back(sign_char(x.sign));
                stack.pop_back();
                continue;
            }
            if (f.next == 0) out.push_back('(');
            if (f.next < x.n_children) {
                const int c = x.child[static_cast<std::size_t>(f.next++)];
                stack.push_back({c, 0});
                continue;
            }
            out.push_back(')');
            stack.pop_back();
        }
    }

    std::vector<Vertex> vertices_;
};

/// The solving map: only children pass their sign to the parent; a vertex with
/// children (v1, v2) resolves to + if v2 is +, otherwise to v1's sign.
inline Sign solve_tree(const DeterminationTree& tree) {
    if (const auto why = tree.violation(); !why.empty()) throw std::invalid_argument("solve_tree: malformed tree: " + why);
    std::vector<Sign> value(tree.size(), Sign::None);
    for (int v = static_cast<int>(tree.size()) - 1; v >= 0; --v) {
        const auto& x = tree.vertex(v);
        if (x.n_children == 0) {
            value[static_cast<std::size_t>(v)] = x.sign;
        } else if (x.n_children == 1) {
            value[static_cast<std::size_t>(v)] = value[static_cast<std::size_t>(x.child[0])];
        } else {
            const Sign v2 = value[static_cast<std::size_t>(x.child[1])];
            value[static_cast<std::size_t>(v)] = v2 == Sign::Plus ? Sign::Plus : value[static_cast<std::size_t>(x.child[0])];
        }
    }
    return value[0];
}

/// The literal procedure: delete only children first, then resolve two-leaf
/// parents one at a time, picking uniformly at random among the ready ones.
inline Sign solve_tree_random_order(const DeterminationTree& tree, Rng& rng) {
    if (const auto why = tree.violation(); !why.empty()) throw std::invalid_argument("solve_tree: malformed tree: " + why);
    const std::size_t n = tree.size();
    std::vector<Sign> label(n, Sign::None);
    std::vector<int> live_children(n, 0);
    std::vector<char> alive(n, 1);
    for (std::size_t v = 0; v < n; ++v) {
        label[v] = tree.vertex(static_cast<int>(v)).sign;
        live_children[v] = tree.vertex(static_cast<int>(v)).n_children;
    }
    for (std::size_t v = 0; v < n; ++v) {
        const auto& x = tree.vertex(static_cast<int>(v));
        if (x.n_children == 1) {
            const auto c = static_cast<std::size_t>(x.child[0]);
            label[v] = label[c];
            alive[c] = 0;
            live_children[v] = 0;
        }
    }
    auto ready = [&](std::size_t v) {
        if (!alive[v] || live_children[v] != 2) return false;
        const auto& x = tree.vertex(static_cast<int>(v));
        return live_children[static_cast<std::size_t>(x.child[0])] == 0 && live_children[static_cast<std::size_t>(x.child[1])] == 0;
    };
    std::vector<std::size_t> queue;
    for (std::size_t v = 0; v < n; ++v)
        if (ready(v)) queue.push_back(v);
    while (!queue.empty()) {
        const auto k = rng.below(queue.size());
        const std::size_t v = queue[k];
        queue[k] = queue.back();
        queue.pop_back();
        const auto& x = tree.vertex(static_cast<int>(v));
        const auto v1 = static_cast<std::size_t>(x.child[0]), v2 = static_cast<std::size_t>(x.child[1]);
        label[v] = label[v2] == Sign::Plus ? Sign::Plus : label[v1];
        alive[v1] = alive[v2] = 0;
        live_children[v] = 0;
        if (x.parent >= 0 && ready(static_cast<std::size_t>(x.parent))) queue.push_back(static_cast<std::size_t>(x.parent));
    }
    return label[0];
}

}  // namespace ssep
