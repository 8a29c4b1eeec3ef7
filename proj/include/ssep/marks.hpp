#pragma once

// Poisson mark streams of the graphical construction.
//
// N - 2 exchange clocks at rate N^2 plus eight boundary clocks
// (plus / minus / copy / branch on each side) at rate N^(2-theta) times
// r rho, r (1 - rho), c, b (primed on the right). Every clock owns its own
// engine seeded from (seed, kind code, position), so a stream restricted to a
// subset of kinds replays identically on its own.

#include <algorithm>
#include <array>
#include <bit>
#include <cstdint>
#include <fstream>
#include <optional>
#include <queue>
#include <stdexcept>
#include <string>
#include <vector>

#include "ssep/model.hpp"
#include "ssep/rng.hpp"

namespace ssep {

enum class MarkType : std::uint8_t { Exchange, Plus, Minus, Copy, Branch };
enum class Side : std::uint8_t { Left, Right };

/// Wire code of a mark kind: 0 exchange, then (type, side) pairs
/// 1/2 plus L/R, 3/4 minus L/R, 5/6 copy L/R, 7/8 branch L/R.
constexpr std::uint8_t kind_code(MarkType t, Side s) {
    return t == MarkType::Exchange ? 0
                                   : static_cast<std::uint8_t>(2 * (static_cast<int>(t) - 1) + 1 + static_cast<int>(s));
}

struct Mark {
    double time = 0.0;
    MarkType type = MarkType::Exchange;
    Side side = Side::Left;
    /// Exchange: the bond's left site x (bond x, x+1). Otherwise the site
    /// written by the mark: 1 / N-1 for plus and minus, 2 / N-2 for copy and branch.
    Site position = 1;

    std::uint8_t code() const { return kind_code(type, side); }

    friend bool operator==(const Mark&, const Mark&) = default;
};

/// Stream order: time, then kind code, then position.
inline bool mark_before(const Mark& a, const Mark& b) {
    if (a.time != b.time) return a.time < b.time;
    if (a.code() != b.code()) return a.code() < b.code();
    return a.position < b.position;
}

/// Subsets of clocks, bit i set for kind code i.
using KindMask = std::uint16_t;
constexpr KindMask all_kinds = 0x1FF;
constexpr KindMask kind_bit(MarkType t, Side s) { return static_cast<KindMask>(1U << kind_code(t, s)); }

struct Clock {
    MarkType type;
    Side side;
    Site position;
    double rate;
};

/// The N + 6 component clocks with their intensities.
inline std::vector<Clock> component_clocks(const ModelParams& p) {
    std::vector<Clock> clocks;
    clocks.reserve(static_cast<std::size_t>(p.N + 6));
    for (Site x = 1; x <= p.N - 2; ++x) clocks.push_back({MarkType::Exchange, Side::Left, x, p.bulk_rate()});
    const double s = p.boundary_scale();
    const Site l1 = 1, l2 = 2, r1 = p.N - 1, r2 = p.N - 2;
    clocks.push_back({MarkType::Plus, Side::Left, l1, s * p.r * p.rho_bar});
    clocks.push_back({MarkType::Plus, Side::Right, r1, s * p.r_prime * p.rho_bar_prime});
    clocks.push_back({MarkType::Minus, Side::Left, l1, s * p.r * (1.0 - p.rho_bar)});
    clocks.push_back({MarkType::Minus, Side::Right, r1, s * p.r_prime * (1.0 - p.rho_bar_prime)});
    clocks.push_back({MarkType::Copy, Side::Left, l2, s * p.c});
    clocks.push_back({MarkType::Copy, Side::Right, r2, s * p.c_prime});
    clocks.push_back({MarkType::Branch, Side::Left, l2, s * p.b});
    clocks.push_back({MarkType::Branch, Side::Right, r2, s * p.b_prime});
    return clocks;
}

/// Lazily merges the component Poisson processes in time order on [0, horizon).
class MarkGenerator {
public:
    MarkGenerator(const ModelParams& params, double horizon, std::uint64_t seed, KindMask mask = all_kinds)
        : horizon_(horizon) {
        params.validate();
        for (const Clock& c : component_clocks(params)) {
            if (!(c.rate > 0.0) || !(mask & (1U << kind_code(c.type, c.side)))) continue;
            Source src{c, Rng(derive_seed(seed, kind_code(c.type, c.side), static_cast<std::uint64_t>(c.position))), 0.0};
            src.next = src.rng.exponential(c.rate);
            sources_.push_back(std::move(src));
        }
        for (std::size_t i = 0; i < sources_.size(); ++i) {
            if (sources_[i].next < horizon_) heap_.push(key(i));
        }
    }

    double horizon() const { return horizon_; }

    std::optional<Mark> next() {
        if (heap_.empty()) return std::nullopt;
        const auto top = heap_.top();
        heap_.pop();
        Source& src = sources_[top.index];
        Mark m{src.next, src.clock.type, src.clock.side, src.clock.position};
        src.next += src.rng.exponential(src.clock.rate);
        if (src.next < horizon_) heap_.push(key(top.index));
        return m;
    }

private:
    struct Source {
        Clock clock;
        Rng rng;
        double next;
    };
    struct Key {
        double time;
        std::uint8_t code;
        Site position;
        std::size_t index;
    };
    struct Later {
        bool operator()(const Key& a, const Key& b) const {
            if (a.time != b.time) return a.time > b.time;
            if (a.code != b.code) return a.code > b.code;
            return a.position > b.position;
        }
    };
    Key key(std::size_t i) const {
        const Source& s = sources_[i];
        return {s.next, kind_code(s.clock.type, s.clock.side), s.clock.position, i};
    }

    double horizon_;
    std::vector<Source> sources_;
    std::priority_queue<Key, std::vector<Key>, Later> heap_;
};

struct MarkStream {
    int N = 0;
    double horizon = 0.0;
    std::uint64_t seed = 0;
    std::vector<Mark> marks;

    std::size_t size() const { return marks.size(); }
    bool empty() const { return marks.empty(); }
};

inline MarkStream generate(const ModelParams& params, double horizon, std::uint64_t seed, KindMask mask = all_kinds) {
    if (horizon < 0.0) throw std::invalid_argument("generate: negative horizon");
    MarkStream stream{params.N, horizon, seed, {}};
    if (horizon == 0.0) return stream;
    MarkGenerator gen(params, horizon, seed, mask);
    while (auto m = gen.next()) stream.marks.push_back(*m);
    return stream;
}

/// Marks with time in [t0, t1), order preserved.
inline MarkStream restrict(const MarkStream& stream, double t0, double t1) {
    if (!(0.0 <= t0 && t0 <= t1 && t1 <= stream.horizon)) {
        throw std::out_of_range("restrict: window outside [0, horizon]");
    }
    MarkStream out{stream.N, t1, stream.seed, {}};
    auto lo = std::lower_bound(stream.marks.begin(), stream.marks.end(), t0,
                               [](const Mark& m, double t) { return m.time < t; });
    auto hi = std::lower_bound(lo, stream.marks.end(), t1, [](const Mark& m, double t) { return m.time < t; });
    out.marks.assign(lo, hi);
    return out;
}

/// Marks of [0, t) re-expressed in the reversed clock s = t - time, ascending in s.
inline std::vector<Mark> reversed_marks(const MarkStream& stream, double t) {
    if (t > stream.horizon) throw std::out_of_range("reversed_marks: time beyond stream horizon");
    std::vector<Mark> out;
    for (auto it = stream.marks.rbegin(); it != stream.marks.rend(); ++it) {
        if (it->time >= t) continue;
        Mark m = *it;
        m.time = t - it->time;
        out.push_back(m);
    }
    return out;
}

// Binary dump: per mark, little-endian f64 time, u8 kind code, u16 position.
namespace detail {
template <class T>
void put_le(std::ostream& os, T value) {
    std::array<unsigned char, sizeof(T)> bytes;
    std::uint64_t bits;
    if constexpr (sizeof(T) == 8) {
        bits = std::bit_cast<std::uint64_t>(value);
    } else {
        bits = static_cast<std::uint64_t>(value);
    }
    for (std::size_t i = 0; i < sizeof(T); ++i) bytes[i] = static_cast<unsigned char>((bits >> (8 * i)) & 0xFF);
    os.write(reinterpret_cast<const char*>(bytes.data()), sizeof(T));
}

inline std::uint64_t get_le(std::istream& is, std::size_t n) {
    std::array<unsigned char, 8> bytes{};
    is.read(reinterpret_cast<char*>(bytes.data()), static_cast<std::streamsize>(n));
    std::uint64_t bits = 0;
    for (std::size_t i = 0; i < n; ++i) bits |= static_cast<std::uint64_t>(bytes[i]) << (8 * i);
    return bits;
}
}  // namespace detail

inline void write_binary(std::ostream& os, const MarkStream& stream) {
    for (const Mark& m : stream.marks) {
        detail::put_le<double>(os, m.time);
        detail::put_le<std::uint8_t>(os, m.code());
        detail::put_le<std::uint16_t>(os, static_cast<std::uint16_t>(m.position));
    }
}

inline Mark decode_mark(double time, std::uint8_t code, std::uint16_t position) {
    if (code > 8) throw std::runtime_error("mark dump: invalid kind code " + std::to_string(code));
    Mark m;
    m.time = time;
    m.position = position;
    if (code == 0) {
        m.type = MarkType::Exchange;
    } else {
        m.type = static_cast<MarkType>((code - 1) / 2 + 1);
        m.side = static_cast<Side>((code - 1) % 2);
    }
    return m;
}

/// Reads records until end of input. N and horizon are not part of the dump.
inline MarkStream read_binary(std::istream& is, int N, double horizon) {
    MarkStream stream{N, horizon, 0, {}};
    while (is.peek() != std::char_traits<char>::eof()) {
        const double t = std::bit_cast<double>(detail::get_le(is, 8));
        const auto code = static_cast<std::uint8_t>(detail::get_le(is, 1));
        const auto pos = static_cast<std::uint16_t>(detail::get_le(is, 2));
        if (!is) throw std::runtime_error("mark dump: truncated record");
        stream.marks.push_back(decode_mark(t, code, pos));
    }
    return stream;
}

}  // namespace ssep
