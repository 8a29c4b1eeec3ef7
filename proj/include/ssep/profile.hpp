#pragma once

#include <algorithm>
#include <cmath>
#include <numbers>
#include <stdexcept>
#include <string>
#include <vector>

namespace ssep {

/// Macroscopic initial profile f0 : [0,1] -> [0,1].
class InitialProfile {
public:
    enum class Kind { Constant, Linear, SineBump, Table };

    static InitialProfile constant(double value) { return InitialProfile(Kind::Constant, {value}); }
    /// left + (right - left) u
    static InitialProfile linear(double left, double right) { return InitialProfile(Kind::Linear, {left, right}); }
    /// base + amplitude sin(pi u)
    static InitialProfile sine_bump(double base, double amplitude) {
        return InitialProfile(Kind::SineBump, {base, amplitude});
    }
    /// Values on a uniform grid of [0,1] (first at u = 0, last at u = 1), linearly interpolated.
    static InitialProfile table(std::vector<double> values) {
        if (values.size() < 2) throw std::invalid_argument("InitialProfile: table needs at least two points");
        return InitialProfile(Kind::Table, std::move(values));
    }

    Kind kind() const { return kind_; }
    const std::vector<double>& coefficients() const { return data_; }

    double operator()(double u) const {
        switch (kind_) {
            case Kind::Constant: return data_[0];
            case Kind::Linear: return data_[0] + (data_[1] - data_[0]) * u;
            case Kind::SineBump: return data_[0] + data_[1] * std::sin(std::numbers::pi * u);
            case Kind::Table: {
                const double pos = std::clamp(u, 0.0, 1.0) * static_cast<double>(data_.size() - 1);
                const auto i = std::min(static_cast<std::size_t>(pos), data_.size() - 2);
                const double w = pos - static_cast<double>(i);
                return (1.0 - w) * data_[i] + w * data_[i + 1];
            }
        }
        return 0.0;
    }

    std::string describe() const {
        switch (kind_) {
            case Kind::Constant: return "constant";
            case Kind::Linear: return "linear";
            case Kind::SineBump: return "sine-bump";
            case Kind::Table: return "table";
        }
        return "unknown";
    }

private:
    InitialProfile(Kind kind, std::vector<double> data) : kind_(kind), data_(std::move(data)) {
        // Constant, linear and sine-bump profiles attain their extremes at u in {0, 1/2, 1}.
        for (double u : {0.0, 0.5, 1.0}) check((*this)(u));
        if (kind_ == Kind::Table) {
            for (double v : data_) check(v);
        }
    }
    static void check(double v) {
        if (!(v >= 0.0 && v <= 1.0)) throw std::domain_error("InitialProfile: values must lie in [0,1]");
    }

    Kind kind_;
    std::vector<double> data_;
};

}  // namespace ssep
