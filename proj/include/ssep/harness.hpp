#pragma once

// Experiment runners behind the `ssep` command: JSON configuration, one run
// directory per experiment (density.csv, corr.csv, dual_stats.csv,
// summary.json) and a pass flag for the acceptance band of each experiment.

#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <limits>
#include <numbers>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "ssep/dual.hpp"
#include "ssep/estimators.hpp"
#include "ssep/forward.hpp"
#include "ssep/gw.hpp"
#include "ssep/marks.hpp"
#include "ssep/model.hpp"
#include "ssep/pde.hpp"
#include "ssep/profile.hpp"

namespace ssep {

using json = nlohmann::ordered_json;

inline constexpr const char* version_string = "ssep 0.1.0";

struct ConfigError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// ---------------------------------------------------------------- config

inline json params_to_json(const ModelParams& p) {
    return json{{"N", p.N},       {"theta", p.theta},     {"r", p.r},
                {"rho_bar", p.rho_bar}, {"b", p.b},       {"c", p.c},
                {"r_prime", p.r_prime}, {"rho_bar_prime", p.rho_bar_prime},
                {"b_prime", p.b_prime}, {"c_prime", p.c_prime}};
}

/// Reads model parameters. Primed rates default to the unprimed ones, so a
/// mirrored system only needs rho_bar_prime. A "part_one" object with
/// alpha1..delta2 is accepted instead of (r, rho_bar, b, c).
inline ModelParams params_from_json(const json& j, std::ostream* warnings = &std::cerr) {
    if (!j.is_object()) throw ConfigError("params: expected an object");
    ModelParams p;
    try {
        p.N = j.at("N").get<int>();
        p.theta = j.value("theta", p.theta);
        if (j.contains("part_one")) {
            const json& q = j.at("part_one");
            const PartOneRates pr{q.at("alpha1").get<double>(), q.at("gamma1").get<double>(),
                                  q.at("alpha2").get<double>(), q.at("gamma2").get<double>(),
                                  q.at("beta1").get<double>(),  q.at("delta1").get<double>(),
                                  q.at("beta2").get<double>(),  q.at("delta2").get<double>()};
            p = from_part_one(pr, p.N, p.theta);
        } else {
            p.r = j.at("r").get<double>();
            p.rho_bar = j.at("rho_bar").get<double>();
            p.b = j.value("b", 0.0);
            p.c = j.value("c", 0.0);
            p.r_prime = j.value("r_prime", p.r);
            p.rho_bar_prime = j.value("rho_bar_prime", p.rho_bar);
            p.b_prime = j.value("b_prime", p.b);
            p.c_prime = j.value("c_prime", p.c);
        }
        p.validate();
    } catch (const json::exception& e) {
        throw ConfigError(std::string("params: ") + e.what());
    } catch (const std::domain_error& e) {
        throw ConfigError(e.what());
    }
    if (!p.h1_holds() && warnings) {
        *warnings << "warning: b < r and b' < r' fails; the dual branching process need not die out\n";
    }
    return p;
}

inline InitialProfile profile_from_json(const json& j) {
    try {
        const std::string kind = j.at("kind").get<std::string>();
        if (kind == "constant") return InitialProfile::constant(j.at("value").get<double>());
        if (kind == "linear") return InitialProfile::linear(j.at("left").get<double>(), j.at("right").get<double>());
        if (kind == "sine_bump") {
            return InitialProfile::sine_bump(j.at("base").get<double>(), j.at("amplitude").get<double>());
        }
        if (kind == "table") return InitialProfile::table(j.at("values").get<std::vector<double>>());
        throw ConfigError("profile: unknown kind '" + kind + "'");
    } catch (const json::exception& e) {
        throw ConfigError(std::string("profile: ") + e.what());
    } catch (const std::domain_error& e) {
        throw ConfigError(e.what());
    } catch (const std::invalid_argument& e) {
        throw ConfigError(e.what());
    }
}

inline json profile_to_json(const InitialProfile& f) {
    const auto& c = f.coefficients();
    switch (f.kind()) {
        case InitialProfile::Kind::Constant: return {{"kind", "constant"}, {"value", c[0]}};
        case InitialProfile::Kind::Linear: return {{"kind", "linear"}, {"left", c[0]}, {"right", c[1]}};
        case InitialProfile::Kind::SineBump: return {{"kind", "sine_bump"}, {"base", c[0]}, {"amplitude", c[1]}};
        case InitialProfile::Kind::Table: return {{"kind", "table"}, {"values", c}};
    }
    return {};
}

inline Engine engine_from_string(const std::string& s) {
    if (s == "gillespie") return Engine::Gillespie;
    if (s == "graphical") return Engine::Graphical;
    if (s == "superposed") return Engine::Superposed;
    throw ConfigError("unknown engine '" + s + "' (gillespie | graphical | superposed)");
}

inline const char* engine_name(Engine e) {
    switch (e) {
        case Engine::Gillespie: return "gillespie";
        case Engine::Graphical: return "graphical";
        case Engine::Superposed: return "superposed";
    }
    return "?";
}

/// Everything an experiment needs; experiment-specific knobs stay in `raw`.
struct ExperimentConfig {
    std::string experiment;
    ModelParams params;
    InitialProfile profile = InitialProfile::constant(0.5);
    std::vector<double> times{0.1};
    std::uint64_t n_samples = 1000;
    std::uint64_t seed = 1;
    unsigned threads = 1;
    Engine engine = Engine::Superposed;
    std::filesystem::path out_dir = "runs";
    json raw = json::object();

    /// Experiment-specific value with a default: raw[experiment][key] or raw[key].
    template <class T>
    T option(const std::string& key, const T& fallback) const {
        try {
            if (raw.contains(experiment) && raw.at(experiment).is_object() && raw.at(experiment).contains(key)) {
                return raw.at(experiment).at(key).get<T>();
            }
            if (raw.contains(key)) return raw.at(key).get<T>();
        } catch (const json::exception& e) {
            throw ConfigError("option '" + key + "': " + e.what());
        }
        return fallback;
    }
};

inline const std::vector<std::string>& experiment_kinds() {
    static const std::vector<std::string> kinds{"hydro",    "hydrostatic", "corr",          "duality",
                                                "gw-alpha", "dual-stats",  "engines-equal", "tree-laws"};
    return kinds;
}

inline ExperimentConfig config_from_json(const std::string& experiment, const json& j, std::ostream* warnings = &std::cerr) {
    if (std::find(experiment_kinds().begin(), experiment_kinds().end(), experiment) == experiment_kinds().end()) {
        throw ConfigError("unknown experiment '" + experiment + "'");
    }
    if (!j.is_object()) throw ConfigError("config: expected a JSON object");
    ExperimentConfig c;
    c.experiment = experiment;
    c.raw = j;
    if (!j.contains("params")) throw ConfigError("config: missing 'params'");
    c.params = params_from_json(j.at("params"), warnings);
    if (j.contains("profile")) c.profile = profile_from_json(j.at("profile"));
    try {
        if (j.contains("times")) c.times = j.at("times").get<std::vector<double>>();
        if (j.contains("t")) c.times = {j.at("t").get<double>()};
        c.n_samples = j.value("n_samples", c.n_samples);
        c.seed = j.value("seed", c.seed);
        c.threads = j.value("threads", c.threads);
        if (j.contains("engine")) c.engine = engine_from_string(j.at("engine").get<std::string>());
        if (j.contains("out")) c.out_dir = j.at("out").get<std::string>();
    } catch (const json::exception& e) {
        throw ConfigError(std::string("config: ") + e.what());
    }
    if (c.times.empty() || !std::is_sorted(c.times.begin(), c.times.end()) || c.times.front() < 0.0) {
        throw ConfigError("config: times must be a non-empty ascending list of non-negative numbers");
    }
    if (c.n_samples < 1) throw ConfigError("config: n_samples must be >= 1");
    return c;
}

inline ExperimentConfig load_config(const std::string& experiment, const std::filesystem::path& file,
                                    std::ostream* warnings = &std::cerr) {
    std::ifstream in(file);
    if (!in) throw ConfigError("cannot open config file " + file.string());
    json j;
    try {
        j = json::parse(in);
    } catch (const json::exception& e) {
        throw ConfigError("config " + file.string() + ": " + e.what());
    }
    return config_from_json(experiment, j, warnings);
}

// ---------------------------------------------------------------- output

struct Report {
    std::string experiment;
    bool pass = true;
    json summary = json::object();
    std::vector<std::filesystem::path> files;
};

/// CSV writer whose first line is a '#'-prefixed JSON provenance record.
class CsvWriter {
public:
    CsvWriter(const std::filesystem::path& path, const json& header, const std::vector<std::string>& columns)
        : out_(path) {
        if (!out_) throw std::runtime_error("cannot write " + path.string());
        out_ << "# " << header.dump() << '\n';
        for (std::size_t i = 0; i < columns.size(); ++i) out_ << (i ? "," : "") << columns[i];
        out_ << '\n';
        out_ << std::setprecision(17);
    }

    template <class... T>
    void row(const T&... values) {
        std::size_t i = 0;
        ((out_ << (i++ ? "," : ""), put(values)), ...);
        out_ << '\n';
    }

private:
    template <class T>
    void put(const T& v) {
        if constexpr (std::is_floating_point_v<T>) {
            if (std::isnan(v)) {
                out_ << "";
                return;
            }
        }
        out_ << v;
    }

    std::ofstream out_;
};

inline json provenance(const ExperimentConfig& c, std::uint64_t n_samples) {
    return json{{"experiment", c.experiment},
                {"params", params_to_json(c.params)},
                {"profile", profile_to_json(c.profile)},
                {"seed", c.seed},
                {"n_samples", n_samples},
                {"version", version_string}};
}

inline void write_summary(const std::filesystem::path& dir, const ExperimentConfig& c, Report& rep) {
    json s{{"experiment", c.experiment},
           {"version", version_string},
           {"seed", c.seed},
           {"threads_do_not_affect_results", true},
           {"params", params_to_json(c.params)},
           {"profile", profile_to_json(c.profile)},
           {"config", c.raw},
           {"h1_holds", c.params.h1_holds()},
           {"warnings", json::array()},
           {"pass", rep.pass},
           {"results", rep.summary}};
    if (!c.params.h1_holds()) s["warnings"].push_back("b < r and b' < r' fails; the dual branching process need not die out");
    const auto path = dir / "summary.json";
    std::ofstream out(path);
    out << s.dump(2) << '\n';
    rep.files.push_back(path);
}

namespace detail {
inline std::vector<double> unit_grid(int n) {
    std::vector<double> u;
    for (int i = 0; i <= n; ++i) u.push_back(static_cast<double>(i) / n);
    return u;
}

// Composite Simpson on a uniform grid of [0, 1] with an even number of intervals.
inline double simpson(const std::vector<double>& f) {
    const std::size_t n = f.size() - 1;
    const double h = 1.0 / static_cast<double>(n);
    double s = f.front() + f.back();
    for (std::size_t i = 1; i < n; ++i) s += (i % 2 ? 4.0 : 2.0) * f[i];
    return s * h / 3.0;
}

struct TestFunction {
    std::string name;
    double (*g)(double);
};

inline TestFunction test_function(const std::string& name) {
    if (name == "1") return {name, [](double) { return 1.0; }};
    if (name == "u") return {name, [](double u) { return u; }};
    if (name == "sin") return {name, [](double u) { return std::sin(std::numbers::pi * u); }};
    if (name == "cos") return {name, [](double u) { return std::cos(std::numbers::pi * u); }};
    throw ConfigError("unknown test function '" + name + "' (1 | u | sin | cos)");
}

inline std::filesystem::path prepare_dir(const ExperimentConfig& c) {
    std::filesystem::create_directories(c.out_dir);
    return c.out_dir;
}
}  // namespace detail

// ---------------------------------------------------------------- hydro

struct HydroPoint {
    double t;
    double sup_distance;      // empirical vs continuum on the configured window
    double sup_discrete;      // empirical vs discrete equation
    double sup_noise;         // largest stderr on the window
    std::vector<std::pair<std::string, double>> weak;  // statistic per test function
};

/// Empirical profile against the discrete equation and the heat equation at each configured time.
inline Report run_hydro(const ExperimentConfig& c) {
    const auto dir = detail::prepare_dir(c);
    const ModelParams& p = c.params;
    const int N = p.N;
    const auto bd = boundary_densities(p);
    const double lo = c.option<double>("x_min", 0.1), hi = c.option<double>("x_max", 0.9);
    const double sup_tol = c.option<double>("sup_tol", 0.03), weak_tol = c.option<double>("weak_tol", 0.01);
    const auto g_names = c.option<std::vector<std::string>>("test_functions", {"1", "u", "sin"});

    const auto fields = sample_fields(c.profile, p, c.times, c.n_samples, c.seed, {}, c.threads, c.engine);
    const auto discrete = solve_discrete_density(p, c.profile, c.times);
    std::vector<double> u_sites;
    for (Site x = 0; x <= N; ++x) u_sites.push_back(static_cast<double>(x) / N);
    const auto fine = detail::unit_grid(2000);
    const auto stationary = stationary_profile(bd.alpha, bd.alpha_prime, u_sites);

    Report rep;
    rep.experiment = c.experiment;
    CsvWriter csv(dir / "density.csv", provenance(c, c.n_samples),
                  {"t", "x", "u", "mean", "stderr", "discrete", "continuum", "stationary"});
    json points = json::array();
    const Site x_lo = static_cast<Site>(std::ceil(lo * N - 1e-9)), x_hi = static_cast<Site>(std::floor(hi * N + 1e-9));
    for (std::size_t k = 0; k < c.times.size(); ++k) {
        const double t = c.times[k];
        const auto& f = fields.density[k];
        const auto heat = heat_solution(c.profile, bd.alpha, bd.alpha_prime, t, u_sites);
        const auto heat_fine = heat_solution(c.profile, bd.alpha, bd.alpha_prime, t, fine);
        HydroPoint hp{t, 0.0, 0.0, 0.0, {}};
        for (Site x = 1; x <= N - 1; ++x) {
            const bool in_solver = x >= 3 && x <= N - 3;
            const double disc = in_solver ? discrete.at(k, x) : std::numeric_limits<double>::quiet_NaN();
            csv.row(t, x, u_sites[static_cast<std::size_t>(x)], f.at(x), f.se(x), disc,
                    heat.values[static_cast<std::size_t>(x)], stationary[static_cast<std::size_t>(x)]);
            if (x >= std::max(x_lo, 1) && x <= std::min(x_hi, N - 1)) {
                hp.sup_distance = std::max(hp.sup_distance, std::abs(f.at(x) - heat.values[static_cast<std::size_t>(x)]));
                if (in_solver) hp.sup_discrete = std::max(hp.sup_discrete, std::abs(f.at(x) - disc));
                hp.sup_noise = std::max(hp.sup_noise, f.se(x));
            }
        }
        json weak = json::object();
        bool weak_ok = true;
        for (const auto& name : g_names) {
            const auto tf = detail::test_function(name);
            double emp = 0.0;
            for (Site x = 1; x <= N - 1; ++x) emp += tf.g(static_cast<double>(x) / N) * f.at(x);
            emp /= (N - 1);
            std::vector<double> integrand;
            for (std::size_t i = 0; i < fine.size(); ++i) integrand.push_back(tf.g(fine[i]) * heat_fine.values[i]);
            const double stat = emp - detail::simpson(integrand);
            weak[name] = stat;
            weak_ok = weak_ok && std::abs(stat) <= weak_tol;
        }
        const bool ok = hp.sup_distance <= sup_tol && weak_ok;
        rep.pass = rep.pass && ok;
        points.push_back({{"t", t},
                          {"sup_distance", hp.sup_distance},
                          {"sup_distance_discrete", hp.sup_discrete},
                          {"max_stderr", hp.sup_noise},
                          {"weak", weak},
                          {"density_site3", f.at(3)},
                          {"pass", ok}});
    }
    rep.files.push_back(dir / "density.csv");
    rep.summary = {{"alpha", bd.alpha},     {"alpha_prime", bd.alpha_prime}, {"engine", engine_name(c.engine)},
                   {"window", {lo, hi}},    {"sup_tol", sup_tol},            {"weak_tol", weak_tol},
                   {"n_samples", c.n_samples}, {"times", points}};
    write_summary(dir, c, rep);
    return rep;
}

// ---------------------------------------------------------------- hydrostatic

inline Report run_hydrostatic(const ExperimentConfig& c) {
    const auto dir = detail::prepare_dir(c);
    const ModelParams& p = c.params;
    const int N = p.N;
    const auto bd = boundary_densities(p);
    const double burn_in = c.option<double>("burn_in", 2.0), t_end = c.option<double>("t_end", 6.0);
    const double spacing = c.option<double>("spacing", 0.1), l2_tol = c.option<double>("l2_tol", 0.02);
    const Engine engine = c.engine == Engine::Graphical ? Engine::Superposed : c.engine;
    const auto f = estimate_time_averaged_density(c.profile, p, burn_in, t_end, spacing, c.n_samples, c.seed, c.threads,
                                                  engine);
    std::vector<double> u_sites;
    for (Site x = 0; x <= N; ++x) u_sites.push_back(static_cast<double>(x) / N);
    const auto stationary = stationary_profile(bd.alpha, bd.alpha_prime, u_sites);
    const auto discrete = solve_discrete_density(p, c.profile, {t_end});
    const auto heat = heat_solution(c.profile, bd.alpha, bd.alpha_prime, t_end, u_sites);

    CsvWriter csv(dir / "density.csv", provenance(c, c.n_samples),
                  {"t", "x", "u", "mean", "stderr", "discrete", "continuum", "stationary"});
    double l2 = 0.0, sup = 0.0, noise2 = 0.0;
    for (Site x = 1; x <= N - 1; ++x) {
        const auto i = static_cast<std::size_t>(x);
        const double disc = (x >= 3 && x <= N - 3) ? discrete.at(0, x) : std::numeric_limits<double>::quiet_NaN();
        csv.row(t_end, x, u_sites[i], f.at(x), f.se(x), disc, heat.values[i], stationary[i]);
        const double d = f.at(x) - stationary[i];
        l2 += d * d;
        noise2 += f.se(x) * f.se(x);
        sup = std::max(sup, std::abs(d));
    }
    l2 = std::sqrt(l2 / (N - 1));
    Report rep;
    rep.experiment = c.experiment;
    rep.pass = l2 <= l2_tol;
    rep.files.push_back(dir / "density.csv");
    rep.summary = {{"alpha", bd.alpha},
                   {"alpha_prime", bd.alpha_prime},
                   {"engine", engine_name(engine)},
                   {"burn_in", burn_in},
                   {"t_end", t_end},
                   {"spacing", spacing},
                   {"replicas", c.n_samples},
                   {"l2_distance", l2},
                   {"l2_noise", std::sqrt(noise2 / (N - 1))},
                   {"sup_distance", sup},
                   {"l2_tol", l2_tol},
                   {"density_site3", f.at(3)},
                   {"density_site_N_minus_3", f.at(N - 3)}};
    write_summary(dir, c, rep);
    return rep;
}

// ---------------------------------------------------------------- corr

/// Pairs (round(uN), round(vN)) for u < v on a grid of step `step` in [lo, hi] with v - u >= gap.
inline std::vector<SitePair> macroscopic_pairs(int N, double lo, double hi, double step, double gap) {
    std::vector<SitePair> out;
    const int n = static_cast<int>(std::round((hi - lo) / step));
    for (int i = 0; i <= n; ++i) {
        for (int j = i + 1; j <= n; ++j) {
            const double u = lo + i * step, v = lo + j * step;
            if (v - u < gap - 1e-9) continue;
            out.push_back({static_cast<Site>(std::lround(u * N)), static_cast<Site>(std::lround(v * N))});
        }
    }
    return out;
}

struct CorrDecayRow {
    int N;
    double max_abs_phi;
    double stderr_at_max;
    double max_stderr;
    double band;  // z * max_stderr + tolerance
    bool within_band;
};

/// Two-point correlations for pairs at macroscopic distance, for each N of the sweep.
inline Report run_corr(const ExperimentConfig& c) {
    const auto dir = detail::prepare_dir(c);
    const auto sizes = c.option<std::vector<int>>("N_list", {c.params.N});
    const double gap = c.option<double>("min_gap", 0.2), z = c.option<double>("z", 4.0), tol = c.option<double>("tol", 0.01);
    const double step = c.option<double>("grid_step", 0.1);
    const double delta = c.option<double>("delta", 0.1);
    const bool solve = c.option<bool>("reference_solver", true);
    const double t = c.times.back();

    Report rep;
    rep.experiment = c.experiment;
    CsvWriter csv(dir / "corr.csv", provenance(c, c.n_samples), {"t", "x", "y", "phi", "stderr", "reference", "N"});
    json rows = json::array();
    std::vector<CorrDecayRow> decay;
    for (int N : sizes) {
        ModelParams p = c.params;
        p.N = N;
        const auto pairs = macroscopic_pairs(N, step, 1.0 - step, step, gap);
        const auto field = estimate_correlation(c.profile, p, t, c.n_samples, derive_seed(c.seed, static_cast<std::uint64_t>(N)),
                                                pairs, c.threads, c.engine);
        std::optional<CorrelationSolution> ref;
        if (solve) {
            try {
                ref = solve_correlation_field(N, c.profile, DensityBoundary::from_params(p), delta, {t});
            } catch (const std::invalid_argument&) {
                ref.reset();
            }
        }
        CorrDecayRow row{N, 0.0, 0.0, 0.0, 0.0, true};
        for (std::size_t i = 0; i < pairs.size(); ++i) {
            const auto [x, y] = pairs[i];
            double reference = std::numeric_limits<double>::quiet_NaN();
            if (ref && ref->domain.at(x, y) != PairRegion::Outside) reference = ref->at(0, x, y);
            csv.row(t, x, y, field.values[i], field.stderr_[i], reference, N);
            if (std::abs(field.values[i]) > row.max_abs_phi) {
                row.max_abs_phi = std::abs(field.values[i]);
                row.stderr_at_max = field.stderr_[i];
            }
            row.max_stderr = std::max(row.max_stderr, field.stderr_[i]);
        }
        row.band = z * row.max_stderr + tol;
        row.within_band = row.max_abs_phi <= row.band;
        rep.pass = rep.pass && row.within_band;
        decay.push_back(row);
        json r{{"N", N},
               {"pairs", pairs.size()},
               {"max_abs_phi", row.max_abs_phi},
               {"stderr_at_max", row.stderr_at_max},
               {"max_stderr", row.max_stderr},
               {"band", row.band},
               {"within_band", row.within_band}};
        if (ref) r["solver_sup_abs_phi"] = ref->sup_abs(0);
        rows.push_back(r);
    }
    // Non-increasing in N up to the joint noise of consecutive maxima.
    bool monotone = true;
    for (std::size_t i = 1; i < decay.size(); ++i) {
        const double joint = z * std::hypot(decay[i].stderr_at_max, decay[i - 1].stderr_at_max);
        monotone = monotone && decay[i].max_abs_phi <= decay[i - 1].max_abs_phi + joint;
    }
    rep.pass = rep.pass && monotone;
    rep.files.push_back(dir / "corr.csv");
    rep.summary = {{"t", t}, {"min_gap", gap}, {"z", z}, {"tol", tol}, {"non_increasing", monotone}, {"sizes", rows}};
    write_summary(dir, c, rep);
    return rep;
}

// ---------------------------------------------------------------- duality

struct DualityCounts {
    std::uint64_t runs = 0;
    std::uint64_t resolver_mismatch = 0;
    std::uint64_t tree_checked = 0;
    std::uint64_t tree_mismatch = 0;
    std::uint64_t failed = 0;
    std::uint64_t overflow = 0;
    void merge(const DualityCounts& o) {
        runs += o.runs;
        resolver_mismatch += o.resolver_mismatch;
        tree_checked += o.tree_checked;
        tree_mismatch += o.tree_mismatch;
        failed += o.failed;
        overflow += o.overflow;
    }
};

/// One (stream, eta0, x, t) draw per seed: the resolver and the tree against forward replay.
inline DualityCounts duality_check(const ModelParams& p, double horizon, std::uint64_t n_seeds, std::uint64_t seed,
                                   unsigned threads = 1, std::size_t max_tree = 200000) {
    auto fn = [&](std::uint64_t i, Rng& rng, DualityCounts& acc) {
        const MarkStream stream = generate(p, horizon, derive_seed(seed, i, 0xd0a1));
        Configuration eta0(p.N);
        for (Site x = 1; x <= p.N - 1; ++x) eta0.set(x, rng.bernoulli(0.5));
        const double t = horizon * rng.uniform();
        const Site x = 1 + static_cast<Site>(rng.below(static_cast<std::uint64_t>(p.N - 1)));
        const int forward = run_graphical(eta0, stream, t)[x];
        const int backward = resolve_site(x, t, eta0, stream);
        ++acc.runs;
        if (forward != backward) ++acc.resolver_mismatch;
        const TreeResult tree = build_determination_tree(x, p, stream, t, eta0, max_tree);
        if (tree.failed()) {
            ++acc.failed;
        } else if (tree.overflow) {
            ++acc.overflow;
        } else {
            ++acc.tree_checked;
            if ((solve_tree(*tree.tree) == Sign::Plus) != (backward == 1)) ++acc.tree_mismatch;
        }
    };
    return run_replicas(n_seeds, threads, seed, DualityCounts{}, fn);
}

inline Report run_duality(const ExperimentConfig& c) {
    const auto dir = detail::prepare_dir(c);
    const auto sizes = c.option<std::vector<int>>("N_list", {c.params.N});
    const double horizon = c.option<double>("horizon", c.times.back());
    Report rep;
    rep.experiment = c.experiment;
    json rows = json::array();
    for (int N : sizes) {
        ModelParams p = c.params;
        p.N = N;
        const auto counts = duality_check(p, horizon, c.n_samples, derive_seed(c.seed, static_cast<std::uint64_t>(N)), c.threads);
        const bool ok = counts.resolver_mismatch == 0 && counts.tree_mismatch == 0;
        rep.pass = rep.pass && ok;
        rows.push_back({{"N", N},
                        {"runs", counts.runs},
                        {"resolver_mismatches", counts.resolver_mismatch},
                        {"trees_checked", counts.tree_checked},
                        {"tree_mismatches", counts.tree_mismatch},
                        {"construction_failures", counts.failed},
                        {"failure_rate", static_cast<double>(counts.failed) / static_cast<double>(counts.runs)},
                        {"tree_overflows", counts.overflow},
                        {"pass", ok}});
    }
    rep.summary = {{"horizon", horizon}, {"sizes", rows}};
    write_summary(dir, c, rep);
    return rep;
}

// ---------------------------------------------------------------- gw-alpha

/// Root in [0,1] of the finite-N fixed point a = p+ + p_b a + p_b (1 - a) a.
inline double alpha_fixed_point(const OutcomeProbs& q) {
    // p_b a^2 + (1 - 2 p_b) a - p+ = 0
    if (q.p_branch == 0.0) return q.p_plus;
    const double B = 1.0 - 2.0 * q.p_branch;
    const double disc = std::sqrt(B * B + 4.0 * q.p_branch * q.p_plus);
    return std::clamp(B >= 0.0 ? 2.0 * q.p_plus / (disc + B) : (disc - B) / (2.0 * q.p_branch), 0.0, 1.0);
}

inline Report run_gw_alpha(const ExperimentConfig& c) {
    const auto dir = detail::prepare_dir(c);
    const double z = c.option<double>("z", 4.0);
    const std::string mode_name = c.option<std::string>("mode", "limit");
    if (mode_name != "limit" && mode_name != "finite_N") throw ConfigError("gw-alpha: mode must be limit or finite_N");
    const OutcomeMode mode = mode_name == "limit" ? OutcomeMode::Limit : OutcomeMode::FiniteN;
    // Parameter sets (r, b, rho_bar); default: the left boundary of params.
    std::vector<std::vector<double>> sets =
        c.option<std::vector<std::vector<double>>>("sets", {{c.params.r, c.params.b, c.params.rho_bar}});
    Report rep;
    rep.experiment = c.experiment;
    json rows = json::array();
    std::uint64_t k = 0;
    for (const auto& s : sets) {
        if (s.size() != 3) throw ConfigError("gw-alpha: each set is [r, b, rho_bar]");
        ModelParams p = c.params;
        p.r = s[0];
        p.b = s[1];
        p.rho_bar = s[2];
        try {
            p.validate();
        } catch (const std::domain_error& e) {
            throw ConfigError(e.what());
        }
        const auto probs = outcome_probs(p, Side::Left, mode);
        const auto est = estimate_alpha_gw(probs, c.n_samples, derive_seed(c.seed, k++), c.threads);
        const double target = mode == OutcomeMode::Limit ? alpha_from_params(p.r, p.b, p.rho_bar) : alpha_fixed_point(probs);
        const double zscore = est.stderr_ > 0 ? (est.alpha_hat - target) / est.stderr_ : 0.0;
        const double residual = p.r * (p.rho_bar - est.alpha_hat) + p.b * est.alpha_hat * (1.0 - est.alpha_hat);
        const bool ok = std::abs(est.alpha_hat - target) <= z * est.stderr_ + 1e-15 && est.overflow_rate <= 1e-3;
        rep.pass = rep.pass && ok;
        rows.push_back({{"r", p.r},
                        {"b", p.b},
                        {"rho_bar", p.rho_bar},
                        {"p_plus", probs.p_plus},
                        {"p_minus", probs.p_minus},
                        {"p_branch", probs.p_branch},
                        {"alpha_hat", est.alpha_hat},
                        {"stderr", est.stderr_},
                        {"alpha_reference", target},
                        {"z", zscore},
                        {"fixed_point_residual", residual},
                        {"mean_branches", est.mean_branches},
                        {"mean_branches_theory", probs.p_branch < 0.5 ? probs.p_branch / (1.0 - 2.0 * probs.p_branch)
                                                                       : std::numeric_limits<double>::infinity()},
                        {"overflow_rate", est.overflow_rate},
                        {"pass", ok}});
    }
    rep.summary = {{"mode", mode_name}, {"n_samples", c.n_samples}, {"z", z}, {"sets", rows}};
    write_summary(dir, c, rep);
    return rep;
}

// ---------------------------------------------------------------- dual-stats

struct DualSweepRow {
    int N = 0;
    std::uint64_t n = 0;
    std::uint64_t kappa_above = 0;     // kappa > log N
    std::uint64_t lifespan_above = 0;  // T > N^(-theta_hat / 2)
    std::uint64_t failed = 0;
    std::uint64_t died_first = 0;      // first change of |A| is a deletion
    std::uint64_t branched_first = 0;
    std::uint64_t extinct = 0;

    static double rate(std::uint64_t k, std::uint64_t n) { return n ? static_cast<double>(k) / static_cast<double>(n) : 0.0; }
    static double se(std::uint64_t k, std::uint64_t n) {
        const double p = rate(k, n);
        return n > 1 ? std::sqrt(p * (1.0 - p) / static_cast<double>(n - 1)) : 0.0;
    }
    double death_first_rate() const { return rate(died_first, died_first + branched_first); }
};

namespace detail {
struct DualRecord {
    std::uint64_t seed;
    DualStats stats;
};
struct DualRecords {
    std::vector<DualRecord> rows;
    void merge(const DualRecords& o) { rows.insert(rows.end(), o.rows.begin(), o.rows.end()); }
};
}  // namespace detail

/// Dual statistics from site x over n runs of horizon t, sampled from the flag generator.
inline std::vector<std::pair<std::uint64_t, DualStats>> sample_dual_runs(const ModelParams& p, Site x, double t,
                                                                         std::uint64_t n, std::uint64_t seed,
                                                                         unsigned threads = 1) {
    auto fn = [&](std::uint64_t i, Rng& rng, detail::DualRecords& acc) {
        acc.rows.push_back({replica_seed(seed, i), sample_dual_statistics(x, p, t, rng)});
    };
    auto all = run_replicas(n, threads, seed, detail::DualRecords{}, fn);
    std::sort(all.rows.begin(), all.rows.end(), [](const auto& a, const auto& b) { return a.seed < b.seed; });
    std::vector<std::pair<std::uint64_t, DualStats>> out;
    out.reserve(all.rows.size());
    for (const auto& r : all.rows) out.emplace_back(r.seed, r.stats);
    return out;
}

inline DualSweepRow summarize_dual_runs(const ModelParams& p, const std::vector<std::pair<std::uint64_t, DualStats>>& runs) {
    DualSweepRow row;
    row.N = p.N;
    const double kappa_cut = std::log(static_cast<double>(p.N));
    const double life_cut = std::pow(static_cast<double>(p.N), -p.theta_hat() / 2.0);
    for (const auto& [s, st] : runs) {
        ++row.n;
        if (st.kappa > kappa_cut) ++row.kappa_above;
        if (st.lifespan > life_cut) ++row.lifespan_above;
        if (st.failed) ++row.failed;
        if (!st.hit_horizon) ++row.extinct;
        if (st.first_change < 0) ++row.died_first;
        if (st.first_change > 0) ++row.branched_first;
    }
    return row;
}

inline Report run_dual_stats(const ExperimentConfig& c) {
    const auto dir = detail::prepare_dir(c);
    const auto sizes = c.option<std::vector<int>>("N_list", {c.params.N});
    const Site x = c.option<int>("site", 3);
    const double horizon = c.option<double>("horizon", 1.0);
    const double z = c.option<double>("z", 3.0);
    const double death_min = c.option<double>("death_first_min", 0.55);
    Report rep;
    rep.experiment = c.experiment;
    CsvWriter csv(dir / "dual_stats.csv", provenance(c, c.n_samples),
                  {"seed", "x", "kappa", "lifespan", "max_position", "failed", "hit_horizon", "N"});
    std::vector<DualSweepRow> rows;
    json table = json::array();
    for (int N : sizes) {
        ModelParams p = c.params;
        p.N = N;
        const auto runs = sample_dual_runs(p, x, horizon, c.n_samples, derive_seed(c.seed, static_cast<std::uint64_t>(N)), c.threads);
        for (const auto& [s, st] : runs) {
            csv.row(s, x, st.kappa, st.lifespan, st.max_position, st.failed ? 1 : 0, st.hit_horizon ? 1 : 0, N);
        }
        const auto row = summarize_dual_runs(p, runs);
        rows.push_back(row);
        table.push_back({{"N", N},
                         {"runs", row.n},
                         {"p_kappa_above_logN", DualSweepRow::rate(row.kappa_above, row.n)},
                         {"p_kappa_above_logN_se", DualSweepRow::se(row.kappa_above, row.n)},
                         {"p_lifespan_above", DualSweepRow::rate(row.lifespan_above, row.n)},
                         {"p_lifespan_above_se", DualSweepRow::se(row.lifespan_above, row.n)},
                         {"lifespan_threshold", std::pow(static_cast<double>(N), -p.theta_hat() / 2.0)},
                         {"failure_rate", DualSweepRow::rate(row.failed, row.n)},
                         {"failure_rate_se", DualSweepRow::se(row.failed, row.n)},
                         {"extinct_rate", DualSweepRow::rate(row.extinct, row.n)},
                         {"death_first_rate", row.death_first_rate()},
                         {"death_first_se", DualSweepRow::se(row.died_first, row.died_first + row.branched_first)}});
    }
    auto non_increasing = [&](auto count) {
        for (std::size_t i = 1; i < rows.size(); ++i) {
            const double a = DualSweepRow::rate(count(rows[i - 1]), rows[i - 1].n);
            const double b = DualSweepRow::rate(count(rows[i]), rows[i].n);
            const double joint = std::hypot(DualSweepRow::se(count(rows[i - 1]), rows[i - 1].n),
                                            DualSweepRow::se(count(rows[i]), rows[i].n));
            if (b > a + z * joint) return false;
        }
        return true;
    };
    const bool kappa_ok = non_increasing([](const DualSweepRow& r) { return r.kappa_above; });
    const bool life_ok = non_increasing([](const DualSweepRow& r) { return r.lifespan_above; });
    const bool fail_ok = non_increasing([](const DualSweepRow& r) { return r.failed; });
    bool death_ok = true;
    for (const auto& r : rows) death_ok = death_ok && r.death_first_rate() >= death_min;
    rep.pass = kappa_ok && life_ok && fail_ok && death_ok;
    rep.files.push_back(dir / "dual_stats.csv");
    rep.summary = {{"site", x},
                   {"horizon", horizon},
                   {"z", z},
                   {"kappa_non_increasing", kappa_ok},
                   {"lifespan_non_increasing", life_ok},
                   {"failure_non_increasing", fail_ok},
                   {"death_first_min", death_min},
                   {"death_first_ok", death_ok},
                   {"sizes", table}};
    write_summary(dir, c, rep);
    return rep;
}

// ---------------------------------------------------------------- engines-equal

struct EngineComparison {
    FieldEstimates a, b;
    double max_abs_z_mean = 0.0;
    double max_abs_z_cov = 0.0;
};

inline EngineComparison compare_engines(const InitialProfile& f0, const ModelParams& p, double t, std::uint64_t n,
                                        std::uint64_t seed, Engine first, Engine second, unsigned threads = 1) {
    EngineComparison out;
    const auto pairs = all_pairs(p.N);
    out.a = sample_fields(f0, p, {t}, n, derive_seed(seed, 1), pairs, threads, first);
    out.b = sample_fields(f0, p, {t}, n, derive_seed(seed, 2), pairs, threads, second);
    const auto& da = out.a.density[0];
    const auto& db = out.b.density[0];
    for (std::size_t i = 0; i < da.values.size(); ++i) {
        const double s = std::hypot(da.stderr_[i], db.stderr_[i]);
        if (s > 0) out.max_abs_z_mean = std::max(out.max_abs_z_mean, std::abs(da.values[i] - db.values[i]) / s);
    }
    const auto& ca = out.a.correlation[0];
    const auto& cb = out.b.correlation[0];
    for (std::size_t i = 0; i < ca.values.size(); ++i) {
        const double s = std::hypot(ca.stderr_[i], cb.stderr_[i]);
        if (s > 0) out.max_abs_z_cov = std::max(out.max_abs_z_cov, std::abs(ca.values[i] - cb.values[i]) / s);
    }
    return out;
}

inline Report run_engines_equal(const ExperimentConfig& c) {
    const auto dir = detail::prepare_dir(c);
    const double z = c.option<double>("z", 4.0);
    const double t = c.times.back();
    const auto cmp = compare_engines(c.profile, c.params, t, c.n_samples, c.seed, Engine::Gillespie, Engine::Graphical,
                                     c.threads);
    const auto cmp2 = compare_engines(c.profile, c.params, t, c.n_samples, derive_seed(c.seed, 3), Engine::Gillespie,
                                      Engine::Superposed, c.threads);
    Report rep;
    rep.experiment = c.experiment;
    CsvWriter dcsv(dir / "density.csv", provenance(c, c.n_samples),
                   {"t", "x", "u", "mean", "stderr", "discrete", "continuum", "stationary", "engine"});
    const double nan = std::numeric_limits<double>::quiet_NaN();
    const int N = c.params.N;
    for (const auto* f : {&cmp.a, &cmp.b, &cmp2.b}) {
        const char* name = f == &cmp.a ? "gillespie" : f == &cmp.b ? "graphical" : "superposed";
        const auto& d = f->density[0];
        for (Site x = 1; x <= N - 1; ++x) {
            dcsv.row(t, x, static_cast<double>(x) / N, d.at(x), d.se(x), nan, nan, nan, name);
        }
    }
    CsvWriter ccsv(dir / "corr.csv", provenance(c, c.n_samples), {"t", "x", "y", "phi", "stderr", "reference", "N", "engine"});
    for (const auto* f : {&cmp.a, &cmp.b, &cmp2.b}) {
        const char* name = f == &cmp.a ? "gillespie" : f == &cmp.b ? "graphical" : "superposed";
        const auto& cf = f->correlation[0];
        for (std::size_t i = 0; i < cf.pairs.size(); ++i) {
            ccsv.row(t, cf.pairs[i].first, cf.pairs[i].second, cf.values[i], cf.stderr_[i], nan, N, name);
        }
    }
    rep.pass = cmp.max_abs_z_mean <= z && cmp.max_abs_z_cov <= z && cmp2.max_abs_z_mean <= z && cmp2.max_abs_z_cov <= z;
    rep.files = {dir / "density.csv", dir / "corr.csv"};
    rep.summary = {{"t", t},
                   {"z", z},
                   {"gillespie_vs_graphical", {{"max_abs_z_mean", cmp.max_abs_z_mean}, {"max_abs_z_cov", cmp.max_abs_z_cov}}},
                   {"gillespie_vs_superposed", {{"max_abs_z_mean", cmp2.max_abs_z_mean}, {"max_abs_z_cov", cmp2.max_abs_z_cov}}}};
    write_summary(dir, c, rep);
    return rep;
}

// ---------------------------------------------------------------- tree-laws

inline json tree_law_json(const TreeLawReport& r) {
    json entries = json::array();
    for (const auto& e : r.entries) {
        entries.push_back({{"tree", e.tree}, {"size", e.size}, {"dual", e.freq_dual}, {"gw", e.freq_gw}});
    }
    return {{"tv", r.tv},
            {"tv_with_remainder", r.tv_with_remainder},
            {"failed_rate", r.failed_rate},
            {"n_samples", r.n_samples},
            {"p_plus", r.probs.p_plus},
            {"p_minus", r.probs.p_minus},
            {"p_branch", r.probs.p_branch},
            {"p_root_plus_dual", r.p_root_plus_dual},
            {"p_root_plus_dual_stderr", r.p_root_plus_dual_stderr},
            {"trees", entries}};
}

inline Report run_tree_laws(const ExperimentConfig& c) {
    const auto dir = detail::prepare_dir(c);
    const auto sizes = c.option<std::vector<int>>("N_list", {c.params.N});
    const double t = c.option<double>("horizon", c.times.back());
    const auto max_size = c.option<std::size_t>("max_size", 15);
    const double slack = c.option<double>("tv_slack", 0.02);
    Report rep;
    rep.experiment = c.experiment;
    json per_n = json::array();
    std::vector<double> tvs;
    for (int N : sizes) {
        ModelParams p = c.params;
        p.N = N;
        const auto r = compare_tree_laws(p, t, c.n_samples, derive_seed(c.seed, static_cast<std::uint64_t>(N)), max_size, c.threads);
        tvs.push_back(r.tv);
        json j = tree_law_json(r);
        j["N"] = N;
        per_n.push_back(j);
    }
    bool monotone = true;
    for (std::size_t i = 1; i < tvs.size(); ++i) monotone = monotone && tvs[i] <= tvs[i - 1] + slack;
    rep.pass = monotone;
    const auto path = dir / "tree_laws.json";
    std::ofstream(path) << json{{"horizon", t}, {"max_size", max_size}, {"sizes", per_n}}.dump(2) << '\n';
    rep.files.push_back(path);
    json brief = json::array();
    for (std::size_t i = 0; i < sizes.size(); ++i) brief.push_back({{"N", sizes[i]}, {"tv", tvs[i]}});
    rep.summary = {{"horizon", t}, {"max_size", max_size}, {"tv_slack", slack}, {"tv_non_increasing", monotone}, {"sizes", brief}};
    write_summary(dir, c, rep);
    return rep;
}

// ---------------------------------------------------------------- dispatch

inline Report run_experiment(const ExperimentConfig& c) {
    if (c.experiment == "hydro") return run_hydro(c);
    if (c.experiment == "hydrostatic") return run_hydrostatic(c);
    if (c.experiment == "corr") return run_corr(c);
    if (c.experiment == "duality") return run_duality(c);
    if (c.experiment == "gw-alpha") return run_gw_alpha(c);
    if (c.experiment == "dual-stats") return run_dual_stats(c);
    if (c.experiment == "engines-equal") return run_engines_equal(c);
    if (c.experiment == "tree-laws") return run_tree_laws(c);
    throw ConfigError("unknown experiment '" + c.experiment + "'");
}

}  // namespace ssep
