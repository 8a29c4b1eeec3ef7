#include <cstdint>
#include <filesystem>
#include <iostream>
#include <string>

#include <CLI11.hpp>

#include "ssep/harness.hpp"

int main(int argc, char** argv) {
    CLI::App app{"Monte Carlo experiments for the boundary-driven exclusion process with slow reservoirs"};
    std::string experiment;
    std::string config_path;
    std::string out_dir;
    std::uint64_t seed = 0;
    unsigned threads = 0;
    std::string kinds;
    for (const auto& k : ssep::experiment_kinds()) kinds += (kinds.empty() ? "" : " | ") + k;
    app.add_option("experiment", experiment, kinds)->required();
    app.add_option("--config,-c", config_path, "JSON configuration file")->required()->check(CLI::ExistingFile);
    auto* seed_opt = app.add_option("--seed", seed, "Override the configured seed");
    auto* out_opt = app.add_option("--out,-o", out_dir, "Run directory (default: configured 'out' or ./runs)");
    auto* threads_opt = app.add_option("--threads,-j", threads, "Worker threads; results do not depend on this")
                            ->check(CLI::PositiveNumber);
    CLI11_PARSE(app, argc, argv);

    ssep::ExperimentConfig cfg;
    try {
        cfg = ssep::load_config(experiment, config_path);
        if (*seed_opt) cfg.seed = seed;
        if (*out_opt) cfg.out_dir = out_dir;
        if (*threads_opt) cfg.threads = threads;
    } catch (const ssep::ConfigError& e) {
        std::cerr << "config error: " << e.what() << '\n';
        return 1;
    }

    try {
        const ssep::Report rep = ssep::run_experiment(cfg);
        std::cout << rep.summary.dump(2) << '\n';
        for (const auto& f : rep.files) std::cout << "wrote " << f.string() << '\n';
        std::cout << experiment << ": " << (rep.pass ? "PASS" : "FAIL") << '\n';
        return rep.pass ? 0 : 2;
    } catch (const ssep::ConfigError& e) {
        std::cerr << "config error: " << e.what() << '\n';
        return 1;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 3;
    }
}
