// arrcl: run, validate and compare continual-learning sweeps.
//
//   arrcl validate --config exp.cfg
//   arrcl run --config exp.cfg [--out dir] [--jobs N] [--seed S]
//   arrcl compare --dir results
//
// Exit codes: 0 ok, 1 validation error, 2 runtime failure.

#include <fstream>
#include <iostream>
#include <sstream>
#include <string>

#include <CLI11.hpp>

#include "arr/experiment.hpp"

namespace {

constexpr int exit_ok = 0;
constexpr int exit_validation = 1;
constexpr int exit_runtime = 2;

bool read_file(const std::string& path, std::string& text) {
    std::ifstream in(path);
    if (!in) return false;
    std::ostringstream s;
    s << in.rdbuf();
    text = s.str();
    return true;
}

int load_config(const std::string& path, std::optional<arr::ExperimentConfig>& cfg) {
    std::string text;
    if (!read_file(path, text)) {
        std::cerr << "error: cannot read config " << path << '\n';
        return exit_validation;
    }
    auto result = arr::validate_config(text);
    for (const auto& e : result.errors) std::cerr << path << ": " << e << '\n';
    if (!result.ok()) return exit_validation;
    cfg = std::move(result.config);
    return exit_ok;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Latent-replay continual learning sweeps"};
    app.require_subcommand(1);

    std::string config_path;
    std::string out_dir;
    std::size_t jobs = 1;
    std::uint64_t seed = 0;
    std::string result_dir;

    auto* validate = app.add_subcommand("validate", "check a config file and print the resolved settings");
    validate->add_option("-c,--config", config_path, "config file")->required();

    auto* run = app.add_subcommand("run", "execute every sweep cell of a config");
    run->add_option("-c,--config", config_path, "config file")->required();
    auto* out_opt = run->add_option("-o,--out", out_dir, "output directory (overrides 'output')");
    run->add_option("-j,--jobs", jobs, "parallel cells")->check(CLI::PositiveNumber);
    auto* seed_opt = run->add_option("-s,--seed", seed, "run a single seed instead of the sweep list");

    auto* compare = app.add_subcommand("compare", "rank the result cells of a run directory");
    compare->add_option("-d,--dir", result_dir, "result directory")->required();

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        return app.exit(e) == 0 ? exit_ok : exit_validation;
    }

    if (validate->parsed()) {
        std::optional<arr::ExperimentConfig> cfg;
        if (const int rc = load_config(config_path, cfg); rc != exit_ok) return rc;
        std::cout << cfg->echo() << "# cells = " << cfg->cell_count() << '\n';
        return exit_ok;
    }

    if (run->parsed()) {
        std::optional<arr::ExperimentConfig> cfg;
        if (const int rc = load_config(config_path, cfg); rc != exit_ok) return rc;
        arr::RunOptions opts;
        opts.jobs = jobs;
        if (*seed_opt) opts.seed_override = seed;
        if (*out_opt) opts.output_dir = out_dir;
        try {
            const auto report = arr::run_experiment(*cfg, opts);
            for (const auto& f : report.failures) std::cerr << "cell failed: " << f << '\n';
            std::cout << report.cells - report.failed << '/' << report.cells << " cells completed in "
                      << report.output_dir.string() << '\n';
            const auto table = report.output_dir / "comparison.txt";
            std::string text;
            if (read_file(table.string(), text)) std::cout << text;
            return report.failed == 0 ? exit_ok : exit_runtime;
        } catch (const arr::ConfigError& e) {
            std::cerr << "error: " << e.what() << '\n';
            return exit_validation;
        } catch (const std::exception& e) {
            std::cerr << "error: " << e.what() << '\n';
            return exit_runtime;
        }
    }

    try {
        const auto table = arr::compare_runs(result_dir);
        std::cout << table.render();
        return exit_ok;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return exit_runtime;
    }
}
