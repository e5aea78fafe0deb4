#include <cstdio>
#include <functional>
#include <iostream>
#include <map>

#include <CLI11.hpp>

#include "sdde/commands.hpp"
#include "sdde/errors.hpp"

namespace {

enum ExitCode { kOk = 0, kConfig = 2, kNumeric = 3, kIo = 4 };

using Runner = std::function<std::vector<std::filesystem::path>(const sdde::cli::ExperimentConfig&,
                                                                const sdde::cli::RunOptions&)>;

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Truncated Euler-Maruyama experiments for stochastic delay equations"};
    app.require_subcommand(1);

    std::string config_path;
    std::optional<std::uint64_t> seed;
    std::optional<std::string> out_dir;
    unsigned threads = 0;

    const std::map<std::string, std::pair<std::string, Runner>> commands = {
        {"simulate", {"write paths.csv and meta.json", sdde::cli::run_simulate}},
        {"converge", {"estimate the strong error and its order", sdde::cli::run_converge}},
        {"stability", {"estimate moments and the decay rate", sdde::cli::run_stability}},
        {"equivalence", {"compare decay rates at Delta and Delta/8", sdde::cli::run_equivalence}},
        {"check", {"sample the coefficient assumptions", sdde::cli::run_check}},
    };
    for (const auto& [name, spec] : commands) {
        CLI::App* sub = app.add_subcommand(name, spec.first);
        sub->add_option("--config", config_path, "experiment config file")->required();
        sub->add_option("--seed", seed, "override the config seed");
        sub->add_option("--out", out_dir, "override the config output_dir");
        sub->add_option("--threads", threads, "worker cap (default SDDE_THREADS or all cores)");
    }

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? kOk : kConfig;
    }

    const std::string name = app.get_subcommands().front()->get_name();
    try {
        sdde::cli::ExperimentConfig config = sdde::cli::load_config(config_path);
        if (seed) config.seed = *seed;
        if (out_dir) config.output_dir = *out_dir;
        for (const auto& path : commands.at(name).second(config, {threads})) std::cout << path.string() << '\n';
        return kOk;
    } catch (const sdde::cli::ConfigError& e) {
        std::cerr << config_path << ": " << e.what() << '\n';
        return kConfig;
    } catch (const sdde::ArgumentError& e) {
        std::cerr << config_path << ": " << e.what() << '\n';
        return kConfig;
    } catch (const sdde::NumericRangeError& e) {
        std::cerr << config_path << ": numeric range error: " << e.what() << '\n';
        return kNumeric;
    } catch (const sdde::cli::IoError& e) {
        std::cerr << "I/O error: " << e.what() << '\n';
        return kIo;
    }
}
