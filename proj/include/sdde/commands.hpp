#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "sdde/config.hpp"

namespace sdde::cli {

struct RunOptions {
    unsigned threads = 0;  // 0: default_threads()
};

/// Each runner computes everything first and writes its files at the end, under config.output_dir.
/// Returns the written paths. Errors: ConfigError, ArgumentError, NumericRangeError, IoError.

/// paths.csv (path_id, t, x_1..x_n) and meta.json.
std::vector<std::filesystem::path> run_simulate(const ExperimentConfig& config, const RunOptions& options = {});
/// errors.csv and summary.json (or gap.csv and summary.json for measure = interpolation_gap).
std::vector<std::filesystem::path> run_converge(const ExperimentConfig& config, const RunOptions& options = {});
/// moments.csv and decay.json.
std::vector<std::filesystem::path> run_stability(const ExperimentConfig& config, const RunOptions& options = {});
/// equivalence.json.
std::vector<std::filesystem::path> run_equivalence(const ExperimentConfig& config, const RunOptions& options = {});
/// conditions.json.
std::vector<std::filesystem::path> run_check(const ExperimentConfig& config, const RunOptions& options = {});

/// Shortest decimal that round-trips to the same double.
std::string format_double(double v);

}  // namespace sdde::cli
