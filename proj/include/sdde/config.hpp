#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "sdde/analysis.hpp"
#include "sdde/model.hpp"
#include "sdde/scheme.hpp"

namespace sdde::cli {

/// Invalid configuration. `problems` lists every violated field.
class ConfigError : public std::runtime_error {
public:
    explicit ConfigError(std::vector<std::string> problems);
    const std::vector<std::string>& problems() const noexcept { return problems_; }

private:
    std::vector<std::string> problems_;
};

class IoError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

enum class Measure { strong_error, interpolation_gap };

/// One experiment. Step sizes are stored as M with Delta = tau / M.
struct ExperimentConfig {
    std::string problem_key;
    ParamMap problem_params;  // without tau
    std::optional<InitialSpec> initial;
    double tau = 1.0;

    std::optional<std::size_t> m_sub;
    std::vector<std::size_t> m_sub_list;
    std::optional<std::size_t> reference_m_sub;

    double horizon = 1.0;
    std::size_t n_paths = 100;
    std::optional<double> p;  // moment order; the check subcommand falls back to the registry value
    std::optional<double> q;  // monotonicity q for check
    double q_bar = 2.0;
    double epsilon = 0.25;
    std::optional<double> h_hat;
    std::optional<double> h3;
    std::optional<double> rho;
    std::uint64_t seed = 0;
    double c_star = 1.0;
    std::optional<DecayWindow> fit_window;
    std::optional<double> sample_spacing;
    std::size_t batches = 10;
    std::string output_dir = ".";

    Variant scheme = Variant::truncated;
    bool fail_on_blowup = false;
    std::size_t record_stride = 1;
    Measure measure = Measure::strong_error;

    std::size_t n_samples = 20000;
    double lipschitz_radius = 10.0;
};

/// Parses flat `key = value` lines; `#` starts a comment. Step sizes accept decimals or `2^-k`.
/// Throws ConfigError listing every bad line and field.
ExperimentConfig parse_config(std::string_view text);

/// Reads and parses a file; IoError if it cannot be read.
ExperimentConfig load_config(const std::filesystem::path& path);

/// Parses a step size such as `0.125` or `2^-7`.
std::optional<double> parse_step(std::string_view text);

/// Resolved constants for a config: the registry entry and the truncation policy.
struct Resolved {
    ProblemRegistryEntry entry;
    double h3 = 0.0;
    double rho = 0.0;
    double h_hat = 0.0;
    std::optional<TruncationPolicy> policy;
};

/// Builds the problem and policy, reporting every violated field as a ConfigError.
Resolved resolve(const ExperimentConfig& config);

/// Canonical JSON text of the config (sorted keys, shortest round-trip numbers). The output
/// directory is left out so that a run moved elsewhere keeps its hash.
std::string canonical_json(const ExperimentConfig& config);

/// FNV-1a 64 of canonical_json, as 16 hex digits.
std::string config_hash(const ExperimentConfig& config);

}  // namespace sdde::cli
