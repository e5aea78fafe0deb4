#pragma once

#include <cmath>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "sdde/model.hpp"
#include "sdde/scheme.hpp"

namespace sdde {

// ---------------------------------------------------------------------------
// Moments and decay fits

enum class FlaggedPolicy { exclude, include };

/// Monte Carlo estimate of E|x(t)|^p at each requested time.
struct MomentSeries {
    double p = 2.0;
    std::vector<double> times;
    std::vector<double> values;
    std::vector<double> std_errors;
    std::size_t n_paths = 0;  // ensemble size
    std::size_t n_used = 0;   // paths entering the averages
    double flagged_fraction = 0.0;
};

/// |x|^p from a squared norm; exact for p = 2.
inline double pth_power_from_squared(double squared_norm, double p) {
    return p == 2.0 ? squared_norm : std::pow(squared_norm, 0.5 * p);
}

/// Averages |xbar(t)|^p over paths in ascending path order. Blow-up flagged paths are
/// excluded by default and reported through flagged_fraction.
MomentSeries estimate_moment(const TrajectoryEnsemble& ensemble, double p, std::span<const double> times,
                             FlaggedPolicy flagged = FlaggedPolicy::exclude);

/// Recorded grid times in [0, horizon] spaced by `spacing` (a multiple of the recorded stride).
std::vector<double> sample_times(const TrajectoryEnsemble& ensemble, double spacing);

struct LineFit {
    double slope = 0.0;
    double intercept = 0.0;
    double r_squared = 1.0;
};

/// Ordinary least squares y = intercept + slope x. Needs >= 2 points with distinct x.
LineFit fit_line(std::span<const double> xs, std::span<const double> ys);

struct DecayWindow {
    double t_lo = 0.0;
    double t_hi = 0.0;
};

inline DecayWindow default_decay_window(double horizon) { return {horizon / 4.0, horizon}; }

struct DecayFit {
    double lambda_hat = 0.0;  // per unit time
    double log_m_hat = 0.0;   // intercept log(M ||xi||^p)
    double r_squared = 1.0;
    DecayWindow window;
    std::size_t points = 0;
};

/// Least-squares line through (t, log value) inside the window. Needs >= 5 points, all positive.
DecayFit fit_decay(const MomentSeries& series, DecayWindow window);

/// Standard error of lambda_hat by batch means over `batches` contiguous path groups.
double decay_rate_standard_error(const TrajectoryEnsemble& ensemble, double p, std::span<const double> times,
                                 DecayWindow window, std::size_t batches = 10);

// ---------------------------------------------------------------------------
// Stability transfer constants

enum class TransferDirection { sdde_to_scheme, scheme_to_sdde };

struct TransferConstants {
    TransferDirection direction = TransferDirection::sdde_to_scheme;
    double input_rate = 0.0;
    double input_growth = 0.0;
    double p = 0.0;
    double tau = 0.0;
    double c_star = 1.0;
    double window_t = 0.0;
    double output_rate = 0.0;
    double output_growth = 0.0;
};

/// T = tau (9 + floor(4 log(2^p growth) / (rate tau))).
double transfer_window(double rate, double growth, double p, double tau);

/// (rate, growth) -> (rate / 2, 2^{p+1} growth c_star e^{rate T / 2}).
TransferConstants transfer_constants(TransferDirection direction, double input_rate, double input_growth, double p,
                                     double tau, double c_star);

/// 2^p C alpha + 2^p H e^{-gamma (T - 2 tau)} <= e^{-gamma T / 2}, inclusive.
/// `c_value` is C(2T - 2 tau) evaluated by the caller.
bool check_transfer_condition(double c_value, double alpha, double p, double growth, double rate, double window_t,
                              double tau);

// ---------------------------------------------------------------------------
// Strong error

struct ConvergenceReport {
    std::vector<double> deltas;  // strictly decreasing
    std::vector<double> errors;  // E|x_ref(T) - x_Delta(T)|^q_bar
    std::vector<double> std_errors;
    double q_bar = 2.0;
    double fitted_order = 0.0;   // slope of log error vs log Delta (q_bar-moment)
    double rms_order = 0.0;      // fitted_order / q_bar
    double r_squared = 0.0;
    bool fitted = false;         // false when fewer than two positive errors
    double reference_delta = 0.0;
    std::size_t n_paths = 0;
    double horizon = 0.0;
};

struct StrongErrorSpec {
    std::vector<std::size_t> m_subs;  // Delta = tau / M for each entry
    std::size_t reference_m_sub = 0;
    double q_bar = 2.0;
    std::size_t n_paths = 100;
    double horizon = 1.0;
    std::uint64_t seed = 0;
    unsigned threads = 0;
};

/// Runs every step size and the reference on the same Brownian lattice and compares
/// the states at the horizon.
ConvergenceReport strong_error(const SddeProblem& problem, const TruncationPolicy& policy,
                               const StrongErrorSpec& spec);

/// max_t E|x(t) - xbar(t)|^2 at mid-step times, per step size.
struct InterpolationGapReport {
    std::vector<double> deltas;
    std::vector<double> max_gap;
    std::vector<double> std_errors;  // at the maximising time
    double slope = 0.0;
    double r_squared = 0.0;
};

InterpolationGapReport interpolation_gap(const SddeProblem& problem, const TruncationPolicy& policy,
                                         std::span<const std::size_t> m_subs, std::size_t master_m_sub,
                                         std::size_t n_paths, double horizon, std::uint64_t seed,
                                         unsigned threads = 0);

// ---------------------------------------------------------------------------
// Stability experiments

struct StabilityOptions {
    std::optional<DecayWindow> window;  // default [horizon/4, horizon]
    std::optional<double> sample_spacing;  // default tau / 8, never finer than Delta
    std::size_t batches = 10;
    unsigned threads = 0;
};

struct StabilityResult {
    MomentSeries moments;
    std::optional<DecayFit> fit;  // absent for degenerate input
    double lambda_std_error = 0.0;
    bool degenerate = false;      // every moment in the window is zero
};

/// Simulates the run, estimates E|x|^p on sample times and fits the decay rate.
StabilityResult stability_experiment(const SchemeRun& run, const LatticeFamily& family, std::size_t n_paths,
                                     double p, const StabilityOptions& options = {});

struct EquivalenceReport {
    double delta = 0.0;
    double reference_delta = 0.0;
    StabilityResult coarse;
    StabilityResult reference;
    bool degenerate = false;
    bool sign_agreement = false;
    /// Both rates are at least three standard errors away from zero.
    bool separated = false;
    /// sdde_to_scheme constants from the reference fit; present only for a positive rate.
    std::optional<TransferConstants> transfer;
};

/// Truncated EM at Delta = tau / m_sub and at Delta / 8 on one Brownian lattice; the finer run
/// stands in for the exact solution. Requires problem.origin_fixed().
EquivalenceReport equivalence_experiment(const SddeProblem& problem, const TruncationPolicy& policy, double p,
                                         std::size_t m_sub, double horizon, std::size_t n_paths, std::uint64_t seed,
                                         double c_star = 1.0, const StabilityOptions& options = {});

}  // namespace sdde
