#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <utility>
#include <vector>

#include "sdde/linalg.hpp"
#include "sdde/model.hpp"
#include "sdde/noise.hpp"

namespace sdde {

/// Parameters of mu(u) = H3 u^{(2+rho)/2} and h(Delta) = h_hat Delta^{-epsilon}.
///
/// mu is extended below u = 1 as H3 u so that its inverse is total; for a valid
/// policy h(Delta) >= h_hat >= mu(1) on (0, 1], so the truncation radius only
/// ever uses the inverse on [mu(1), inf).
class TruncationPolicy {
public:
    /// Throws ArgumentError unless h3 > 0, rho > 0, epsilon in (0, 1/4] and h_hat >= 1 v mu(1).
    TruncationPolicy(double h3, double rho, double h_hat, double epsilon);

    double h3() const noexcept { return h3_; }
    double rho() const noexcept { return rho_; }
    double h_hat() const noexcept { return h_hat_; }
    double epsilon() const noexcept { return epsilon_; }

    double mu(double u) const;
    double mu_inverse(double v) const;
    /// h(Delta) for Delta in (0, 1].
    double h(double delta) const;
    /// mu^{-1}(h(Delta)) = (h_hat Delta^{-eps} / H3)^{2/(2+rho)}.
    double truncation_radius(double delta) const;

private:
    double h3_;
    double rho_;
    double h_hat_;
    double epsilon_;
};

/// Radial projection onto the closed ball of `radius`; 0 maps to 0.
Vector truncate_state(std::span<const double> x, double radius);

enum class Variant { truncated, classical };

/// One configured scheme: problem, truncation policy, Delta = tau / m_sub and horizon.
class SchemeRun {
public:
    /// Throws ArgumentError unless Delta in (0, 1], horizon / Delta is an integer (within 1e-9 relative)
    /// and a policy is given for the truncated variant.
    SchemeRun(SddeProblem problem, std::optional<TruncationPolicy> policy, std::size_t m_sub, double horizon,
              Variant variant = Variant::truncated);

    const SddeProblem& problem() const noexcept { return problem_; }
    const std::optional<TruncationPolicy>& policy() const noexcept { return policy_; }
    std::size_t m_sub() const noexcept { return m_sub_; }
    double horizon() const noexcept { return horizon_; }
    Variant variant() const noexcept { return variant_; }
    double delta() const noexcept { return delta_; }
    /// Number of steps K = horizon / Delta.
    std::int64_t steps() const noexcept { return steps_; }
    /// Truncation radius for the truncated variant; +inf for classical.
    double radius() const noexcept { return radius_; }

    /// t_k = k Delta, with t_{-M} pinned to -tau.
    double grid_time(std::int64_t k) const;

private:
    SddeProblem problem_;
    std::optional<TruncationPolicy> policy_;
    std::size_t m_sub_;
    double horizon_;
    Variant variant_;
    double delta_;
    std::int64_t steps_;
    double radius_;
};

/// (f(pi x, pi y), g(pi x, pi y)) with pi the projection onto the ball of mu^{-1}(h(delta)).
std::pair<Vector, Matrix> truncated_coefficients(const SddeProblem& problem, const TruncationPolicy& policy,
                                                 double delta, std::span<const double> x,
                                                 std::span<const double> y);

/// X_{k+1} = X_k + F(X_k, X_{k-M}) Delta + G(X_k, X_{k-M}) dW with F, G truncated or raw per variant.
/// Throws NumericRangeError when the coefficients or the new state are not finite.
Vector step(const SchemeRun& run, std::span<const double> state, std::span<const double> delayed,
            std::span<const double> dw);

/// Norm above which a classical path is treated as blown up.
inline constexpr double kBlowUpNorm = 1e300;

struct SimulateOptions {
    /// Record grid indices k = -M + j*stride, plus the final index K. Must divide M.
    std::size_t record_stride = 1;
    std::uint64_t first_path_id = 0;
    /// 0 picks the default (SDDE_THREADS or the hardware concurrency).
    unsigned threads = 0;
};

/// Simulated states of many independent paths. Immutable once built.
class TrajectoryEnsemble {
public:
    TrajectoryEnsemble(SchemeRun run, LatticeFamily family, std::size_t n_paths, std::uint64_t first_path_id,
                       std::size_t record_stride);

    const SchemeRun& run() const noexcept { return run_; }
    const LatticeFamily& lattice_family() const noexcept { return family_; }
    std::size_t n_paths() const noexcept { return n_paths_; }
    std::uint64_t first_path_id() const noexcept { return first_path_id_; }
    std::size_t record_stride() const noexcept { return stride_; }

    bool recorded(std::int64_t k) const noexcept;
    /// Recorded grid indices in ascending order.
    const std::vector<std::int64_t>& recorded_indices() const noexcept { return indices_; }

    /// X_k of path `path` (0-based within the ensemble). Throws ArgumentError if k was not recorded.
    std::span<const double> state(std::size_t path, std::int64_t k) const;

    /// A classical path that blew up is frozen at its last finite state and flagged.
    bool flagged(std::size_t path) const { return flag_step_.at(path) >= 0; }
    std::int64_t flag_step(std::size_t path) const { return flag_step_.at(path); }
    double flagged_fraction() const;

    // Used by the engine while building.
    std::span<double> mutable_slot(std::size_t path, std::size_t slot);
    std::size_t slot_of(std::int64_t k) const;
    void set_flag(std::size_t path, std::int64_t k) { flag_step_.at(path) = k; }

private:
    SchemeRun run_;
    LatticeFamily family_;
    std::size_t n_paths_;
    std::uint64_t first_path_id_;
    std::size_t stride_;
    std::size_t dim_;
    std::vector<std::int64_t> indices_;
    std::vector<double> states_;
    std::vector<std::int64_t> flag_step_;
};

/// Runs `n_paths` trajectories driven by lattices family.lattice(first_path_id + i).
/// Throws ArgumentError when Delta is not an integer multiple of master_dt or the lattice is too short.
TrajectoryEnsemble simulate(const SchemeRun& run, const LatticeFamily& family, std::size_t n_paths,
                            const SimulateOptions& options = {});

/// Piecewise-constant step process xbar(t) = X_k for t_k <= t < t_{k+1}, t in [-tau, horizon].
std::span<const double> step_process_value(const TrajectoryEnsemble& ensemble, std::size_t path, double t);

/// Grid index k with t_k <= t < t_{k+1}, consistent with t_k = k*Delta.
std::int64_t step_index(const SchemeRun& run, double t);

/// Continuous interpolant x(t) = X_k + F(X_k, X_{k-M})(t - t_k) + G(X_k, X_{k-M})(W(t) - W(t_k)),
/// for t in [0, horizon] on the master grid of the ensemble's lattice. Throws ArgumentError when
/// t is off the master grid or X_k, X_{k-M} were not recorded.
Vector interpolant_value(const TrajectoryEnsemble& ensemble, std::size_t path, double t);

/// Default worker count: SDDE_THREADS if set, otherwise the hardware concurrency.
unsigned default_threads();

}  // namespace sdde
