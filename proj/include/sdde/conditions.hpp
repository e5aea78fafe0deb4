#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "sdde/model.hpp"

namespace sdde {

enum class Assumption { local_lipschitz, khasminskii, monotonicity_u, polynomial_growth, holder_initial };

std::string to_string(Assumption a);

enum class Verdict { consistent, violated };

std::string to_string(Verdict v);

/// Outcome of a sampling check. A check can falsify an assumption; "consistent" only means
/// that no sample contradicted it and the largest sampled ratio is `estimated_constant`.
struct ConditionReport {
    Assumption assumption = Assumption::local_lipschitz;
    double estimated_constant = 0.0;
    std::size_t samples = 0;  // samples that entered the maximum
    /// Input at which the maximum was attained: (x, y), (x, y, xbar, ybar) or (u, v).
    std::optional<std::vector<double>> max_violation_point;
    Verdict verdict = Verdict::consistent;
    /// Only set by check_polynomial_growth: sqrt(6 H2) + |f(0,0)| + |g(0,0)|.
    std::optional<double> derived_h3;
    std::string note;
};

/// Samples are a fixed function of (seed, index), so a larger n_samples only adds points.
/// State samples mix uniform points in the ball of `ball_radius` with log-radial probes of
/// norm 10^0 .. 10^max_log_norm along random directions.
struct SampleSpec {
    std::size_t n_samples = 20000;
    std::uint64_t seed = 0;
    double ball_radius = 10.0;
    double max_log_norm = 6.0;
};

/// K1 = max [x.f + (p-1)/2 |g|^2] / (1 + |x|^2 + |y|^2). Requires p > 2.
ConditionReport check_khasminskii(const SddeProblem& problem, double p, const SampleSpec& spec = {});

/// H2 = max (|f - fbar|^2 v |g - gbar|^2) / [(1 + |x|^rho + |y|^rho + |xbar|^rho + |ybar|^rho)
/// (|x - xbar|^2 + |y - ybar|^2)], plus the derived H3. Requires rho > 0.
ConditionReport check_polynomial_growth(const SddeProblem& problem, double rho, const SampleSpec& spec = {});

/// K_R = max (|f - fbar| v |g - gbar|) / (|x - xbar| + |y - ybar|) over pairs in the ball of radius R.
ConditionReport check_local_lipschitz(const SddeProblem& problem, double radius, const SampleSpec& spec = {});

/// K2 = max |xi(u) - xi(v)| / |u - v|^gamma on [-tau, 0] with the segment's declared gamma.
ConditionReport check_holder_initial(const InitialSegment& segment, double tau, const SampleSpec& spec = {});

/// H1 = max [(x - xbar).(f - fbar) + (q-1)/2 |g - gbar|^2 + U(x, xbar) - U(y, ybar)]
/// / (|x - xbar|^2 + |y - ybar|^2). Requires q > 2; throws ArgumentError when U is absent.
ConditionReport check_monotonicity_u(const SddeProblem& problem, double q, const std::optional<UFunction>& u_function,
                                     const SampleSpec& spec = {});

/// Fallback H3 for problems without a known value: twice the largest sampled
/// (|f| v |g|) / (|x| v |y|)^{(2+rho)/2} over log-radial samples with |x| v |y| in [1, 10^3].
double estimate_h3(const SddeProblem& problem, double rho, const SampleSpec& spec = {});

}  // namespace sdde
