#pragma once

#include <array>
#include <functional>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "sdde/linalg.hpp"

namespace sdde {

/// Coefficient map (x, y) -> out, where y is the delayed state x(t - tau).
/// Drift writes n values; diffusion writes n*m values row-major.
/// Must be pure: equal inputs give bitwise-equal outputs.
using CoefficientFn =
    std::function<void(std::span<const double> x, std::span<const double> y, std::span<double> out)>;

/// Initial data xi on [-tau, 0] together with its declared Hoelder exponent and constant.
class InitialSegment {
public:
    using ValueFn = std::function<void(double u, std::span<double> out)>;

    InitialSegment(std::size_t dim, ValueFn values_on, double holder_exponent, double holder_constant);

    /// xi(u) = c for all u.
    static InitialSegment constant(Vector c);
    /// xi(u) = (1 + u) c. Lipschitz with constant |c|.
    static InitialSegment linear(Vector c);
    static InitialSegment zero(std::size_t dim) { return constant(Vector(dim, 0.0)); }

    std::size_t dim() const noexcept { return dim_; }
    double holder_exponent() const noexcept { return holder_exponent_; }
    double holder_constant() const noexcept { return holder_constant_; }

    void value_into(double u, std::span<double> out) const { values_on_(u, out); }
    Vector value(double u) const;

private:
    std::size_t dim_;
    ValueFn values_on_;
    double holder_exponent_;
    double holder_constant_;
};

class SddeProblem {
public:
    SddeProblem(std::string name, std::size_t dim, std::size_t noise_dim, double tau, CoefficientFn drift,
                CoefficientFn diffusion, InitialSegment initial, bool origin_fixed);

    const std::string& name() const noexcept { return name_; }
    std::size_t dim() const noexcept { return dim_; }
    std::size_t noise_dim() const noexcept { return noise_dim_; }
    double tau() const noexcept { return tau_; }
    bool origin_fixed() const noexcept { return origin_fixed_; }
    const InitialSegment& initial() const noexcept { return initial_; }

    /// Non-fatal findings from construction, e.g. the Hoelder spot check.
    const std::vector<std::string>& warnings() const noexcept { return warnings_; }

    /// f(x, y). Throws ArgumentError on dimension mismatch and NumericRangeError on non-finite output.
    Vector eval_drift(std::span<const double> x, std::span<const double> y) const;
    /// g(x, y) as an n x m matrix. Same error contract as eval_drift.
    Matrix eval_diffusion(std::span<const double> x, std::span<const double> y) const;
    /// xi(u) for u in [-tau, 0].
    Vector eval_initial(double u) const;

    // Unchecked hot-path variants; caller guarantees sizes.
    void drift_into(std::span<const double> x, std::span<const double> y, std::span<double> out) const {
        drift_(x, y, out);
    }
    void diffusion_into(std::span<const double> x, std::span<const double> y, std::span<double> out) const {
        diffusion_(x, y, out);
    }

    /// Same problem with a different initial segment.
    SddeProblem with_initial(InitialSegment initial) const;

private:
    void check_dims(std::span<const double> x, std::span<const double> y) const;

    std::string name_;
    std::size_t dim_;
    std::size_t noise_dim_;
    double tau_;
    CoefficientFn drift_;
    CoefficientFn diffusion_;
    InitialSegment initial_;
    bool origin_fixed_;
    std::vector<std::string> warnings_;
};

/// Largest sampled |xi(u) - xi(v)| / |u - v|^gamma over a uniform grid of `points` on [-tau, 0].
double sampled_holder_quotient(const InitialSegment& segment, double tau, double gamma, std::size_t points);

/// U(x, xbar) in the one-sided monotonicity condition.
using UFunction = std::function<double(std::span<const double> x, std::span<const double> xbar)>;

/// Constants known to be valid for a registry problem.
struct KnownConstants {
    std::optional<double> rho;
    std::optional<double> h3;
    std::optional<double> p;
    std::optional<double> q;
};

struct ProblemRegistryEntry {
    std::string key;
    SddeProblem problem;
    KnownConstants known_constants;
    std::optional<UFunction> u_function;
};

using ParamMap = std::map<std::string, double>;

enum class InitialKind { constant, linear, zero };

struct InitialSpec {
    InitialKind kind = InitialKind::constant;
    double value = 1.0;  // each component of c
};

/// Builtin test problems:
///   paper-example-2d    two-dimensional SDDE with superlinear drift and diffusion, m = 1
///   linear-scalar       dx = (a x + b x(t-tau)) dt + (c x + d x(t-tau)) dW
///   superlinear-blowup  dx = (x(t-tau) - x^3) dt + x^2 dW
namespace registry {

std::vector<std::string> keys();
bool contains(const std::string& key);

/// Parameters not used by the problem are rejected. Recognised: tau for all; a, b, c, d for linear-scalar.
ProblemRegistryEntry make(const std::string& key, const ParamMap& params = {},
                          std::optional<InitialSpec> initial = std::nullopt);

InitialSegment make_initial(const InitialSpec& spec, std::size_t dim);

/// Hand-derived bounds a_1..a_10 for paper-example-2d at moment orders (p, q). Each sup over
/// u >= 0 is found by grid search plus golden-section refinement; a[0] is unused.
///   x.f + (p-1)/2 |g|^2 <= a_2 (1 + |y|^2)
///   monotonicity holds with H1 = a_5 and the registry U
///   |f - fbar|^2 <= a_7 (...), |g - gbar|^2 <= a_10 (...) in the growth condition with rho = 4
std::array<double, 11> paper_example_bounds(double p, double q);

}  // namespace registry

}  // namespace sdde
