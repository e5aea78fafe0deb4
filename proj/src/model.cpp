#include "sdde/model.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <sstream>

#include "sdde/errors.hpp"

namespace sdde {

namespace {

bool all_finite(std::span<const double> v) {
    return std::all_of(v.begin(), v.end(), [](double c) { return std::isfinite(c); });
}

std::vector<double> concat(std::span<const double> x, std::span<const double> y) {
    std::vector<double> out(x.begin(), x.end());
    out.insert(out.end(), y.begin(), y.end());
    return out;
}

}  // namespace

InitialSegment::InitialSegment(std::size_t dim, ValueFn values_on, double holder_exponent,
                               double holder_constant)
    : dim_(dim),
      values_on_(std::move(values_on)),
      holder_exponent_(holder_exponent),
      holder_constant_(holder_constant) {
    if (dim_ == 0) throw ArgumentError("initial segment dimension must be >= 1");
    if (!values_on_) throw ArgumentError("initial segment needs a value function");
    if (!(holder_exponent_ > 0.0 && holder_exponent_ <= 1.0))
        throw ArgumentError("holder exponent must lie in (0, 1]");
    if (!(holder_constant_ >= 0.0)) throw ArgumentError("holder constant must be nonnegative");
}

InitialSegment InitialSegment::constant(Vector c) {
    const std::size_t n = c.size();
    return InitialSegment(
        n, [c = std::move(c)](double, std::span<double> out) { std::copy(c.begin(), c.end(), out.begin()); },
        1.0, 0.0);
}

InitialSegment InitialSegment::linear(Vector c) {
    const std::size_t n = c.size();
    const double slope = norm(c);
    return InitialSegment(
        n,
        [c = std::move(c)](double u, std::span<double> out) {
            for (std::size_t i = 0; i < c.size(); ++i) out[i] = (1.0 + u) * c[i];
        },
        1.0, slope);
}

Vector InitialSegment::value(double u) const {
    Vector out(dim_);
    values_on_(u, out);
    return out;
}

double sampled_holder_quotient(const InitialSegment& segment, double tau, double gamma, std::size_t points) {
    if (points < 2) return 0.0;
    std::vector<Vector> values(points);
    std::vector<double> grid(points);
    for (std::size_t i = 0; i < points; ++i) {
        grid[i] = -tau + tau * static_cast<double>(i) / static_cast<double>(points - 1);
        values[i] = segment.value(grid[i]);
    }
    double worst = 0.0;
    for (std::size_t i = 0; i < points; ++i)
        for (std::size_t j = i + 1; j < points; ++j) {
            const double d = std::sqrt(distance_sq(values[i], values[j]));
            worst = std::max(worst, d / std::pow(grid[j] - grid[i], gamma));
        }
    return worst;
}

SddeProblem::SddeProblem(std::string name, std::size_t dim, std::size_t noise_dim, double tau,
                         CoefficientFn drift, CoefficientFn diffusion, InitialSegment initial,
                         bool origin_fixed)
    : name_(std::move(name)),
      dim_(dim),
      noise_dim_(noise_dim),
      tau_(tau),
      drift_(std::move(drift)),
      diffusion_(std::move(diffusion)),
      initial_(std::move(initial)),
      origin_fixed_(origin_fixed) {
    if (dim_ == 0) throw ArgumentError("dim must be >= 1");
    if (noise_dim_ == 0) throw ArgumentError("noise_dim must be >= 1");
    if (!(tau_ > 0.0) || !std::isfinite(tau_)) throw ArgumentError("tau must be positive and finite");
    if (!drift_ || !diffusion_) throw ArgumentError("drift and diffusion must be set");
    if (initial_.dim() != dim_) throw ArgumentError("initial segment dimension does not match problem");

    if (origin_fixed_) {
        const Vector zero(dim_, 0.0);
        const Vector f0 = eval_drift(zero, zero);
        const Matrix g0 = eval_diffusion(zero, zero);
        if (norm(f0) != 0.0 || norm(g0) != 0.0)
            throw ArgumentError("origin_fixed declared but f(0,0) or g(0,0) is nonzero");
    }

    // Spot check of the declared Hoelder bound; violation is a warning only.
    const double quotient = sampled_holder_quotient(initial_, tau_, initial_.holder_exponent(), 1000);
    if (!std::isfinite(quotient)) {
        warnings_.push_back("initial segment is not finite on the sampled grid");
    } else if (quotient > initial_.holder_constant() * (1.0 + 1e-9) + 1e-12) {
        std::ostringstream msg;
        msg << "initial segment Hoelder quotient " << quotient << " exceeds declared constant "
            << initial_.holder_constant();
        warnings_.push_back(msg.str());
    }
}

void SddeProblem::check_dims(std::span<const double> x, std::span<const double> y) const {
    if (x.size() != dim_ || y.size() != dim_) {
        std::ostringstream msg;
        msg << "expected state dimension " << dim_ << ", got x:" << x.size() << " y:" << y.size();
        throw ArgumentError(msg.str());
    }
}

Vector SddeProblem::eval_drift(std::span<const double> x, std::span<const double> y) const {
    check_dims(x, y);
    Vector out(dim_, 0.0);
    drift_(x, y, out);
    if (!all_finite(out)) throw NumericRangeError("drift evaluation is not finite", concat(x, y));
    return out;
}

Matrix SddeProblem::eval_diffusion(std::span<const double> x, std::span<const double> y) const {
    check_dims(x, y);
    Matrix out(dim_, noise_dim_);
    diffusion_(x, y, out.data);
    if (!all_finite(out.data)) throw NumericRangeError("diffusion evaluation is not finite", concat(x, y));
    return out;
}

Vector SddeProblem::eval_initial(double u) const {
    if (!(u >= -tau_ && u <= 0.0)) {
        std::ostringstream msg;
        msg << "initial segment queried at u=" << u << " outside [" << -tau_ << ", 0]";
        throw ArgumentError(msg.str());
    }
    return initial_.value(u);
}

SddeProblem SddeProblem::with_initial(InitialSegment initial) const {
    return SddeProblem(name_, dim_, noise_dim_, tau_, drift_, diffusion_, std::move(initial), origin_fixed_);
}

namespace registry {

namespace {

constexpr const char* kPaperExample = "paper-example-2d";
constexpr const char* kLinearScalar = "linear-scalar";
constexpr const char* kSuperlinear = "superlinear-blowup";

double param_or(const ParamMap& params, const std::string& key, double fallback) {
    auto it = params.find(key);
    return it == params.end() ? fallback : it->second;
}

void reject_unknown(const ParamMap& params, std::initializer_list<const char*> allowed, const std::string& key) {
    for (const auto& [name, value] : params) {
        const bool ok = std::any_of(allowed.begin(), allowed.end(), [&](const char* a) { return name == a; });
        if (!ok) throw ArgumentError("problem '" + key + "' has no parameter '" + name + "'");
    }
}

ProblemRegistryEntry paper_example(const ParamMap& params, const std::optional<InitialSpec>& initial) {
    reject_unknown(params, {"tau"}, kPaperExample);
    const double tau = param_or(params, "tau", 1.0);

    CoefficientFn drift = [](std::span<const double> x, std::span<const double> y, std::span<double> out) {
        out[0] = abs_pow(y[1], 4.0 / 3.0) - x[0] * x[0] * x[0];
        out[1] = abs_pow(y[0], 4.0 / 3.0) - x[1] * x[1] * x[1];
    };
    // One scalar Brownian motion drives both components.
    CoefficientFn diffusion = [](std::span<const double> x, std::span<const double> y, std::span<double> out) {
        out[0] = abs_pow(x[0], 1.5) + y[1];
        out[1] = abs_pow(x[1], 1.5) + y[0];
    };
    InitialSegment segment = initial ? make_initial(*initial, 2) : InitialSegment::linear({1.0, 1.0});

    // |f|, |g| <= 2 u^3 for |x| v |y| <= u, u >= 1, by termwise bounds; rho = 4 from the growth condition.
    KnownConstants known{.rho = 4.0, .h3 = 2.0, .p = 10.0, .q = 3.0};

    UFunction u_fn = [](std::span<const double> x, std::span<const double> xb) {
        double s = 0.0;
        for (std::size_t i = 0; i < x.size(); ++i) {
            const double d = x[i] - xb[i];
            s += d * d * (x[i] * x[i] + xb[i] * xb[i]);
        }
        return 0.25 * s;
    };

    return {kPaperExample,
            SddeProblem(kPaperExample, 2, 1, tau, std::move(drift), std::move(diffusion), std::move(segment), true),
            known, std::move(u_fn)};
}

ProblemRegistryEntry linear_scalar(const ParamMap& params, const std::optional<InitialSpec>& initial) {
    reject_unknown(params, {"tau", "a", "b", "c", "d"}, kLinearScalar);
    const double tau = param_or(params, "tau", 1.0);
    const double a = param_or(params, "a", -2.0);
    const double b = param_or(params, "b", 0.0);
    const double c = param_or(params, "c", 0.0);
    const double d = param_or(params, "d", 0.0);

    CoefficientFn drift = [a, b](std::span<const double> x, std::span<const double> y, std::span<double> out) {
        out[0] = a * x[0] + b * y[0];
    };
    CoefficientFn diffusion = [c, d](std::span<const double> x, std::span<const double> y,
                                     std::span<double> out) { out[0] = c * x[0] + d * y[0]; };
    InitialSegment segment = initial ? make_initial(*initial, 1) : InitialSegment::constant({1.0});

    // Linear growth is dominated by H3 u^{3/2} for u >= 1 with H3 the larger coefficient sum.
    double h3 = std::max(std::fabs(a) + std::fabs(b), std::fabs(c) + std::fabs(d));
    if (h3 == 0.0) h3 = 1.0;
    KnownConstants known{.rho = 1.0, .h3 = h3, .p = 4.0, .q = 2.5};

    UFunction u_fn = [](std::span<const double>, std::span<const double>) { return 0.0; };

    return {kLinearScalar,
            SddeProblem(kLinearScalar, 1, 1, tau, std::move(drift), std::move(diffusion), std::move(segment), true),
            known, std::move(u_fn)};
}

ProblemRegistryEntry superlinear(const ParamMap& params, const std::optional<InitialSpec>& initial) {
    reject_unknown(params, {"tau"}, kSuperlinear);
    const double tau = param_or(params, "tau", 1.0);

    CoefficientFn drift = [](std::span<const double> x, std::span<const double> y, std::span<double> out) {
        out[0] = y[0] - x[0] * x[0] * x[0];
    };
    CoefficientFn diffusion = [](std::span<const double> x, std::span<const double>, std::span<double> out) {
        out[0] = x[0] * x[0];
    };
    InitialSegment segment = initial ? make_initial(*initial, 1) : InitialSegment::constant({8.0});

    // |f| <= |y| + |x|^3 <= 2u^3 and |g| = x^2 <= u^3 for u >= 1. The Khasminskii condition holds only for p < 3.
    KnownConstants known{.rho = 4.0, .h3 = 2.0, .p = 2.5, .q = std::nullopt};

    return {kSuperlinear,
            SddeProblem(kSuperlinear, 1, 1, tau, std::move(drift), std::move(diffusion), std::move(segment), true),
            known, std::nullopt};
}

}  // namespace

std::vector<std::string> keys() { return {kPaperExample, kLinearScalar, kSuperlinear}; }

bool contains(const std::string& key) {
    const auto all = keys();
    return std::find(all.begin(), all.end(), key) != all.end();
}

InitialSegment make_initial(const InitialSpec& spec, std::size_t dim) {
    switch (spec.kind) {
        case InitialKind::constant: return InitialSegment::constant(Vector(dim, spec.value));
        case InitialKind::linear: return InitialSegment::linear(Vector(dim, spec.value));
        case InitialKind::zero: return InitialSegment::zero(dim);
    }
    throw ArgumentError("unknown initial segment kind");
}

ProblemRegistryEntry make(const std::string& key, const ParamMap& params, std::optional<InitialSpec> initial) {
    if (key == kPaperExample) return paper_example(params, initial);
    if (key == kLinearScalar) return linear_scalar(params, initial);
    if (key == kSuperlinear) return superlinear(params, initial);
    throw ArgumentError("unknown problem key '" + key + "'");
}

namespace {

/// sup of a unimodal fn on [0, hi].
double sup_on(const std::function<double(double)>& fn, double hi) {
    constexpr int kGrid = 1 << 16;
    int best = 0;
    for (int i = 1; i <= kGrid; ++i)
        if (fn(hi * i / kGrid) > fn(hi * best / kGrid)) best = i;
    double lo = hi * std::max(best - 1, 0) / kGrid, up = hi * std::min(best + 1, kGrid) / kGrid;
    const double phi = (std::sqrt(5.0) - 1.0) / 2.0;
    for (int it = 0; it < 100; ++it) {
        const double a = up - phi * (up - lo), b = lo + phi * (up - lo);
        if (fn(a) < fn(b)) lo = a;
        else up = b;
    }
    return std::max(fn(0.5 * (lo + up)), fn(hi * best / kGrid));
}

}  // namespace

std::array<double, 11> paper_example_bounds(double p, double q) {
    if (!(p > 0.0) || !(q > 1.0)) throw ArgumentError("paper_example_bounds needs p > 0 and q > 1");
    std::array<double, 11> a{};
    a[1] = sup_on([p](double u) { return -u * u * u * u + p * u * u * u; }, 2.0 * p);
    a[2] = std::max(2.0 * a[1], p);
    a[3] = sup_on([](double u) { return 8.0 * std::cbrt(u * u) - 0.5 * u * u; }, 64.0);
    a[4] = sup_on([q](double u) { return 9.0 * (q - 1.0) * u - 0.5 * u * u; }, 20.0 * (q - 1.0));
    a[5] = std::max({1.0, a[3], a[4], q - 1.0});
    a[6] = sup_on([](double u) { return std::cbrt(u * u) - u * u * u * u; }, 2.0);
    a[7] = std::max(128.0 / p * a[6], 36.0);
    a[8] = sup_on([](double u) { return u - u * u * u * u; }, 2.0);
    a[9] = std::max(8.0 * a[8], 4.0);
    a[10] = std::max(2.0 * a[9], 4.0);
    return a;
}

}  // namespace registry

}  // namespace sdde
