#include <doctest.h>

#include <cmath>

#include "sdde/conditions.hpp"
#include "sdde/errors.hpp"
#include "sdde/model.hpp"

using namespace sdde;

namespace {

SddeProblem scalar(const std::string& name, std::function<double(double, double)> f,
                   std::function<double(double, double)> g, InitialSegment init = InitialSegment::zero(1)) {
    CoefficientFn drift = [f](std::span<const double> x, std::span<const double> y, std::span<double> out) {
        out[0] = f(x[0], y[0]);
    };
    CoefficientFn diffusion = [g](std::span<const double> x, std::span<const double> y, std::span<double> out) {
        out[0] = g(x[0], y[0]);
    };
    return SddeProblem(name, 1, 1, 1.0, drift, diffusion, init, f(0, 0) == 0.0 && g(0, 0) == 0.0);
}

const auto zero_fn = [](double, double) { return 0.0; };

SampleSpec small(std::size_t n = 5000, std::uint64_t seed = 1) {
    SampleSpec s;
    s.n_samples = n;
    s.seed = seed;
    return s;
}

}  // namespace

TEST_CASE("Khasminskii") {
    const auto damped = scalar("damped", [](double x, double) { return -x; }, zero_fn);
    const auto r1 = check_khasminskii(damped, 3.0, small());
    CHECK(r1.estimated_constant <= 1e-12);
    CHECK(r1.verdict == Verdict::consistent);

    const auto cubic = scalar("cubic", [](double x, double) { return x * x * x; }, zero_fn);
    const auto r2 = check_khasminskii(cubic, 3.0, small());
    CHECK(r2.verdict == Verdict::violated);
    CHECK(r2.max_violation_point.has_value());

    const auto entry = registry::make("paper-example-2d");
    const double p = *entry.known_constants.p;
    const auto r3 = check_khasminskii(entry.problem, p, small(20000, 7));
    CHECK(r3.verdict == Verdict::consistent);
    CHECK(r3.estimated_constant <= registry::paper_example_bounds(p, *entry.known_constants.q)[2]);

    CHECK_THROWS_AS(check_khasminskii(damped, 2.0), ArgumentError);
}

TEST_CASE("polynomial growth") {
    const auto constant = scalar("const", [](double, double) { return 2.0; }, [](double, double) { return 0.5; });
    const auto r0 = check_polynomial_growth(constant, 2.0, small());
    CHECK(r0.estimated_constant == 0.0);
    CHECK(r0.verdict == Verdict::consistent);
    CHECK(*r0.derived_h3 == doctest::Approx(2.5));

    const auto entry = registry::make("paper-example-2d");
    const auto bounds = registry::paper_example_bounds(*entry.known_constants.p, *entry.known_constants.q);
    const auto r4 = check_polynomial_growth(entry.problem, 4.0, small(20000, 7));
    CHECK(r4.verdict == Verdict::consistent);
    CHECK(r4.estimated_constant <= std::max(bounds[7], bounds[10]));
    CHECK(*r4.derived_h3 == doctest::Approx(std::sqrt(6.0 * r4.estimated_constant)));

    const auto rlow = check_polynomial_growth(entry.problem, 0.5, small(20000, 7));
    CHECK(rlow.verdict == Verdict::violated);

    CHECK_THROWS_AS(check_polynomial_growth(constant, 0.0), ArgumentError);
}

TEST_CASE("local Lipschitz") {
    const double a = -3.5;
    const auto lin = scalar("lin", [a](double x, double) { return a * x; }, zero_fn);
    const auto r = check_local_lipschitz(lin, 5.0, small(20000));
    CHECK(r.estimated_constant <= std::fabs(a) * (1.0 + 1e-12));
    CHECK(r.estimated_constant >= 0.95 * std::fabs(a));
    CHECK(r.verdict == Verdict::consistent);

    const auto constant = scalar("const", [](double, double) { return 1.0; }, [](double, double) { return -2.0; });
    CHECK(check_local_lipschitz(constant, 5.0, small()).estimated_constant == 0.0);

    const auto paper = registry::make("paper-example-2d").problem;
    double prev = 0.0;
    for (double radius : {0.5, 1.0, 2.0, 5.0, 10.0}) {
        const auto rr = check_local_lipschitz(paper, radius, small(4000, 3));
        CHECK(rr.estimated_constant >= prev);
        CHECK(rr.verdict == Verdict::consistent);
        prev = rr.estimated_constant;
    }

    CHECK_THROWS_AS(check_local_lipschitz(lin, 0.0), ArgumentError);
}

TEST_CASE("Hoelder initial segment") {
    const auto c = check_holder_initial(InitialSegment::constant({1.0, 2.0}), 1.0, small());
    CHECK(c.estimated_constant == 0.0);

    const Vector slope{3.0, 4.0};
    const auto lin = check_holder_initial(InitialSegment::linear(slope), 1.0, small());
    // near pairs carry cancellation error
    CHECK(lin.estimated_constant == doctest::Approx(5.0).epsilon(1e-6));
    CHECK(lin.verdict == Verdict::consistent);

    // Same segment declared 1/2-Hoelder: c d / d^{1/2} peaks at d = 1.
    InitialSegment half(
        2, [](double u, std::span<double> out) { out[0] = 3.0 * (1.0 + u); out[1] = 4.0 * (1.0 + u); }, 0.5, 5.0);
    const auto h = check_holder_initial(half, 1.0, small());
    CHECK(h.estimated_constant == doctest::Approx(5.0).epsilon(1e-6));
    CHECK(*h.max_violation_point == std::vector<double>{-1.0, 0.0});

    // sqrt(1 + u) declared Lipschitz
    InitialSegment root(1, [](double u, std::span<double> out) { out[0] = std::sqrt(1.0 + u); }, 1.0, 1.0);
    CHECK(check_holder_initial(root, 1.0, small(20000)).verdict == Verdict::violated);
}

TEST_CASE("monotonicity with U") {
    const auto damped = scalar("damped", [](double x, double) { return -x; }, zero_fn);
    const UFunction u0 = [](std::span<const double>, std::span<const double>) { return 0.0; };
    const auto r = check_monotonicity_u(damped, 3.0, u0, small());
    CHECK(r.estimated_constant <= 1e-12);

    const auto entry = registry::make("paper-example-2d");
    const double q = *entry.known_constants.q;
    const auto rp = check_monotonicity_u(entry.problem, q, entry.u_function, small(20000, 7));
    CHECK(rp.verdict == Verdict::consistent);
    CHECK(rp.estimated_constant <= registry::paper_example_bounds(*entry.known_constants.p, q)[5]);

    CHECK_THROWS_AS(check_monotonicity_u(damped, 3.0, std::nullopt), ArgumentError);
    CHECK_THROWS_AS(check_monotonicity_u(damped, 2.0, u0), ArgumentError);
}

TEST_CASE("estimates are deterministic and monotone in sample count") {
    const auto entry = registry::make("paper-example-2d");
    double prev_k = -HUGE_VAL, prev_h = -HUGE_VAL, prev_l = -HUGE_VAL;
    for (std::size_t n : {100u, 1000u, 5000u}) {
        const auto spec = small(n, 5);
        const double k = check_khasminskii(entry.problem, 10.0, spec).estimated_constant;
        const double h = check_polynomial_growth(entry.problem, 4.0, spec).estimated_constant;
        const double l = check_local_lipschitz(entry.problem, 3.0, spec).estimated_constant;
        CHECK(k >= prev_k);
        CHECK(h >= prev_h);
        CHECK(l >= prev_l);
        prev_k = k;
        prev_h = h;
        prev_l = l;
        CHECK(check_khasminskii(entry.problem, 10.0, spec).estimated_constant == k);
        CHECK(check_polynomial_growth(entry.problem, 4.0, spec).estimated_constant == h);
    }
    CHECK(check_khasminskii(entry.problem, 10.0, small(1000, 6)).estimated_constant !=
          check_khasminskii(entry.problem, 10.0, small(1000, 5)).estimated_constant);
}

TEST_CASE("H3 estimate") {
    // |f| = 2|x|^2 on a quadratic problem: sup |f| / u^2 = 2, doubled.
    const auto quad = scalar("quad", [](double x, double) { return 2.0 * x * x; }, zero_fn);
    const double h3 = estimate_h3(quad, 2.0, small());
    CHECK(h3 <= 4.0 * (1.0 + 1e-12));
    CHECK(h3 >= 3.9);
    const auto zero = scalar("zero", zero_fn, zero_fn);
    CHECK(estimate_h3(zero, 2.0, small()) == 1.0);
}
