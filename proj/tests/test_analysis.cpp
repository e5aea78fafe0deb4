#include <doctest.h>

#include <cmath>
#include <numeric>

#include "sdde/analysis.hpp"
#include "sdde/errors.hpp"
#include "sdde/model.hpp"
#include "sdde/noise.hpp"

using namespace sdde;

namespace {

SddeProblem linear(double a, double b, double c, double d, InitialSpec init = {InitialKind::constant, 1.0}) {
    return registry::make("linear-scalar", {{"a", a}, {"b", b}, {"c", c}, {"d", d}}, init).problem;
}

/// An ensemble whose states are filled in by hand: M = 1, horizon 1, so k = -1, 0, 1.
TrajectoryEnsemble synthetic(const std::vector<double>& final_states) {
    const TruncationPolicy pol(1.0, 2.0, 1.0, 0.25);
    const SchemeRun run(linear(0, 0, 0, 0), pol, 1, 1.0);
    TrajectoryEnsemble ens(run, {1.0, 1, 1, 0}, final_states.size(), 0, 1);
    for (std::size_t i = 0; i < final_states.size(); ++i) {
        ens.mutable_slot(i, ens.slot_of(-1))[0] = 1.0;
        ens.mutable_slot(i, ens.slot_of(0))[0] = 1.0;
        ens.mutable_slot(i, ens.slot_of(1))[0] = final_states[i];
    }
    return ens;
}

MomentSeries series(std::vector<double> times, std::vector<double> values) {
    MomentSeries s;
    s.times = std::move(times);
    s.values = std::move(values);
    s.std_errors.assign(s.values.size(), 0.0);
    return s;
}

}  // namespace

TEST_CASE("moment estimates") {
    const std::vector<double> t1{1.0};

    SUBCASE("zero paths") {
        const auto m = estimate_moment(synthetic({0.0, 0.0, 0.0}), 2.0, t1);
        CHECK(m.values == std::vector<double>{0.0});
        CHECK(m.std_errors == std::vector<double>{0.0});
    }
    SUBCASE("single path") {
        const auto m = estimate_moment(synthetic({-1.7}), 3.0, t1);
        CHECK(m.values[0] == doctest::Approx(std::pow(1.7, 3.0)).epsilon(1e-14));
        CHECK(m.n_used == 1);
    }
    SUBCASE("standard normal states") {
        const std::size_t n = 100000;
        const BrownianLattice lat(1.0, n, 1, 77, 0);
        std::vector<double> xs(n);
        for (std::size_t i = 0; i < n; ++i) xs[i] = lat.increment(i)[0];
        const auto m = estimate_moment(synthetic(xs), 2.0, t1);
        CHECK(m.values[0] == doctest::Approx(1.0).epsilon(0.02));
        // se of a chi-square(1) mean
        CHECK(m.std_errors[0] == doctest::Approx(std::sqrt(2.0 / n)).epsilon(0.1));
    }
    SUBCASE("concatenation is the weighted mean") {
        const std::vector<double> a{0.5, -1.25, 2.0, 0.75}, b{3.0, -0.25, 1.5};
        std::vector<double> ab = a;
        ab.insert(ab.end(), b.begin(), b.end());
        const double ma = estimate_moment(synthetic(a), 2.0, t1).values[0];
        const double mb = estimate_moment(synthetic(b), 2.0, t1).values[0];
        const double mab = estimate_moment(synthetic(ab), 2.0, t1).values[0];
        CHECK(mab == doctest::Approx((4.0 * ma + 3.0 * mb) / 7.0).epsilon(1e-15));
    }
    SUBCASE("errors") {
        CHECK_THROWS_AS(estimate_moment(synthetic({1.0}), 0.0, t1), ArgumentError);
        CHECK_THROWS_AS(estimate_moment(synthetic({1.0}), 2.0, std::vector<double>{2.0}), ArgumentError);
    }
}

TEST_CASE("flagged paths are excluded and reported") {
    const auto p = registry::make("superlinear-blowup", {}, InitialSpec{InitialKind::constant, 8.0}).problem;
    const SchemeRun run(p, std::nullopt, 64, 2.0, Variant::classical);
    const auto ens = simulate(run, {run.delta(), 128, 1, 7}, 200);
    REQUIRE(ens.flagged_fraction() > 0.0);
    const auto times = sample_times(ens, 0.25);
    const auto m = estimate_moment(ens, 2.0, times);
    CHECK(m.flagged_fraction == ens.flagged_fraction());
    CHECK(m.n_used + static_cast<std::size_t>(std::llround(m.flagged_fraction * 200)) == 200);
    for (double v : m.values) CHECK(std::isfinite(v));
}

TEST_CASE("fit_decay") {
    std::vector<double> ts, vs;
    for (int i = 0; i <= 20; ++i) {
        ts.push_back(0.25 * i);
        vs.push_back(std::exp(-2.0 * 0.25 * i));
    }
    const auto s = series(ts, vs);
    const auto fit = fit_decay(s, {0.0, 5.0});
    CHECK(fit.lambda_hat == doctest::Approx(2.0).epsilon(1e-12));
    CHECK(fit.log_m_hat == doctest::Approx(0.0).scale(1.0).epsilon(1e-12));
    CHECK(fit.r_squared == doctest::Approx(1.0));
    CHECK(fit.points == 21);

    const auto flat = fit_decay(series(ts, std::vector<double>(ts.size(), 3.0)), {0.0, 5.0});
    CHECK(flat.lambda_hat == 0.0);

    SUBCASE("scale equivariance") {
        std::vector<double> noisy;
        for (std::size_t i = 0; i < ts.size(); ++i) noisy.push_back(vs[i] * (1.0 + 0.1 * std::sin(7.0 * ts[i])));
        const auto base = fit_decay(series(ts, noisy), {1.0, 5.0});
        for (double c : {1e-3, 0.5, 7.0, 1e6}) {
            std::vector<double> scaled;
            for (double v : noisy) scaled.push_back(c * v);
            const auto f = fit_decay(series(ts, scaled), {1.0, 5.0});
            CHECK(f.lambda_hat == doctest::Approx(base.lambda_hat).epsilon(1e-12));
            CHECK(f.log_m_hat - base.log_m_hat == doctest::Approx(std::log(c)).epsilon(1e-10));
        }
    }
    SUBCASE("errors") {
        auto bad = vs;
        bad[10] = 0.0;
        try {
            (void)fit_decay(series(ts, bad), {0.0, 5.0});
            FAIL("expected ArgumentError");
        } catch (const ArgumentError& e) {
            CHECK(std::string(e.what()).find("t=2.5") != std::string::npos);
        }
        CHECK_NOTHROW(fit_decay(series(ts, bad), {3.0, 5.0}));
        CHECK_THROWS_AS(fit_decay(s, {4.1, 5.0}), ArgumentError);  // 4 points
    }
}

TEST_CASE("second moment decay of a linear equation") {
    // dx = -2x dt: E|x|^2 = e^{-4t}
    const auto p = linear(-2.0, 0.0, 0.0, 0.0);
    const TruncationPolicy pol(1.0, 2.0, 100.0, 0.25);
    const SchemeRun run(p, pol, 1024, 2.0);
    StabilityOptions opt;
    opt.window = DecayWindow{0.5, 2.0};
    const auto res = stability_experiment(run, {run.delta(), 2048, 1, 3}, 10000, 2.0, opt);
    REQUIRE(res.fit);
    CHECK(std::fabs(res.fit->lambda_hat - 4.0) <= 0.3);
}

TEST_CASE("transfer constants") {
    SUBCASE("worked example") {
        const auto tc = transfer_constants(TransferDirection::sdde_to_scheme, 1.0, 4.0, 2.0, 1.0, 1.0);
        CHECK(std::floor(4.0 * std::log(16.0)) == 11.0);
        CHECK(tc.window_t == 20.0);
        CHECK(tc.output_rate == 0.5);
        CHECK(tc.output_growth == doctest::Approx(704846.905433815).epsilon(1e-12));
    }
    SUBCASE("floor term vanishes") {
        // 4 ln(2^p) / (rate tau) < 1 for p = 0.1, rate = 1
        CHECK(transfer_window(1.0, 1.0, 0.1, 2.0) == 18.0);
    }
    SUBCASE("monotone in growth") {
        double prev = transfer_window(0.7, 1.0, 3.0, 0.5);
        for (double g = 2.0; g < 1e6; g *= 2.0) {
            const double t = transfer_window(0.7, g, 3.0, 0.5);
            CHECK(t >= prev);
            const double steps = (t - prev) / 0.5;
            CHECK(steps == std::round(steps));
            prev = t;
        }
    }
    SUBCASE("round trip") {
        const double rate = 0.8, growth = 3.0, p = 2.5, tau = 0.5, cs = 1.5;
        const auto a = transfer_constants(TransferDirection::sdde_to_scheme, rate, growth, p, tau, cs);
        const auto b = transfer_constants(TransferDirection::scheme_to_sdde, a.output_rate, a.output_growth, p, tau, cs);
        CHECK(b.output_rate == rate / 4.0);
        const double t1 = tau * (9.0 + std::floor(4.0 * std::log(std::pow(2.0, p) * growth) / (rate * tau)));
        const double h = std::pow(2.0, p + 1.0) * growth * cs * std::exp(rate * t1 / 2.0);
        const double t2 = tau * (9.0 + std::floor(4.0 * std::log(std::pow(2.0, p) * h) / (rate / 2.0 * tau)));
        const double m = std::pow(2.0, p + 1.0) * h * cs * std::exp(rate / 2.0 * t2 / 2.0);
        CHECK(a.window_t == t1);
        CHECK(b.window_t == t2);
        CHECK(b.output_growth == m);
    }
    SUBCASE("errors") {
        CHECK_THROWS_AS(transfer_constants(TransferDirection::sdde_to_scheme, 0.0, 4.0, 2.0, 1.0, 1.0), ArgumentError);
        CHECK_THROWS_AS(transfer_constants(TransferDirection::sdde_to_scheme, 1.0, 0.5, 2.0, 1.0, 1.0), ArgumentError);
        CHECK_THROWS_AS(transfer_constants(TransferDirection::sdde_to_scheme, 1.0, 4.0, 0.0, 1.0, 1.0), ArgumentError);
        CHECK_THROWS_AS(transfer_constants(TransferDirection::sdde_to_scheme, 1.0, 4.0, 2.0, -1.0, 1.0), ArgumentError);
        CHECK_THROWS_AS(transfer_constants(TransferDirection::sdde_to_scheme, 1.0, 4.0, 2.0, 1.0, 0.5), ArgumentError);
    }
}

TEST_CASE("transfer condition") {
    CHECK(check_transfer_condition(1.0, 0.0, 2.0, 1e-3, 1.0, 60.0, 1.0));
    CHECK_FALSE(check_transfer_condition(1.0, 1e6, 2.0, 1e-3, 1.0, 60.0, 1.0));
    CHECK_THROWS_AS(check_transfer_condition(1.0, 0.0, 2.0, 1.0, 1.0, 2.0, 1.0), ArgumentError);

    // Boundary: with alpha = 0 and C = 0 the condition reads 2^p H e^{-g(T-2tau)} <= e^{-gT/2}.
    // Solve for H and walk one ulp either way.
    const double p = 1.0, rate = 0.5, t = 10.0, tau = 1.0;
    double h = std::exp(-rate * t / 2.0) / (std::pow(2.0, p) * std::exp(-rate * (t - 2.0 * tau)));
    while (!check_transfer_condition(0.0, 0.0, p, h, rate, t, tau)) h = std::nextafter(h, 0.0);
    while (check_transfer_condition(0.0, 0.0, p, std::nextafter(h, HUGE_VAL), rate, t, tau))
        h = std::nextafter(h, HUGE_VAL);
    const double lhs = std::pow(2.0, p) * h * std::exp(-rate * (t - 2.0 * tau));
    const double rhs = std::exp(-rate * t / 2.0);
    CHECK(lhs <= rhs);
    CHECK(check_transfer_condition(0.0, 0.0, p, h, rate, t, tau));
    CHECK_FALSE(check_transfer_condition(0.0, 0.0, p, std::nextafter(h, HUGE_VAL), rate, t, tau));
}

TEST_CASE("strong error") {
    const auto p = registry::make("paper-example-2d").problem;
    const TruncationPolicy pol(2.0, 4.0, 10.0, 0.25);

    SUBCASE("reference only") {
        StrongErrorSpec spec;
        spec.m_subs = {64};
        spec.reference_m_sub = 64;
        spec.n_paths = 20;
        spec.seed = 3;
        const auto rep = strong_error(p, pol, spec);
        REQUIRE(rep.errors.size() == 1);
        CHECK(rep.errors[0] == 0.0);
        CHECK_FALSE(rep.fitted);
    }
    SUBCASE("drift only linear has order one") {
        const auto det = linear(-1.0, 0.5, 0.0, 0.0);
        StrongErrorSpec spec;
        spec.m_subs = {64, 16, 32, 8};
        spec.reference_m_sub = 4096;
        spec.n_paths = 4;
        const auto rep = strong_error(det, TruncationPolicy(1.5, 2.0, 100.0, 0.25), spec);
        REQUIRE(rep.fitted);
        CHECK(rep.deltas == std::vector<double>{1.0 / 8, 1.0 / 16, 1.0 / 32, 1.0 / 64});
        CHECK(rep.rms_order >= 0.9);
        CHECK(rep.rms_order <= 1.1);
    }
    SUBCASE("errors") {
        StrongErrorSpec spec;
        spec.m_subs = {48};
        spec.reference_m_sub = 64;
        CHECK_THROWS_AS(strong_error(p, pol, spec), ArgumentError);
        spec.m_subs = {};
        CHECK_THROWS_AS(strong_error(p, pol, spec), ArgumentError);
        spec.m_subs = {16};
        spec.q_bar = 1.0;
        CHECK_THROWS_AS(strong_error(p, pol, spec), ArgumentError);
    }
}

TEST_CASE("interpolation gap shrinks with the step") {
    const auto p = registry::make("paper-example-2d").problem;
    const TruncationPolicy pol(2.0, 4.0, 100.0, 0.25);
    const std::vector<std::size_t> ms{16, 64, 256};
    const auto rep = interpolation_gap(p, pol, ms, 512, 200, 1.0, 2);
    REQUIRE(rep.max_gap.size() == 3);
    CHECK(rep.max_gap[0] > rep.max_gap[1]);
    CHECK(rep.max_gap[1] > rep.max_gap[2]);
    CHECK(rep.slope > 0.35);
    CHECK_THROWS_AS(interpolation_gap(p, pol, std::vector<std::size_t>{512}, 512, 10, 1.0, 2), ArgumentError);
}

TEST_CASE("equivalence experiment") {
    const TruncationPolicy pol(1.5, 2.0, 100.0, 0.25);
    StabilityOptions opt;
    opt.window = DecayWindow{5.0, 20.0};

    SUBCASE("stable") {
        const auto rep = equivalence_experiment(linear(-2.0, 0.25, 0.0, 0.25), pol, 2.0, 8, 20.0, 2000, 11, 1.0, opt);
        REQUIRE_FALSE(rep.degenerate);
        CHECK(rep.coarse.fit->lambda_hat > 0.0);
        CHECK(rep.reference.fit->lambda_hat > 0.0);
        CHECK(rep.sign_agreement);
        REQUIRE(rep.transfer);
        CHECK(rep.transfer->output_rate == rep.reference.fit->lambda_hat / 2.0);
        CHECK(rep.reference_delta * 8.0 == rep.delta);
    }
    SUBCASE("unstable") {
        const auto rep = equivalence_experiment(linear(1.0, 0.0, 0.0, 0.0), pol, 2.0, 8, 20.0, 50, 11, 1.0, opt);
        REQUIRE_FALSE(rep.degenerate);
        CHECK(rep.coarse.fit->lambda_hat < 0.0);
        CHECK(rep.reference.fit->lambda_hat < 0.0);
        CHECK(rep.sign_agreement);
        CHECK_FALSE(rep.transfer);
    }
    SUBCASE("zero initial data") {
        const auto rep = equivalence_experiment(linear(-2.0, 0.25, 0.0, 0.25, {InitialKind::zero, 0.0}), pol, 2.0, 8,
                                                20.0, 50, 11, 1.0, opt);
        CHECK(rep.degenerate);
        CHECK_FALSE(rep.coarse.fit);
    }
    SUBCASE("origin must be fixed") {
        CoefficientFn f = [](std::span<const double> x, std::span<const double>, std::span<double> out) {
            out[0] = 1.0 - x[0];
        };
        CoefficientFn g = [](std::span<const double>, std::span<const double>, std::span<double> out) { out[0] = 0.0; };
        const SddeProblem shifted("shifted", 1, 1, 1.0, f, g, InitialSegment::zero(1), false);
        CHECK_THROWS_AS(equivalence_experiment(shifted, pol, 2.0, 8, 20.0, 10, 1), ArgumentError);
    }
}
