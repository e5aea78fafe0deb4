#include "sdde/analysis.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>

#include "sdde/errors.hpp"

namespace sdde {

namespace {

struct MeanAndError {
    double mean = 0.0;
    double std_error = 0.0;
};

/// Mean and standard error in the order given.
MeanAndError mean_and_error(std::span<const double> v) {
    if (v.empty()) return {std::nan(""), std::nan("")};
    double sum = 0.0;
    for (double x : v) sum += x;
    const double mean = sum / static_cast<double>(v.size());
    if (v.size() < 2) return {mean, 0.0};
    double ss = 0.0;
    for (double x : v) ss += (x - mean) * (x - mean);
    const double var = ss / static_cast<double>(v.size() - 1);
    return {mean, std::sqrt(var / static_cast<double>(v.size()))};
}

MomentSeries moments_over(const TrajectoryEnsemble& ensemble, double p, std::span<const double> times,
                          std::size_t begin, std::size_t end, FlaggedPolicy flagged) {
    MomentSeries out;
    out.p = p;
    out.times.assign(times.begin(), times.end());
    out.n_paths = end - begin;
    std::size_t n_flagged = 0;
    for (std::size_t path = begin; path < end; ++path)
        if (ensemble.flagged(path)) ++n_flagged;
    out.flagged_fraction = out.n_paths ? static_cast<double>(n_flagged) / static_cast<double>(out.n_paths) : 0.0;
    out.n_used = flagged == FlaggedPolicy::exclude ? out.n_paths - n_flagged : out.n_paths;

    std::vector<double> samples;
    samples.reserve(out.n_used);
    for (double t : times) {
        samples.clear();
        for (std::size_t path = begin; path < end; ++path) {
            if (flagged == FlaggedPolicy::exclude && ensemble.flagged(path)) continue;
            const auto x = step_process_value(ensemble, path, t);
            double s = 0.0;
            for (double c : x) s = s + c * c;
            samples.push_back(pth_power_from_squared(s, p));
        }
        const auto [mean, se] = mean_and_error(samples);
        out.values.push_back(mean);
        out.std_errors.push_back(se);
    }
    return out;
}

}  // namespace

MomentSeries estimate_moment(const TrajectoryEnsemble& ensemble, double p, std::span<const double> times,
                             FlaggedPolicy flagged) {
    if (!(p > 0.0)) throw ArgumentError("moment order p must be positive");
    if (ensemble.n_paths() == 0) throw ArgumentError("cannot estimate moments of an empty ensemble");
    return moments_over(ensemble, p, times, 0, ensemble.n_paths(), flagged);
}

std::vector<double> sample_times(const TrajectoryEnsemble& ensemble, double spacing) {
    const SchemeRun& run = ensemble.run();
    const double ratio = spacing / run.delta();
    const auto every = std::llround(ratio);
    if (every < 1 || std::fabs(static_cast<double>(every) - ratio) > 1e-9 * ratio)
        throw ArgumentError("sample spacing must be a positive multiple of the step size");
    std::vector<double> times;
    for (std::int64_t k = 0; k <= run.steps(); k += every) {
        if (!ensemble.recorded(k)) throw ArgumentError("sample spacing is finer than the recorded grid");
        times.push_back(run.grid_time(k));
    }
    return times;
}

LineFit fit_line(std::span<const double> xs, std::span<const double> ys) {
    if (xs.size() != ys.size() || xs.size() < 2) throw ArgumentError("line fit needs >= 2 paired points");
    const double n = static_cast<double>(xs.size());
    const double mx = std::accumulate(xs.begin(), xs.end(), 0.0) / n;
    const double my = std::accumulate(ys.begin(), ys.end(), 0.0) / n;
    double sxx = 0.0, sxy = 0.0, syy = 0.0;
    for (std::size_t i = 0; i < xs.size(); ++i) {
        const double dx = xs[i] - mx, dy = ys[i] - my;
        sxx += dx * dx;
        sxy += dx * dy;
        syy += dy * dy;
    }
    if (sxx == 0.0) throw ArgumentError("line fit needs distinct abscissae");
    LineFit fit;
    fit.slope = sxy / sxx;
    fit.intercept = my - fit.slope * mx;
    if (syy == 0.0) {
        fit.r_squared = 1.0;
    } else {
        double sse = 0.0;
        for (std::size_t i = 0; i < xs.size(); ++i) {
            const double r = ys[i] - (fit.intercept + fit.slope * xs[i]);
            sse += r * r;
        }
        fit.r_squared = std::clamp(1.0 - sse / syy, 0.0, 1.0);
    }
    return fit;
}

DecayFit fit_decay(const MomentSeries& series, DecayWindow window) {
    std::vector<double> ts, logs;
    const double slack = 1e-12 * std::max(1.0, std::fabs(window.t_hi));
    for (std::size_t i = 0; i < series.times.size(); ++i) {
        const double t = series.times[i];
        if (t < window.t_lo - slack || t > window.t_hi + slack) continue;
        const double v = series.values[i];
        if (!(v > 0.0) || !std::isfinite(v)) {
            std::ostringstream msg;
            msg << "moment value " << v << " at t=" << t << " is not positive; cannot fit log-linear decay";
            throw ArgumentError(msg.str());
        }
        ts.push_back(t);
        logs.push_back(std::log(v));
    }
    if (ts.size() < 5) {
        std::ostringstream msg;
        msg << "decay fit needs >= 5 points in [" << window.t_lo << ", " << window.t_hi << "], found " << ts.size();
        throw ArgumentError(msg.str());
    }
    const LineFit line = fit_line(ts, logs);
    return {-line.slope, line.intercept, line.r_squared, window, ts.size()};
}

double decay_rate_standard_error(const TrajectoryEnsemble& ensemble, double p, std::span<const double> times,
                                 DecayWindow window, std::size_t batches) {
    const std::size_t n = ensemble.n_paths();
    if (batches < 2 || n < batches) return std::nan("");
    std::vector<double> rates;
    for (std::size_t b = 0; b < batches; ++b) {
        const std::size_t begin = b * n / batches, end = (b + 1) * n / batches;
        const MomentSeries part = moments_over(ensemble, p, times, begin, end, FlaggedPolicy::exclude);
        try {
            rates.push_back(fit_decay(part, window).lambda_hat);
        } catch (const ArgumentError&) {
            // batch with a zero or non-finite moment in the window
        }
    }
    if (rates.size() < 2) return std::nan("");
    const auto [mean, se] = mean_and_error(rates);
    (void)mean;
    return se;
}

// ---------------------------------------------------------------------------

double transfer_window(double rate, double growth, double p, double tau) {
    if (!(rate > 0.0)) throw ArgumentError("rate must be positive");
    if (!(growth >= 1.0)) throw ArgumentError("growth constant must be >= 1");
    if (!(p > 0.0)) throw ArgumentError("p must be positive");
    if (!(tau > 0.0)) throw ArgumentError("tau must be positive");
    const double bracket = 4.0 * std::log(std::pow(2.0, p) * growth) / (rate * tau);
    return tau * (9.0 + std::floor(bracket));
}

TransferConstants transfer_constants(TransferDirection direction, double input_rate, double input_growth, double p,
                                     double tau, double c_star) {
    if (!(c_star >= 1.0)) throw ArgumentError("c_star must be >= 1");
    TransferConstants out;
    out.direction = direction;
    out.input_rate = input_rate;
    out.input_growth = input_growth;
    out.p = p;
    out.tau = tau;
    out.c_star = c_star;
    out.window_t = transfer_window(input_rate, input_growth, p, tau);
    out.output_rate = input_rate / 2.0;
    out.output_growth = std::pow(2.0, p + 1.0) * input_growth * c_star * std::exp(input_rate * out.window_t / 2.0);
    return out;
}

bool check_transfer_condition(double c_value, double alpha, double p, double growth, double rate, double window_t,
                              double tau) {
    if (!(c_value >= 0.0) || !(alpha >= 0.0)) throw ArgumentError("C and alpha must be nonnegative");
    if (!(p > 0.0) || !(growth > 0.0) || !(rate > 0.0) || !(tau > 0.0))
        throw ArgumentError("p, growth, rate and tau must be positive");
    if (!(window_t > 2.0 * tau)) throw ArgumentError("window T must exceed 2 tau");
    const double two_p = std::pow(2.0, p);
    const double lhs = two_p * c_value * alpha + two_p * growth * std::exp(-rate * (window_t - 2.0 * tau));
    const double rhs = std::exp(-rate * window_t / 2.0);
    return lhs <= rhs;
}

// ---------------------------------------------------------------------------

ConvergenceReport strong_error(const SddeProblem& problem, const TruncationPolicy& policy,
                               const StrongErrorSpec& spec) {
    if (spec.m_subs.empty()) throw ArgumentError("strong_error needs at least one step size");
    if (spec.reference_m_sub == 0) throw ArgumentError("reference m_sub must be >= 1");
    if (!(spec.q_bar >= 2.0)) throw ArgumentError("q_bar must be >= 2");
    if (spec.n_paths == 0) throw ArgumentError("n_paths must be >= 1");

    std::vector<std::size_t> m_subs = spec.m_subs;
    std::sort(m_subs.begin(), m_subs.end());
    if (std::adjacent_find(m_subs.begin(), m_subs.end()) != m_subs.end())
        throw ArgumentError("step sizes must be distinct");
    for (std::size_t m : m_subs)
        if (m == 0 || spec.reference_m_sub % m != 0) {
            std::ostringstream msg;
            msg << "step size tau/" << m << " is not a multiple of the reference step tau/" << spec.reference_m_sub;
            throw ArgumentError(msg.str());
        }

    const SchemeRun reference(problem, policy, spec.reference_m_sub, spec.horizon);
    LatticeFamily family{reference.delta(), static_cast<std::uint64_t>(std::max<std::int64_t>(reference.steps(), 1)),
                         problem.noise_dim(), spec.seed};
    SimulateOptions options;
    options.threads = spec.threads;
    options.record_stride = spec.reference_m_sub;
    const TrajectoryEnsemble ref = simulate(reference, family, spec.n_paths, options);

    ConvergenceReport report;
    report.q_bar = spec.q_bar;
    report.reference_delta = reference.delta();
    report.n_paths = spec.n_paths;
    report.horizon = spec.horizon;

    std::vector<double> per_path(spec.n_paths);
    for (std::size_t m : m_subs) {
        const SchemeRun coarse(problem, policy, m, spec.horizon);
        options.record_stride = m;
        const TrajectoryEnsemble ens = simulate(coarse, family, spec.n_paths, options);
        for (std::size_t path = 0; path < spec.n_paths; ++path) {
            const auto a = ref.state(path, reference.steps());
            const auto b = ens.state(path, coarse.steps());
            per_path[path] = pth_power_from_squared(distance_sq(a, b), spec.q_bar);
        }
        const auto [mean, se] = mean_and_error(per_path);
        report.deltas.push_back(coarse.delta());
        report.errors.push_back(mean);
        report.std_errors.push_back(se);
    }

    std::vector<double> lx, ly;
    for (std::size_t i = 0; i < report.deltas.size(); ++i)
        if (report.errors[i] > 0.0) {
            lx.push_back(std::log(report.deltas[i]));
            ly.push_back(std::log(report.errors[i]));
        }
    if (lx.size() >= 2) {
        const LineFit line = fit_line(lx, ly);
        report.fitted = true;
        report.fitted_order = line.slope;
        report.rms_order = line.slope / spec.q_bar;
        report.r_squared = line.r_squared;
    }
    return report;
}

InterpolationGapReport interpolation_gap(const SddeProblem& problem, const TruncationPolicy& policy,
                                         std::span<const std::size_t> m_subs, std::size_t master_m_sub,
                                         std::size_t n_paths, double horizon, std::uint64_t seed, unsigned threads) {
    if (m_subs.empty() || n_paths == 0) throw ArgumentError("interpolation_gap needs step sizes and paths");
    const SchemeRun master_run(problem, policy, master_m_sub, horizon);
    const LatticeFamily family{master_run.delta(), static_cast<std::uint64_t>(master_run.steps()),
                               problem.noise_dim(), seed};
    constexpr std::size_t kChunk = 64;

    InterpolationGapReport report;
    for (std::size_t m : m_subs) {
        if (m == 0 || master_m_sub % m != 0 || (master_m_sub / m) % 2 != 0)
            throw ArgumentError("each step size must be an even multiple of the master step");
        const SchemeRun run(problem, policy, m, horizon);
        const auto steps = static_cast<std::size_t>(run.steps());
        std::vector<double> sum(steps, 0.0), sum_sq(steps, 0.0);
        for (std::size_t first = 0; first < n_paths; first += kChunk) {
            const std::size_t count = std::min(kChunk, n_paths - first);
            SimulateOptions options;
            options.first_path_id = first;
            options.threads = threads;
            const TrajectoryEnsemble ens = simulate(run, family, count, options);
            for (std::size_t path = 0; path < count; ++path)
                for (std::size_t k = 0; k < steps; ++k) {
                    const double t = run.grid_time(static_cast<std::int64_t>(k)) + run.delta() / 2.0;
                    const Vector x = interpolant_value(ens, path, t);
                    const double gap = distance_sq(x, ens.state(path, static_cast<std::int64_t>(k)));
                    sum[k] += gap;
                    sum_sq[k] += gap * gap;
                }
        }
        const double n = static_cast<double>(n_paths);
        std::size_t arg = 0;
        for (std::size_t k = 1; k < steps; ++k)
            if (sum[k] > sum[arg]) arg = k;
        const double mean = steps ? sum[arg] / n : 0.0;
        const double var = steps && n_paths > 1 ? std::max(0.0, (sum_sq[arg] - n * mean * mean) / (n - 1.0)) : 0.0;
        report.deltas.push_back(run.delta());
        report.max_gap.push_back(mean);
        report.std_errors.push_back(std::sqrt(var / n));
    }
    if (report.deltas.size() >= 2) {
        std::vector<double> lx, ly;
        for (std::size_t i = 0; i < report.deltas.size(); ++i) {
            lx.push_back(std::log(report.deltas[i]));
            ly.push_back(std::log(report.max_gap[i]));
        }
        const LineFit line = fit_line(lx, ly);
        report.slope = line.slope;
        report.r_squared = line.r_squared;
    }
    return report;
}

// ---------------------------------------------------------------------------

namespace {

double default_spacing(const SchemeRun& run, const StabilityOptions& options) {
    if (options.sample_spacing) return *options.sample_spacing;
    return std::max(run.problem().tau() / 8.0, run.delta());
}

std::size_t record_stride_for(const SchemeRun& run, double spacing) {
    const double ratio = spacing / run.delta();
    const auto every = static_cast<std::size_t>(std::llround(ratio));
    if (every == 0 || std::fabs(static_cast<double>(every) - ratio) > 1e-9 * ratio)
        throw ArgumentError("sample spacing must be a positive multiple of the step size");
    return run.m_sub() % every == 0 ? every : 1;
}

}  // namespace

StabilityResult stability_experiment(const SchemeRun& run, const LatticeFamily& family, std::size_t n_paths,
                                     double p, const StabilityOptions& options) {
    const double spacing = default_spacing(run, options);
    SimulateOptions sim;
    sim.record_stride = record_stride_for(run, spacing);
    sim.threads = options.threads;
    const TrajectoryEnsemble ensemble = simulate(run, family, n_paths, sim);
    const std::vector<double> times = sample_times(ensemble, spacing);
    const DecayWindow window = options.window.value_or(default_decay_window(run.horizon()));

    StabilityResult result;
    result.moments = estimate_moment(ensemble, p, times);
    bool any_nonzero = false;
    for (std::size_t i = 0; i < times.size(); ++i)
        if (times[i] >= window.t_lo && times[i] <= window.t_hi && result.moments.values[i] != 0.0)
            any_nonzero = true;
    if (!any_nonzero) {
        result.degenerate = true;
        return result;
    }
    result.fit = fit_decay(result.moments, window);
    result.lambda_std_error = decay_rate_standard_error(ensemble, p, times, window, options.batches);
    return result;
}

EquivalenceReport equivalence_experiment(const SddeProblem& problem, const TruncationPolicy& policy, double p,
                                         std::size_t m_sub, double horizon, std::size_t n_paths, std::uint64_t seed,
                                         double c_star, const StabilityOptions& options) {
    if (!problem.origin_fixed())
        throw ArgumentError("equivalence experiment requires f(0,0) = g(0,0) = 0 (origin_fixed)");
    const SchemeRun coarse(problem, policy, m_sub, horizon);
    const SchemeRun fine(problem, policy, 8 * m_sub, horizon);
    const LatticeFamily family{fine.delta(), static_cast<std::uint64_t>(std::max<std::int64_t>(fine.steps(), 1)),
                               problem.noise_dim(), seed};

    StabilityOptions shared = options;
    if (!shared.sample_spacing) shared.sample_spacing = default_spacing(coarse, options);

    EquivalenceReport report;
    report.delta = coarse.delta();
    report.reference_delta = fine.delta();
    report.coarse = stability_experiment(coarse, family, n_paths, p, shared);
    report.reference = stability_experiment(fine, family, n_paths, p, shared);
    report.degenerate = report.coarse.degenerate || report.reference.degenerate;
    if (report.degenerate) return report;

    const double lc = report.coarse.fit->lambda_hat, lr = report.reference.fit->lambda_hat;
    report.sign_agreement = (lc > 0.0 && lr > 0.0) || (lc < 0.0 && lr < 0.0);
    report.separated = std::fabs(lc) > 3.0 * report.coarse.lambda_std_error &&
                       std::fabs(lr) > 3.0 * report.reference.lambda_std_error;

    if (lr > 0.0) {
        // ||xi|| = sup over the grid of |xi(u)|; growth M = e^{intercept} / ||xi||^p, at least 1.
        double sup = 0.0;
        for (std::int64_t k = -static_cast<std::int64_t>(fine.m_sub()); k <= 0; ++k)
            sup = std::max(sup, norm(problem.initial().value(fine.grid_time(k))));
        const double growth = std::max(1.0, std::exp(report.reference.fit->log_m_hat) / std::pow(sup, p));
        report.transfer =
            transfer_constants(TransferDirection::sdde_to_scheme, lr, growth, p, problem.tau(), c_star);
    }
    return report;
}

}  // namespace sdde
