#include "sdde/conditions.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "sdde/errors.hpp"
#include "sdde/philox.hpp"

namespace sdde {

std::string to_string(Assumption a) {
    switch (a) {
        case Assumption::local_lipschitz: return "local_lipschitz";
        case Assumption::khasminskii: return "khasminskii";
        case Assumption::monotonicity_u: return "monotonicity_u";
        case Assumption::polynomial_growth: return "polynomial_growth";
        case Assumption::holder_initial: return "holder_initial";
    }
    return "unknown";
}

std::string to_string(Verdict v) { return v == Verdict::consistent ? "consistent" : "violated"; }

namespace {

constexpr std::uint32_t kStreamTag = 0x636f6e64u;  // separates these draws from path noise
constexpr double kGrowthFactor = 10.0;
constexpr double kRatioFloor = 1e-3;

/// Uniform and normal draws for one sample index.
class SampleRng {
public:
    SampleRng(std::uint64_t seed, std::uint64_t index) : index_(index) {
        const std::uint64_t k = philox::mix64(seed);
        key_ = {static_cast<std::uint32_t>(k), static_cast<std::uint32_t>(k >> 32)};
    }

    /// Uniform on [0, 1).
    double uniform() {
        if (pos_ == 2) refill();
        return buffer_[pos_++];
    }

    double normal() {
        const double u1 = 1.0 - uniform();  // (0, 1]
        const double u2 = uniform();
        return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * M_PI * u2);
    }

    /// Uniform direction on the unit sphere in R^n.
    std::vector<double> direction(std::size_t n) {
        std::vector<double> v(n);
        double s = 0.0;
        do {
            for (auto& c : v) c = normal();
            s = norm(v);
        } while (s == 0.0);
        for (auto& c : v) c /= s;
        return v;
    }

private:
    void refill() {
        const philox::Counter ctr{static_cast<std::uint32_t>(index_), static_cast<std::uint32_t>(index_ >> 32),
                                  draw_++, kStreamTag};
        const auto w = philox::generate(ctr, key_);
        const std::uint64_t a = (std::uint64_t{w[0]} << 32) | w[1];
        const std::uint64_t b = (std::uint64_t{w[2]} << 32) | w[3];
        buffer_[0] = static_cast<double>(a >> 11) * 0x1.0p-53;
        buffer_[1] = static_cast<double>(b >> 11) * 0x1.0p-53;
        pos_ = 0;
    }

    std::uint64_t index_;
    philox::Key key_{};
    std::uint32_t draw_ = 0;
    double buffer_[2] = {0.0, 0.0};
    int pos_ = 2;
};

enum class PointKind { ball, probe };
enum class PartnerKind { independent, near, origin };

std::vector<double> scaled(const std::vector<double>& dir, double r) {
    std::vector<double> z(dir.size());
    for (std::size_t i = 0; i < z.size(); ++i) z[i] = dir[i] * r;
    return z;
}

std::vector<double> ball_point(SampleRng& rng, std::size_t n, double radius) {
    const auto dir = rng.direction(n);
    return scaled(dir, radius * std::pow(rng.uniform(), 1.0 / static_cast<double>(n)));
}

struct PointSample {
    std::vector<double> z;  // (x, y)
    PointKind kind;
    double log_norm;        // log10 |z| for probes
};

PointSample draw_point(SampleRng& rng, std::size_t index, std::size_t n2, const SampleSpec& spec) {
    if (index % 2 == 0) return {ball_point(rng, n2, spec.ball_radius), PointKind::ball, 0.0};
    const double e = rng.uniform() * spec.max_log_norm;
    return {scaled(rng.direction(n2), std::pow(10.0, e)), PointKind::probe, e};
}

struct PairSample {
    std::vector<double> z;
    std::vector<double> zb;
    PointKind kind;
    PartnerKind partner;
    double log_norm;
    double log_gap;  // log10 of the near-pair distance relative to max(|z|, 1)
};

PairSample draw_pair(SampleRng& rng, std::size_t index, std::size_t n2, const SampleSpec& spec) {
    PointSample a = draw_point(rng, index, n2, spec);
    PairSample s{a.z, {}, a.kind, static_cast<PartnerKind>((index / 2) % 3), a.log_norm, 0.0};
    switch (s.partner) {
        case PartnerKind::independent:
            if (a.kind == PointKind::ball)
                s.zb = ball_point(rng, n2, spec.ball_radius);
            else
                s.zb = scaled(rng.direction(n2), std::pow(10.0, a.log_norm));
            break;
        case PartnerKind::near: {
            s.log_gap = -6.0 * rng.uniform();
            const double d = std::max(norm(a.z), 1.0) * std::pow(10.0, s.log_gap);
            const auto dir = rng.direction(n2);
            s.zb = a.z;
            for (std::size_t i = 0; i < n2; ++i) s.zb[i] += d * dir[i];
            break;
        }
        case PartnerKind::origin: s.zb.assign(n2, 0.0); break;
    }
    return s;
}

/// Running maximum with the top / middle probe bands used for the divergence verdict.
class RatioTracker {
public:
    void add(double ratio, const std::vector<double>& point) {
        ++count_;
        if (!best_ || ratio > *best_) {
            best_ = ratio;
            arg_ = point;
        }
    }
    void band_low(double ratio) { low_ = std::max(low_, ratio); }
    void band_high(double ratio) { high_ = std::max(high_, ratio); }
    void skip() { ++skipped_; }

    ConditionReport report(Assumption a, const std::string& what) const {
        ConditionReport r;
        r.assumption = a;
        r.samples = count_;
        r.estimated_constant = best_.value_or(0.0);
        if (best_) r.max_violation_point = arg_;
        const bool diverging = high_ > kGrowthFactor * std::max(low_, kRatioFloor);
        r.verdict = diverging ? Verdict::violated : Verdict::consistent;
        std::ostringstream note;
        if (diverging)
            note << what << " grows without bound along the probe sequence (" << high_ << " vs " << low_ << ")";
        else
            note << "consistent with constant " << r.estimated_constant << " on " << count_ << " samples";
        if (skipped_) note << "; " << skipped_ << " samples skipped";
        r.note = note.str();
        return r;
    }

private:
    std::optional<double> best_;
    std::vector<double> arg_;
    std::size_t count_ = 0;
    std::size_t skipped_ = 0;
    double low_ = -HUGE_VAL;
    double high_ = -HUGE_VAL;
};

bool in_band(double v, double lo, double hi) { return v >= lo && v <= hi; }

/// Top decade of the probes against the decade starting at 10^2 (or the lowest decade for short ranges).
void record_probe_bands(RatioTracker& t, double ratio, double log_norm, const SampleSpec& spec) {
    const double top = spec.max_log_norm;
    const double mid = std::min(2.0, std::max(0.0, top - 3.0));
    if (in_band(log_norm, top - 1.0, top)) t.band_high(ratio);
    if (in_band(log_norm, mid, mid + 1.0)) t.band_low(ratio);
}

struct Coefficients {
    std::vector<double> f, g, fb, gb;
};

void evaluate(const SddeProblem& pr, const PairSample& s, Coefficients& c) {
    const std::size_t n = pr.dim(), m = pr.noise_dim();
    c.f.assign(n, 0.0);
    c.fb.assign(n, 0.0);
    c.g.assign(n * m, 0.0);
    c.gb.assign(n * m, 0.0);
    const std::span<const double> z(s.z), zb(s.zb);
    pr.drift_into(z.first(n), z.subspan(n), c.f);
    pr.diffusion_into(z.first(n), z.subspan(n), c.g);
    pr.drift_into(zb.first(n), zb.subspan(n), c.fb);
    pr.diffusion_into(zb.first(n), zb.subspan(n), c.gb);
}

std::vector<double> concat(const std::vector<double>& a, const std::vector<double>& b) {
    std::vector<double> out(a);
    out.insert(out.end(), b.begin(), b.end());
    return out;
}

void check_spec(const SampleSpec& spec) {
    if (spec.n_samples == 0) throw ArgumentError("n_samples must be >= 1");
    if (!(spec.ball_radius > 0.0)) throw ArgumentError("ball_radius must be positive");
    if (!(spec.max_log_norm > 0.0)) throw ArgumentError("max_log_norm must be positive");
}

}  // namespace

ConditionReport check_khasminskii(const SddeProblem& problem, double p, const SampleSpec& spec) {
    if (!(p > 2.0)) throw ArgumentError("Khasminskii check needs p > 2");
    check_spec(spec);
    const std::size_t n = problem.dim(), m = problem.noise_dim();
    RatioTracker tracker;
    std::vector<double> f(n), g(n * m);
    for (std::size_t i = 0; i < spec.n_samples; ++i) {
        SampleRng rng(spec.seed, i);
        const PointSample s = draw_point(rng, i, 2 * n, spec);
        const std::span<const double> x(s.z.data(), n), y(s.z.data() + n, n);
        problem.drift_into(x, y, f);
        problem.diffusion_into(x, y, g);
        double xf = 0.0;
        for (std::size_t k = 0; k < n; ++k) xf += x[k] * f[k];
        const double g2 = norm(g) * norm(g);
        const double ratio = (xf + 0.5 * (p - 1.0) * g2) / (1.0 + norm(x) * norm(x) + norm(y) * norm(y));
        if (!std::isfinite(ratio)) {
            tracker.skip();
            continue;
        }
        tracker.add(ratio, s.z);
        if (s.kind == PointKind::probe) record_probe_bands(tracker, ratio, s.log_norm, spec);
    }
    return tracker.report(Assumption::khasminskii, "Khasminskii ratio");
}

ConditionReport check_polynomial_growth(const SddeProblem& problem, double rho, const SampleSpec& spec) {
    if (!(rho > 0.0)) throw ArgumentError("polynomial growth check needs rho > 0");
    check_spec(spec);
    const std::size_t n = problem.dim();
    RatioTracker tracker;
    Coefficients c;
    for (std::size_t i = 0; i < spec.n_samples; ++i) {
        SampleRng rng(spec.seed, i);
        const PairSample s = draw_pair(rng, i, 2 * n, spec);
        const double dist2 = distance_sq(s.z, s.zb);
        if (dist2 == 0.0) {
            tracker.skip();
            continue;
        }
        evaluate(problem, s, c);
        const std::span<const double> z(s.z), zb(s.zb);
        const double weight = 1.0 + std::pow(norm(z.first(n)), rho) + std::pow(norm(z.subspan(n)), rho) +
                              std::pow(norm(zb.first(n)), rho) + std::pow(norm(zb.subspan(n)), rho);
        const double num = std::max(distance_sq(c.f, c.fb), distance_sq(c.g, c.gb));
        const double ratio = num / (weight * dist2);
        if (!std::isfinite(ratio)) {
            tracker.skip();
            continue;
        }
        tracker.add(ratio, concat(s.z, s.zb));
        if (s.kind == PointKind::probe) record_probe_bands(tracker, ratio, s.log_norm, spec);
    }
    ConditionReport r = tracker.report(Assumption::polynomial_growth, "growth ratio");
    const Vector zero(n, 0.0);
    const double f0 = norm(problem.eval_drift(zero, zero));
    const double g0 = norm(problem.eval_diffusion(zero, zero));
    r.derived_h3 = std::sqrt(6.0 * r.estimated_constant) + f0 + g0;
    return r;
}

ConditionReport check_local_lipschitz(const SddeProblem& problem, double radius, const SampleSpec& spec) {
    if (!(radius > 0.0)) throw ArgumentError("local Lipschitz check needs R > 0");
    check_spec(spec);
    const std::size_t n = problem.dim(), n2 = 2 * n;
    RatioTracker tracker;
    Coefficients c;
    for (std::size_t i = 0; i < spec.n_samples; ++i) {
        SampleRng rng(spec.seed, i);
        PairSample s{ball_point(rng, n2, radius), {}, PointKind::ball, static_cast<PartnerKind>(i % 3), 0.0, 0.0};
        switch (s.partner) {
            case PartnerKind::independent: s.zb = ball_point(rng, n2, radius); break;
            case PartnerKind::near: {
                s.log_gap = -9.0 * rng.uniform();
                const double d = radius * std::pow(10.0, s.log_gap);
                const auto dir = rng.direction(n2);
                s.zb = s.z;
                for (std::size_t k = 0; k < n2; ++k) s.zb[k] += d * dir[k];
                const double nb = norm(s.zb);
                if (nb > radius)
                    for (auto& v : s.zb) v *= radius / nb;
                break;
            }
            case PartnerKind::origin: s.zb.assign(n2, 0.0); break;
        }
        const std::span<const double> z(s.z), zb(s.zb);
        const double denom = std::sqrt(distance_sq(z.first(n), zb.first(n))) +
                             std::sqrt(distance_sq(z.subspan(n), zb.subspan(n)));
        if (denom == 0.0) {
            tracker.skip();
            continue;
        }
        evaluate(problem, s, c);
        const double num = std::max(std::sqrt(distance_sq(c.f, c.fb)), std::sqrt(distance_sq(c.g, c.gb)));
        const double ratio = num / denom;
        if (!std::isfinite(ratio)) {
            tracker.skip();
            continue;
        }
        tracker.add(ratio, concat(s.z, s.zb));
        if (s.partner == PartnerKind::near) {
            // Gaps here are relative to R over nine decades.
            if (s.log_gap <= -8.0) tracker.band_high(ratio);
            if (in_band(s.log_gap, -3.0, -2.0)) tracker.band_low(ratio);
        }
    }
    return tracker.report(Assumption::local_lipschitz, "Lipschitz quotient");
}

ConditionReport check_holder_initial(const InitialSegment& segment, double tau, const SampleSpec& spec) {
    if (!(tau > 0.0)) throw ArgumentError("tau must be positive");
    check_spec(spec);
    const double gamma = segment.holder_exponent();
    RatioTracker tracker;
    Vector a(segment.dim()), b(segment.dim());
    for (std::size_t i = 0; i < spec.n_samples; ++i) {
        double u = -tau, v = 0.0, log_gap = 0.0;
        bool near = false;
        if (i > 0) {
            SampleRng rng(spec.seed, i);
            u = -tau * rng.uniform();
            if (i % 2 == 0) {
                v = -tau * rng.uniform();
            } else {
                near = true;
                log_gap = -9.0 * rng.uniform();
                const double d = tau * std::pow(10.0, log_gap);
                v = u - d >= -tau ? u - d : u + d;
            }
        }
        if (u == v) {
            tracker.skip();
            continue;
        }
        segment.value_into(u, a);
        segment.value_into(v, b);
        const double ratio = std::sqrt(distance_sq(a, b)) / std::pow(std::fabs(u - v), gamma);
        if (!std::isfinite(ratio)) {
            tracker.skip();
            continue;
        }
        tracker.add(ratio, {u, v});
        if (near) {
            if (log_gap <= -8.0) tracker.band_high(ratio);
            if (in_band(log_gap, -3.0, -2.0)) tracker.band_low(ratio);
        }
    }
    return tracker.report(Assumption::holder_initial, "Hoelder quotient");
}

ConditionReport check_monotonicity_u(const SddeProblem& problem, double q, const std::optional<UFunction>& u_function,
                                     const SampleSpec& spec) {
    if (!u_function) throw ArgumentError("monotonicity check needs U for problem '" + problem.name() + "'");
    if (!(q > 2.0)) throw ArgumentError("monotonicity check needs q > 2");
    check_spec(spec);
    const std::size_t n = problem.dim();
    RatioTracker tracker;
    Coefficients c;
    for (std::size_t i = 0; i < spec.n_samples; ++i) {
        SampleRng rng(spec.seed, i);
        const PairSample s = draw_pair(rng, i, 2 * n, spec);
        const double dist2 = distance_sq(s.z, s.zb);
        if (dist2 == 0.0) {
            tracker.skip();
            continue;
        }
        evaluate(problem, s, c);
        const std::span<const double> z(s.z), zb(s.zb);
        double inner = 0.0;
        for (std::size_t k = 0; k < n; ++k) inner += (z[k] - zb[k]) * (c.f[k] - c.fb[k]);
        const double lhs = inner + 0.5 * (q - 1.0) * distance_sq(c.g, c.gb);
        const double u_term = (*u_function)(z.first(n), zb.first(n)) - (*u_function)(z.subspan(n), zb.subspan(n));
        const double ratio = (lhs + u_term) / dist2;
        if (!std::isfinite(ratio)) {
            tracker.skip();
            continue;
        }
        tracker.add(ratio, concat(s.z, s.zb));
        if (s.kind == PointKind::probe) record_probe_bands(tracker, ratio, s.log_norm, spec);
    }
    return tracker.report(Assumption::monotonicity_u, "monotonicity ratio");
}

double estimate_h3(const SddeProblem& problem, double rho, const SampleSpec& spec) {
    if (!(rho > 0.0)) throw ArgumentError("rho must be positive");
    check_spec(spec);
    const std::size_t n = problem.dim(), m = problem.noise_dim();
    std::vector<double> f(n), g(n * m);
    double best = 0.0;
    for (std::size_t i = 0; i < spec.n_samples; ++i) {
        SampleRng rng(spec.seed, i);
        const auto x = rng.direction(n);
        const auto y = rng.direction(n);
        // One of x, y sits on the sphere of radius u, the other anywhere inside it.
        const double u = std::pow(10.0, 3.0 * rng.uniform());
        const double inner = u * rng.uniform();
        const bool x_outer = rng.uniform() < 0.5;
        const auto xs = scaled(x, x_outer ? u : inner);
        const auto ys = scaled(y, x_outer ? inner : u);
        problem.drift_into(xs, ys, f);
        problem.diffusion_into(xs, ys, g);
        const double ratio = std::max(norm(f), norm(g)) / std::pow(u, (2.0 + rho) / 2.0);
        if (std::isfinite(ratio)) best = std::max(best, ratio);
    }
    return best > 0.0 ? 2.0 * best : 1.0;
}

}  // namespace sdde
