#include "sdde/scheme.hpp"

#include <algorithm>
#include <array>
#include <functional>
#include <atomic>
#include <cmath>
#include <cstdlib>
#include <exception>
#include <limits>
#include <mutex>
#include <sstream>
#include <thread>

#include "sdde/errors.hpp"
#include "sdde/kernels.hpp"

namespace sdde {

// ---------------------------------------------------------------------------
// Truncation

TruncationPolicy::TruncationPolicy(double h3, double rho, double h_hat, double epsilon)
    : h3_(h3), rho_(rho), h_hat_(h_hat), epsilon_(epsilon) {
    if (!(h3_ > 0.0) || !std::isfinite(h3_)) throw ArgumentError("H3 must be positive");
    if (!(rho_ > 0.0) || !std::isfinite(rho_)) throw ArgumentError("rho must be positive");
    if (!(epsilon_ > 0.0 && epsilon_ <= 0.25)) throw ArgumentError("epsilon must lie in (0, 1/4]");
    if (!(h_hat_ >= 1.0 && h_hat_ >= mu(1.0))) {
        std::ostringstream msg;
        msg << "h_hat = " << h_hat_ << " must satisfy h_hat >= 1 v mu(1) = " << std::max(1.0, mu(1.0));
        throw ArgumentError(msg.str());
    }
    // Delta^{1/4} h(Delta) <= h_hat on (0, 1]; analytic for epsilon <= 1/4, checked on a dyadic grid.
    for (int j = 0; j <= 60; ++j) {
        const double delta = std::ldexp(1.0, -j);
        if (std::pow(delta, 0.25) * h(delta) > h_hat_ * (1.0 + 1e-12))
            throw ArgumentError("step-size cap Delta^{1/4} h(Delta) <= h_hat violated");
    }
}

double TruncationPolicy::mu(double u) const {
    if (u >= 1.0) return h3_ * std::pow(u, (2.0 + rho_) / 2.0);
    return h3_ * std::max(u, 0.0);
}

double TruncationPolicy::mu_inverse(double v) const {
    if (v >= h3_) return std::pow(v / h3_, 2.0 / (2.0 + rho_));
    return std::max(v, 0.0) / h3_;
}

double TruncationPolicy::h(double delta) const {
    if (!(delta > 0.0 && delta <= 1.0)) throw ArgumentError("step size must lie in (0, 1]");
    return h_hat_ * std::pow(delta, -epsilon_);
}

double TruncationPolicy::truncation_radius(double delta) const { return mu_inverse(h(delta)); }

Vector truncate_state(std::span<const double> x, double radius) {
    if (!(radius > 0.0)) throw ArgumentError("truncation radius must be positive");
    Vector out(x.begin(), x.end());
    if (!out.empty()) kernels::scalar_table().project_to_ball(out.data(), out.size(), 1, 1, radius);
    return out;
}

std::pair<Vector, Matrix> truncated_coefficients(const SddeProblem& problem, const TruncationPolicy& policy,
                                                 double delta, std::span<const double> x,
                                                 std::span<const double> y) {
    const double r = policy.truncation_radius(delta);
    if (x.size() != problem.dim() || y.size() != problem.dim())
        throw ArgumentError("state dimension does not match problem");
    const Vector px = truncate_state(x, r);
    const Vector py = truncate_state(y, r);
    return {problem.eval_drift(px, py), problem.eval_diffusion(px, py)};
}

// ---------------------------------------------------------------------------
// Runs

SchemeRun::SchemeRun(SddeProblem problem, std::optional<TruncationPolicy> policy, std::size_t m_sub,
                     double horizon, Variant variant)
    : problem_(std::move(problem)), policy_(std::move(policy)), m_sub_(m_sub), horizon_(horizon), variant_(variant) {
    if (m_sub_ == 0) throw ArgumentError("m_sub must be >= 1");
    delta_ = problem_.tau() / static_cast<double>(m_sub_);
    if (!(delta_ > 0.0 && delta_ <= 1.0)) {
        std::ostringstream msg;
        msg << "step size tau/M = " << delta_ << " outside (0, 1]";
        throw ArgumentError(msg.str());
    }
    if (!(horizon_ >= 0.0) || !std::isfinite(horizon_)) throw ArgumentError("horizon must be >= 0");
    const double ratio = horizon_ / delta_;
    steps_ = std::llround(ratio);
    if (std::fabs(static_cast<double>(steps_) - ratio) > 1e-9 * std::max(1.0, ratio)) {
        std::ostringstream msg;
        msg << "horizon " << horizon_ << " is not a multiple of the step size " << delta_;
        throw ArgumentError(msg.str());
    }
    if (variant_ == Variant::truncated) {
        if (!policy_) throw ArgumentError("truncated variant needs a truncation policy");
        radius_ = policy_->truncation_radius(delta_);
    } else {
        radius_ = std::numeric_limits<double>::infinity();
    }
}

double SchemeRun::grid_time(std::int64_t k) const {
    if (k == -static_cast<std::int64_t>(m_sub_)) return -problem_.tau();
    return static_cast<double>(k) * delta_;
}

namespace {

bool finite_all(std::span<const double> v) {
    return std::all_of(v.begin(), v.end(), [](double c) { return std::isfinite(c); });
}

}  // namespace

Vector step(const SchemeRun& run, std::span<const double> state, std::span<const double> delayed,
            std::span<const double> dw) {
    const SddeProblem& p = run.problem();
    const std::size_t n = p.dim(), m = p.noise_dim();
    if (state.size() != n || delayed.size() != n) throw ArgumentError("state dimension does not match problem");
    if (dw.size() != m) throw ArgumentError("Brownian increment dimension does not match noise_dim");

    Vector x(state.begin(), state.end()), y(delayed.begin(), delayed.end());
    if (run.variant() == Variant::truncated) {
        kernels::scalar_table().project_to_ball(x.data(), n, 1, 1, run.radius());
        kernels::scalar_table().project_to_ball(y.data(), n, 1, 1, run.radius());
    }
    Vector f(n), g(n * m);
    p.drift_into(x, y, f);
    p.diffusion_into(x, y, g);
    if (!finite_all(f) || !finite_all(g)) {
        Vector at(state.begin(), state.end());
        at.insert(at.end(), delayed.begin(), delayed.end());
        throw NumericRangeError("scheme coefficients are not finite", std::move(at));
    }
    Vector next(state.begin(), state.end());
    kernels::scalar_table().euler_update(next.data(), f.data(), g.data(), dw.data(), run.delta(), n, m, 1, 1);
    if (!finite_all(next) || norm(next) > kBlowUpNorm) {
        Vector at(state.begin(), state.end());
        at.insert(at.end(), delayed.begin(), delayed.end());
        throw NumericRangeError("scheme step left the finite range", std::move(at));
    }
    return next;
}

// ---------------------------------------------------------------------------
// Ensemble storage

TrajectoryEnsemble::TrajectoryEnsemble(SchemeRun run, LatticeFamily family, std::size_t n_paths,
                                       std::uint64_t first_path_id, std::size_t record_stride)
    : run_(std::move(run)),
      family_(family),
      n_paths_(n_paths),
      first_path_id_(first_path_id),
      stride_(record_stride),
      dim_(run_.problem().dim()) {
    const auto m = static_cast<std::int64_t>(run_.m_sub());
    const std::int64_t k_end = run_.steps();
    if (stride_ == 0 || m % static_cast<std::int64_t>(stride_) != 0)
        throw ArgumentError("record stride must divide m_sub");
    for (std::int64_t k = -m; k <= k_end; k += static_cast<std::int64_t>(stride_)) indices_.push_back(k);
    if (indices_.back() != k_end) indices_.push_back(k_end);
    states_.assign(n_paths_ * indices_.size() * dim_, 0.0);
    flag_step_.assign(n_paths_, -1);
}

bool TrajectoryEnsemble::recorded(std::int64_t k) const noexcept {
    const auto m = static_cast<std::int64_t>(run_.m_sub());
    if (k < -m || k > run_.steps()) return false;
    return (k + m) % static_cast<std::int64_t>(stride_) == 0 || k == run_.steps();
}

std::size_t TrajectoryEnsemble::slot_of(std::int64_t k) const {
    const auto m = static_cast<std::int64_t>(run_.m_sub());
    if (!recorded(k)) {
        std::ostringstream msg;
        msg << "grid index " << k << " was not recorded (stride " << stride_ << ")";
        throw ArgumentError(msg.str());
    }
    if ((k + m) % static_cast<std::int64_t>(stride_) == 0)
        return static_cast<std::size_t>((k + m) / static_cast<std::int64_t>(stride_));
    return indices_.size() - 1;
}

std::span<const double> TrajectoryEnsemble::state(std::size_t path, std::int64_t k) const {
    if (path >= n_paths_) throw ArgumentError("path index out of range");
    const std::size_t slot = slot_of(k);
    return {states_.data() + (path * indices_.size() + slot) * dim_, dim_};
}

std::span<double> TrajectoryEnsemble::mutable_slot(std::size_t path, std::size_t slot) {
    return {states_.data() + (path * indices_.size() + slot) * dim_, dim_};
}

double TrajectoryEnsemble::flagged_fraction() const {
    if (n_paths_ == 0) return 0.0;
    const auto count = std::count_if(flag_step_.begin(), flag_step_.end(), [](std::int64_t s) { return s >= 0; });
    return static_cast<double>(count) / static_cast<double>(n_paths_);
}

// ---------------------------------------------------------------------------
// Lock-step engine

namespace {

constexpr std::size_t kBlock = 8;
constexpr std::size_t kNoiseChunk = 512;

std::uint64_t step_factor(const SchemeRun& run, const LatticeFamily& family) {
    const double ratio = run.delta() / family.master_dt;
    const auto factor = static_cast<std::uint64_t>(std::llround(ratio));
    if (factor == 0 || std::fabs(static_cast<double>(factor) - ratio) > 1e-9 * ratio) {
        std::ostringstream msg;
        msg << "step size " << run.delta() << " is not an integer multiple of master_dt " << family.master_dt;
        throw ArgumentError(msg.str());
    }
    return factor;
}

/// Advances up to kBlock paths together; lane l is path first + l of the ensemble.
class BlockEngine {
public:
    BlockEngine(const SchemeRun& run, const LatticeFamily& family, std::uint64_t factor)
        : run_(run),
          family_(family),
          factor_(factor),
          n_(run.problem().dim()),
          m_(run.problem().noise_dim()),
          ring_len_(run.m_sub() + 1),
          ring_(ring_len_ * n_ * kBlock, 0.0),
          xs_(n_ * kBlock),
          ys_(n_ * kBlock),
          f_(n_ * kBlock),
          g_(n_ * m_ * kBlock),
          dw_(m_ * kBlock),
          chunk_(kNoiseChunk * m_ * kBlock, 0.0),
          xl_(n_),
          yl_(n_),
          fl_(n_),
          gl_(n_ * m_) {}

    void run(TrajectoryEnsemble& out, std::size_t first, std::size_t lanes) {
        const auto& kt = kernels::active();
        const auto m_sub = static_cast<std::int64_t>(run_.m_sub());
        const std::int64_t k_end = run_.steps();
        const bool truncated = run_.variant() == Variant::truncated;

        std::vector<std::uint64_t> ids(lanes);
        for (std::size_t l = 0; l < lanes; ++l) ids[l] = out.first_path_id() + first + l;
        std::array<bool, kBlock> frozen{};

        // Initial segment on the grid, identical for all lanes.
        for (std::int64_t k = -m_sub; k <= 0; ++k) {
            run_.problem().initial().value_into(run_.grid_time(k), xl_);
            double* slot = ring_slot(k);
            for (std::size_t c = 0; c < n_; ++c)
                for (std::size_t l = 0; l < kBlock; ++l) slot[c * kBlock + l] = xl_[c];
            record(out, first, lanes, k);
        }
        if (k_end == 0) return;

        BlockNoise noise(family_, ids, kBlock);
        std::uint64_t chunk_first = 0, chunk_len = 0, master = 0;

        for (std::int64_t k = 0; k < k_end; ++k) {
            std::fill(dw_.begin(), dw_.end(), 0.0);
            for (std::uint64_t i = 0; i < factor_; ++i, ++master) {
                if (master >= chunk_first + chunk_len) {
                    chunk_first = master;
                    chunk_len = std::min<std::uint64_t>(kNoiseChunk, family_.n_steps - master);
                    noise.fill(chunk_first, chunk_len, chunk_);
                }
                kt.accumulate(dw_.data(), chunk_.data() + (master - chunk_first) * m_ * kBlock, m_ * kBlock);
            }

            const double* cur = ring_slot(k);
            const double* del = ring_slot(k - m_sub);
            std::copy(cur, cur + n_ * kBlock, xs_.begin());
            std::copy(del, del + n_ * kBlock, ys_.begin());
            if (truncated) {
                kt.project_to_ball(xs_.data(), n_, kBlock, lanes, run_.radius());
                kt.project_to_ball(ys_.data(), n_, kBlock, lanes, run_.radius());
            }

            for (std::size_t l = 0; l < lanes; ++l) {
                if (!frozen[l]) {
                    for (std::size_t c = 0; c < n_; ++c) {
                        xl_[c] = xs_[c * kBlock + l];
                        yl_[c] = ys_[c * kBlock + l];
                    }
                    run_.problem().drift_into(xl_, yl_, fl_);
                    run_.problem().diffusion_into(xl_, yl_, gl_);
                    if (finite_all(fl_) && finite_all(gl_)) {
                        scatter(l);
                        continue;
                    }
                    if (truncated) throw_nonfinite(first + l, k);
                    frozen[l] = true;
                    out.set_flag(first + l, k + 1);
                }
                zero_lane(l);
            }

            // The slot of k+1 is the slot of k-M, already copied into ys_.
            double* next = ring_slot(k + 1);
            std::copy(cur, cur + n_ * kBlock, next);
            kt.euler_update(next, f_.data(), g_.data(), dw_.data(), run_.delta(), n_, m_, kBlock, lanes);

            for (std::size_t l = 0; l < lanes; ++l) {
                if (frozen[l]) continue;
                double s = 0.0;
                bool finite = true;
                for (std::size_t c = 0; c < n_; ++c) {
                    const double v = next[c * kBlock + l];
                    finite = finite && std::isfinite(v);
                    s += v * v;
                }
                if (finite && std::sqrt(s) <= kBlowUpNorm) continue;
                if (truncated) throw_nonfinite(first + l, k);
                frozen[l] = true;
                out.set_flag(first + l, k + 1);
                for (std::size_t c = 0; c < n_; ++c) next[c * kBlock + l] = cur[c * kBlock + l];
            }
            record(out, first, lanes, k + 1);
        }
    }

private:
    double* ring_slot(std::int64_t k) {
        const auto len = static_cast<std::int64_t>(ring_len_);
        const std::int64_t idx = ((k % len) + len) % len;
        return ring_.data() + static_cast<std::size_t>(idx) * n_ * kBlock;
    }

    void record(TrajectoryEnsemble& out, std::size_t first, std::size_t lanes, std::int64_t k) {
        if (!out.recorded(k)) return;
        const std::size_t slot = out.slot_of(k);
        const double* src = ring_slot(k);
        for (std::size_t l = 0; l < lanes; ++l) {
            auto dst = out.mutable_slot(first + l, slot);
            for (std::size_t c = 0; c < n_; ++c) dst[c] = src[c * kBlock + l];
        }
    }

    void scatter(std::size_t l) {
        for (std::size_t c = 0; c < n_; ++c) f_[c * kBlock + l] = fl_[c];
        for (std::size_t cj = 0; cj < n_ * m_; ++cj) g_[cj * kBlock + l] = gl_[cj];
    }

    void zero_lane(std::size_t l) {
        for (std::size_t c = 0; c < n_; ++c) f_[c * kBlock + l] = 0.0;
        for (std::size_t cj = 0; cj < n_ * m_; ++cj) g_[cj * kBlock + l] = 0.0;
    }

    [[noreturn]] void throw_nonfinite(std::size_t path, std::int64_t k) {
        std::vector<double> at(xl_.begin(), xl_.end());
        at.insert(at.end(), yl_.begin(), yl_.end());
        std::ostringstream msg;
        msg << "truncated scheme produced a non-finite value on path " << path << " at step " << k;
        throw NumericRangeError(msg.str(), std::move(at));
    }

    const SchemeRun& run_;
    const LatticeFamily& family_;
    std::uint64_t factor_;
    std::size_t n_, m_, ring_len_;
    std::vector<double> ring_, xs_, ys_, f_, g_, dw_, chunk_;
    Vector xl_, yl_, fl_, gl_;
};

void parallel_blocks(std::size_t n_blocks, unsigned threads, const std::function<void(std::size_t)>& body) {
    threads = std::max(1u, std::min<unsigned>(threads, static_cast<unsigned>(std::max<std::size_t>(n_blocks, 1))));
    if (threads == 1) {
        for (std::size_t b = 0; b < n_blocks; ++b) body(b);
        return;
    }
    std::atomic<std::size_t> next{0};
    std::exception_ptr error;
    std::mutex error_mutex;
    std::vector<std::jthread> workers;
    for (unsigned t = 0; t < threads; ++t)
        workers.emplace_back([&] {
            for (std::size_t b = next++; b < n_blocks; b = next++) {
                try {
                    body(b);
                } catch (...) {
                    std::lock_guard lock(error_mutex);
                    if (!error) error = std::current_exception();
                }
            }
        });
    workers.clear();
    if (error) std::rethrow_exception(error);
}

}  // namespace

unsigned default_threads() {
    if (const char* env = std::getenv("SDDE_THREADS")) {
        const int v = std::atoi(env);
        if (v > 0) return static_cast<unsigned>(v);
    }
    return std::max(1u, std::thread::hardware_concurrency());
}

TrajectoryEnsemble simulate(const SchemeRun& run, const LatticeFamily& family, std::size_t n_paths,
                            const SimulateOptions& options) {
    if (n_paths == 0) throw ArgumentError("n_paths must be >= 1");
    if (family.noise_dim != run.problem().noise_dim())
        throw ArgumentError("lattice noise dimension does not match the problem");
    const std::uint64_t factor = step_factor(run, family);
    const auto needed = static_cast<std::uint64_t>(run.steps()) * factor;
    if (needed > family.n_steps) {
        std::ostringstream msg;
        msg << "lattice has " << family.n_steps << " master steps, run needs " << needed;
        throw ArgumentError(msg.str());
    }

    TrajectoryEnsemble ensemble(run, family, n_paths, options.first_path_id, options.record_stride);
    const std::size_t n_blocks = (n_paths + kBlock - 1) / kBlock;
    const unsigned threads = options.threads ? options.threads : default_threads();
    parallel_blocks(n_blocks, threads, [&](std::size_t b) {
        BlockEngine engine(run, family, factor);
        const std::size_t first = b * kBlock;
        engine.run(ensemble, first, std::min(kBlock, n_paths - first));
    });
    return ensemble;
}

// ---------------------------------------------------------------------------
// Continuous-time views

std::int64_t step_index(const SchemeRun& run, double t) {
    const double delta = run.delta();
    auto k = static_cast<std::int64_t>(std::floor(t / delta));
    if (static_cast<double>(k + 1) * delta <= t) ++k;
    if (static_cast<double>(k) * delta > t) --k;
    return k;
}

std::span<const double> step_process_value(const TrajectoryEnsemble& ensemble, std::size_t path, double t) {
    const SchemeRun& run = ensemble.run();
    if (!(t >= -run.problem().tau() && t <= run.horizon())) {
        std::ostringstream msg;
        msg << "time " << t << " outside [" << -run.problem().tau() << ", " << run.horizon() << "]";
        throw ArgumentError(msg.str());
    }
    const auto m = static_cast<std::int64_t>(run.m_sub());
    const std::int64_t k = std::clamp(step_index(run, t), -m, run.steps());
    return ensemble.state(path, k);
}

Vector interpolant_value(const TrajectoryEnsemble& ensemble, std::size_t path, double t) {
    const SchemeRun& run = ensemble.run();
    if (!(t >= 0.0 && t <= run.horizon())) throw ArgumentError("interpolant time outside [0, horizon]");
    const std::int64_t k = std::min(step_index(run, t), run.steps());
    const auto m = static_cast<std::int64_t>(run.m_sub());
    const auto x = ensemble.state(path, k);
    const auto y = ensemble.state(path, k - m);

    const LatticeFamily& family = ensemble.lattice_family();
    const double offset = t - static_cast<double>(k) * run.delta();
    const double ratio = offset / family.master_dt;
    const auto sub = static_cast<std::uint64_t>(std::llround(ratio));
    if (std::fabs(static_cast<double>(sub) - ratio) > 1e-6) {
        std::ostringstream msg;
        msg << "time " << t << " is not on the master grid (spacing " << family.master_dt << ")";
        throw ArgumentError(msg.str());
    }
    Vector out(x.begin(), x.end());
    if (sub == 0) return out;

    const SddeProblem& p = run.problem();
    const std::size_t n = p.dim(), mn = p.noise_dim();
    Vector px(x.begin(), x.end()), py(y.begin(), y.end());
    if (run.variant() == Variant::truncated) {
        kernels::scalar_table().project_to_ball(px.data(), n, 1, 1, run.radius());
        kernels::scalar_table().project_to_ball(py.data(), n, 1, 1, run.radius());
    }
    Vector f(n), g(n * mn), dw(mn);
    p.drift_into(px, py, f);
    p.diffusion_into(px, py, g);

    const std::uint64_t factor = step_factor(run, family);
    const BrownianLattice lattice(family, ensemble.first_path_id() + path);
    lattice.sum_into(static_cast<std::uint64_t>(k) * factor, sub, dw);
    kernels::scalar_table().euler_update(out.data(), f.data(), g.data(), dw.data(), offset, n, mn, 1, 1);
    return out;
}

}  // namespace sdde
