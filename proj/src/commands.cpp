#include "sdde/commands.hpp"

#include <charconv>
#include <cmath>
#include <fstream>
#include <sstream>

#include <json.hpp>

#include "sdde/conditions.hpp"
#include "sdde/errors.hpp"

namespace sdde::cli {

using nlohmann::json;
namespace fs = std::filesystem;

std::string format_double(double v) {
    if (std::isnan(v)) return "nan";
    if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
    char buf[64];
    const auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, v);
    (void)ec;
    return std::string(buf, ptr);
}

namespace {

struct OutputFile {
    std::string name;
    std::string content;
};

std::vector<fs::path> write_all(const ExperimentConfig& config, const std::vector<OutputFile>& files) {
    const fs::path dir(config.output_dir);
    std::error_code ec;
    fs::create_directories(dir, ec);
    if (ec) throw IoError("cannot create output directory '" + dir.string() + "': " + ec.message());
    std::vector<fs::path> written;
    for (const auto& f : files) {
        const fs::path path = dir / f.name;
        std::ofstream out(path, std::ios::binary | std::ios::trunc);
        if (!out) throw IoError("cannot open '" + path.string() + "' for writing");
        out << f.content;
        out.flush();
        if (!out) throw IoError("error while writing '" + path.string() + "'");
        written.push_back(path);
    }
    return written;
}

std::string csv_header(const ExperimentConfig& config, const std::string& columns) {
    return "# config_hash=" + config_hash(config) + "\n" + columns + "\n";
}

void csv_row(std::string& out, std::initializer_list<double> values) {
    bool first = true;
    for (double v : values) {
        if (!first) out += ',';
        out += format_double(v);
        first = false;
    }
    out += '\n';
}

json number(double v) { return std::isfinite(v) ? json(v) : json(nullptr); }

json base_json(const ExperimentConfig& config) {
    json j;
    j["config_hash"] = config_hash(config);
    return j;
}

std::string dump(const json& j) { return j.dump(2) + "\n"; }

std::size_t require_m_sub(const ExperimentConfig& config) {
    if (!config.m_sub) throw ConfigError({"m_sub or delta: required for this subcommand"});
    return *config.m_sub;
}

unsigned threads_of(const RunOptions& options) { return options.threads; }

SchemeRun make_run(const ExperimentConfig& config, const Resolved& r, std::size_t m_sub) {
    return SchemeRun(r.entry.problem, r.policy, m_sub, config.horizon, config.scheme);
}

LatticeFamily family_for(const SchemeRun& run, std::uint64_t seed) {
    return {run.delta(), static_cast<std::uint64_t>(std::max<std::int64_t>(run.steps(), 1)), run.problem().noise_dim(),
            seed};
}

json window_json(const DecayWindow& w) { return json::array({w.t_lo, w.t_hi}); }

json fit_json(const StabilityResult& s) {
    json j;
    j["degenerate"] = s.degenerate;
    j["flagged_fraction"] = s.moments.flagged_fraction;
    j["n_paths"] = s.moments.n_paths;
    j["n_used"] = s.moments.n_used;
    if (s.fit) {
        j["lambda_hat"] = number(s.fit->lambda_hat);
        j["log_m_hat"] = number(s.fit->log_m_hat);
        j["r_squared"] = number(s.fit->r_squared);
        j["window"] = window_json(s.fit->window);
        j["points"] = s.fit->points;
        j["lambda_std_error"] = number(s.lambda_std_error);
    } else {
        j["lambda_hat"] = nullptr;
        j["log_m_hat"] = nullptr;
        j["r_squared"] = nullptr;
        j["window"] = nullptr;
        j["points"] = 0;
        j["lambda_std_error"] = nullptr;
    }
    return j;
}

StabilityOptions stability_options(const ExperimentConfig& config, const RunOptions& options) {
    StabilityOptions s;
    s.window = config.fit_window;
    s.sample_spacing = config.sample_spacing;
    s.batches = config.batches;
    s.threads = threads_of(options);
    return s;
}

json report_json(const ConditionReport& r) {
    json j;
    j["assumption"] = to_string(r.assumption);
    j["verdict"] = to_string(r.verdict);
    j["estimated_constant"] = number(r.estimated_constant);
    j["samples"] = r.samples;
    if (r.max_violation_point) {
        json point = json::array();
        for (double v : *r.max_violation_point) point.push_back(number(v));
        j["max_violation_point"] = point;
    } else {
        j["max_violation_point"] = nullptr;
    }
    if (r.derived_h3) j["derived_h3"] = number(*r.derived_h3);
    j["note"] = r.note;
    return j;
}

json skipped_json(Assumption a, const std::string& why) {
    return {{"assumption", to_string(a)}, {"verdict", "not_checked"}, {"note", why}};
}

}  // namespace

std::vector<fs::path> run_simulate(const ExperimentConfig& config, const RunOptions& options) {
    const Resolved r = resolve(config);
    const SchemeRun run = make_run(config, r, require_m_sub(config));
    if (run.m_sub() % config.record_stride != 0) throw ConfigError({"record_stride: must divide M = tau / delta"});
    SimulateOptions sim;
    sim.record_stride = config.record_stride;
    sim.threads = threads_of(options);
    const TrajectoryEnsemble ens = simulate(run, family_for(run, config.seed), config.n_paths, sim);

    std::size_t n_flagged = 0;
    for (std::size_t i = 0; i < ens.n_paths(); ++i)
        if (ens.flagged(i)) ++n_flagged;
    if (config.fail_on_blowup && n_flagged > 0)
        throw NumericRangeError("classical EM blew up on " + std::to_string(n_flagged) + " of " +
                                    std::to_string(ens.n_paths()) + " paths",
                                {});

    std::string columns = "path_id,t";
    for (std::size_t i = 1; i <= run.problem().dim(); ++i) columns += ",x_" + std::to_string(i);
    std::string csv = csv_header(config, columns);
    for (std::size_t path = 0; path < ens.n_paths(); ++path)
        for (std::int64_t k : ens.recorded_indices()) {
            csv += std::to_string(ens.first_path_id() + path);
            csv += ',';
            csv += format_double(run.grid_time(k));
            for (double v : ens.state(path, k)) {
                csv += ',';
                csv += format_double(v);
            }
            csv += '\n';
        }

    json meta = base_json(config);
    meta["config"] = json::parse(canonical_json(config));
    meta["delta"] = run.delta();
    meta["m_sub"] = run.m_sub();
    meta["steps"] = run.steps();
    meta["truncation_radius"] = number(run.radius());
    meta["h3"] = r.h3;
    meta["rho"] = r.rho;
    meta["h_hat"] = r.h_hat;
    meta["seed"] = config.seed;
    meta["flagged_paths"] = n_flagged;
    meta["flagged_fraction"] = ens.flagged_fraction();
    meta["warnings"] = r.entry.problem.warnings();
    return write_all(config, {{"paths.csv", csv}, {"meta.json", dump(meta)}});
}

std::vector<fs::path> run_converge(const ExperimentConfig& config, const RunOptions& options) {
    std::vector<std::string> missing;
    if (config.m_sub_list.empty()) missing.push_back("delta_list or m_sub_list: required for converge");
    if (!config.reference_m_sub) missing.push_back("reference_delta or reference_m_sub: required for converge");
    if (!missing.empty()) throw ConfigError(missing);
    const Resolved r = resolve(config);
    if (config.scheme != Variant::truncated) throw ConfigError({"scheme: converge runs the truncated scheme only"});

    json summary = base_json(config);
    if (config.measure == Measure::strong_error) {
        StrongErrorSpec spec;
        spec.m_subs = config.m_sub_list;
        spec.reference_m_sub = *config.reference_m_sub;
        spec.q_bar = config.q_bar;
        spec.n_paths = config.n_paths;
        spec.horizon = config.horizon;
        spec.seed = config.seed;
        spec.threads = threads_of(options);
        const ConvergenceReport rep = strong_error(r.entry.problem, *r.policy, spec);

        std::string csv = csv_header(config, "delta,error,std_error");
        for (std::size_t i = 0; i < rep.deltas.size(); ++i)
            csv_row(csv, {rep.deltas[i], rep.errors[i], rep.std_errors[i]});
        bool decreasing = true;
        for (std::size_t i = 1; i < rep.errors.size(); ++i)
            if (!(rep.errors[i] < rep.errors[i - 1])) decreasing = false;

        summary["measure"] = "strong_error";
        summary["fitted"] = rep.fitted;
        summary["fitted_order"] = rep.fitted ? number(rep.fitted_order) : json(nullptr);
        summary["rms_order"] = rep.fitted ? number(rep.rms_order) : json(nullptr);
        summary["r_squared"] = rep.fitted ? number(rep.r_squared) : json(nullptr);
        summary["q_bar"] = rep.q_bar;
        summary["reference_delta"] = rep.reference_delta;
        summary["n_paths"] = rep.n_paths;
        summary["horizon"] = rep.horizon;
        summary["errors_strictly_decreasing"] = decreasing;
        return write_all(config, {{"errors.csv", csv}, {"summary.json", dump(summary)}});
    }

    const InterpolationGapReport rep =
        interpolation_gap(r.entry.problem, *r.policy, config.m_sub_list, *config.reference_m_sub, config.n_paths,
                          config.horizon, config.seed, threads_of(options));
    std::string csv = csv_header(config, "delta,max_gap,std_error");
    for (std::size_t i = 0; i < rep.deltas.size(); ++i) csv_row(csv, {rep.deltas[i], rep.max_gap[i], rep.std_errors[i]});
    bool decreasing = true;
    for (std::size_t i = 1; i < rep.max_gap.size(); ++i)
        if (!(rep.max_gap[i] < rep.max_gap[i - 1])) decreasing = false;
    summary["measure"] = "interpolation_gap";
    summary["slope"] = number(rep.slope);
    summary["r_squared"] = number(rep.r_squared);
    summary["n_paths"] = config.n_paths;
    summary["horizon"] = config.horizon;
    summary["gaps_strictly_decreasing"] = decreasing;
    return write_all(config, {{"gap.csv", csv}, {"summary.json", dump(summary)}});
}

std::vector<fs::path> run_stability(const ExperimentConfig& config, const RunOptions& options) {
    const Resolved r = resolve(config);
    const SchemeRun run = make_run(config, r, require_m_sub(config));
    const StabilityResult res = stability_experiment(run, family_for(run, config.seed), config.n_paths,
                                                     config.p.value_or(2.0), stability_options(config, options));
    if (config.fail_on_blowup && res.moments.flagged_fraction > 0.0)
        throw NumericRangeError("classical EM blew up on a fraction " + format_double(res.moments.flagged_fraction) +
                                    " of paths",
                                {});

    std::string csv = csv_header(config, "t,moment,std_error");
    for (std::size_t i = 0; i < res.moments.times.size(); ++i)
        csv_row(csv, {res.moments.times[i], res.moments.values[i], res.moments.std_errors[i]});

    json decay = base_json(config);
    decay.update(fit_json(res));
    decay["p"] = res.moments.p;
    decay["delta"] = run.delta();
    decay["scheme"] = config.scheme == Variant::truncated ? "truncated" : "classical";
    return write_all(config, {{"moments.csv", csv}, {"decay.json", dump(decay)}});
}

std::vector<fs::path> run_equivalence(const ExperimentConfig& config, const RunOptions& options) {
    const Resolved r = resolve(config);
    const std::size_t m = require_m_sub(config);
    if (config.scheme != Variant::truncated) throw ConfigError({"scheme: equivalence runs the truncated scheme only"});
    const EquivalenceReport rep =
        equivalence_experiment(r.entry.problem, *r.policy, config.p.value_or(2.0), m, config.horizon, config.n_paths,
                               config.seed, config.c_star, stability_options(config, options));

    json j = base_json(config);
    j["delta"] = rep.delta;
    j["reference_delta"] = rep.reference_delta;
    j["p"] = config.p.value_or(2.0);
    j["coarse"] = fit_json(rep.coarse);
    j["reference"] = fit_json(rep.reference);
    j["degenerate"] = rep.degenerate;
    j["sign_agreement"] = rep.sign_agreement;
    j["separated_3se"] = rep.separated;
    if (rep.transfer) {
        const auto& t = *rep.transfer;
        j["transfer"] = {{"direction", "sdde_to_scheme"},
                         {"input_rate", number(t.input_rate)},
                         {"input_growth", number(t.input_growth)},
                         {"window_t", number(t.window_t)},
                         {"output_rate", number(t.output_rate)},
                         {"output_growth", number(t.output_growth)},
                         {"c_star", t.c_star}};
    } else {
        j["transfer"] = nullptr;
    }
    return write_all(config, {{"equivalence.json", dump(j)}});
}

std::vector<fs::path> run_check(const ExperimentConfig& config, const RunOptions&) {
    const Resolved r = resolve(config);
    const auto& problem = r.entry.problem;
    const auto& known = r.entry.known_constants;
    SampleSpec spec;
    spec.n_samples = config.n_samples;
    spec.seed = config.seed;

    json reports = json::array();
    reports.push_back(report_json(check_local_lipschitz(problem, config.lipschitz_radius, spec)));

    const std::optional<double> p = config.p ? config.p : known.p;
    if (p && *p > 2.0)
        reports.push_back(report_json(check_khasminskii(problem, *p, spec)));
    else
        reports.push_back(skipped_json(Assumption::khasminskii, "needs p > 2 from the config or the registry"));

    const std::optional<double> q = config.q ? config.q : known.q;
    if (!q)
        reports.push_back(skipped_json(Assumption::monotonicity_u, "needs q > 2 from the config or the registry"));
    else if (!r.entry.u_function)
        reports.push_back(skipped_json(Assumption::monotonicity_u, "no U function registered for this problem"));
    else
        reports.push_back(report_json(check_monotonicity_u(problem, *q, r.entry.u_function, spec)));

    reports.push_back(report_json(check_polynomial_growth(problem, r.rho, spec)));
    reports.push_back(report_json(check_holder_initial(problem.initial(), problem.tau(), spec)));

    json j = base_json(config);
    j["problem"] = config.problem_key;
    j["p"] = p ? json(*p) : json(nullptr);
    j["q"] = q ? json(*q) : json(nullptr);
    j["rho"] = r.rho;
    if (p && q) {
        j["two_p_exceeds_two_plus_rho_q"] = 2.0 * *p > (2.0 + r.rho) * *q;
    }
    j["reports"] = reports;
    return write_all(config, {{"conditions.json", dump(j)}});
}

}  // namespace sdde::cli
