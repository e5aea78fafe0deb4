#include "sdde/config.hpp"

#include <charconv>
#include <cmath>
#include <fstream>
#include <map>
#include <set>
#include <sstream>

#include <json.hpp>

#include "sdde/conditions.hpp"
#include "sdde/errors.hpp"

namespace sdde::cli {

namespace {

std::string join_problems(const std::vector<std::string>& problems) {
    std::string out = "invalid configuration:";
    for (const auto& p : problems) out += "\n  " + p;
    return out;
}

std::string_view trim(std::string_view s) {
    const auto first = s.find_first_not_of(" \t\r");
    if (first == std::string_view::npos) return {};
    const auto last = s.find_last_not_of(" \t\r");
    return s.substr(first, last - first + 1);
}

std::optional<double> parse_double(std::string_view s) {
    s = trim(s);
    if (!s.empty() && s.front() == '+') s.remove_prefix(1);
    double v = 0.0;
    const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    if (ec != std::errc{} || ptr != s.data() + s.size() || s.empty()) return std::nullopt;
    return v;
}

std::optional<std::uint64_t> parse_unsigned(std::string_view s) {
    s = trim(s);
    std::uint64_t v = 0;
    const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    if (ec != std::errc{} || ptr != s.data() + s.size() || s.empty()) return std::nullopt;
    return v;
}

std::vector<std::string_view> split_list(std::string_view s) {
    std::vector<std::string_view> out;
    while (true) {
        const auto comma = s.find(',');
        out.push_back(trim(s.substr(0, comma)));
        if (comma == std::string_view::npos) break;
        s.remove_prefix(comma + 1);
    }
    return out;
}

/// M = tau / delta when that is an integer within 1e-9 relative.
std::optional<std::size_t> m_from_delta(double tau, double delta) {
    if (!(delta > 0.0)) return std::nullopt;
    const double ratio = tau / delta;
    const double m = std::round(ratio);
    if (m < 1.0 || std::fabs(m - ratio) > 1e-9 * ratio) return std::nullopt;
    return static_cast<std::size_t>(m);
}

}  // namespace

ConfigError::ConfigError(std::vector<std::string> problems)
    : std::runtime_error(join_problems(problems)), problems_(std::move(problems)) {}

std::optional<double> parse_step(std::string_view text) {
    text = trim(text);
    if (text.starts_with("2^")) {
        text.remove_prefix(2);
        int e = 0;
        const auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), e);
        if (ec != std::errc{} || ptr != text.data() + text.size() || text.empty()) return std::nullopt;
        return std::ldexp(1.0, e);
    }
    return parse_double(text);
}

ExperimentConfig parse_config(std::string_view text) {
    ExperimentConfig c;
    std::vector<std::string> errors;
    std::map<std::string, std::string> values;
    std::map<std::string, int> lines;

    int line_no = 0;
    std::size_t pos = 0;
    while (pos <= text.size()) {
        const auto nl = text.find('\n', pos);
        std::string_view line = text.substr(pos, nl == std::string_view::npos ? std::string_view::npos : nl - pos);
        pos = nl == std::string_view::npos ? text.size() + 1 : nl + 1;
        ++line_no;
        if (const auto hash = line.find('#'); hash != std::string_view::npos) line = line.substr(0, hash);
        line = trim(line);
        if (line.empty()) continue;
        const auto eq = line.find('=');
        if (eq == std::string_view::npos) {
            errors.push_back("line " + std::to_string(line_no) + ": expected 'key = value'");
            continue;
        }
        const std::string key(trim(line.substr(0, eq)));
        const std::string value(trim(line.substr(eq + 1)));
        if (key.empty()) {
            errors.push_back("line " + std::to_string(line_no) + ": empty key");
            continue;
        }
        if (values.contains(key)) {
            errors.push_back("line " + std::to_string(line_no) + ": duplicate key '" + key + "' (first on line " +
                             std::to_string(lines[key]) + ")");
            continue;
        }
        values[key] = value;
        lines[key] = line_no;
    }

    auto bad = [&](const std::string& key, const std::string& why) {
        errors.push_back(key + " (line " + std::to_string(lines[key]) + "): " + why);
    };
    auto real = [&](const std::string& key, auto&& assign) {
        if (auto it = values.find(key); it != values.end()) {
            if (auto v = parse_double(it->second); v && std::isfinite(*v))
                assign(*v);
            else
                bad(key, "expected a finite number, got '" + it->second + "'");
        }
    };
    auto count = [&](const std::string& key, auto&& assign) {
        if (auto it = values.find(key); it != values.end()) {
            if (auto v = parse_unsigned(it->second))
                assign(*v);
            else
                bad(key, "expected a nonnegative integer, got '" + it->second + "'");
        }
    };
    auto boolean = [&](const std::string& key, bool& out) {
        if (auto it = values.find(key); it != values.end()) {
            if (it->second == "true")
                out = true;
            else if (it->second == "false")
                out = false;
            else
                bad(key, "expected true or false, got '" + it->second + "'");
        }
    };

    static const std::set<std::string> known = {
        "problem",    "tau",         "initial",        "initial_value",   "m_sub",        "delta",
        "m_sub_list", "delta_list",  "reference_m_sub", "reference_delta", "horizon",     "n_paths",
        "p",          "q",           "q_bar",          "epsilon",         "h_hat",        "h3",
        "rho",        "seed",        "c_star",         "fit_window",      "sample_spacing", "batches",
        "output_dir", "scheme",      "fail_on_blowup", "record_stride",   "measure",      "n_samples",
        "lipschitz_radius"};
    for (const auto& [key, value] : values) {
        if (key.starts_with("param.")) {
            const std::string name = key.substr(6);
            if (name == "tau") {
                bad(key, "set the delay with 'tau'");
            } else if (auto v = parse_double(value); v && std::isfinite(*v)) {
                c.problem_params[name] = *v;
            } else {
                bad(key, "expected a finite number, got '" + value + "'");
            }
        } else if (!known.contains(key)) {
            bad(key, "unknown key");
        }
    }

    if (auto it = values.find("problem"); it != values.end()) {
        c.problem_key = it->second;
        if (!registry::contains(c.problem_key)) bad("problem", "unknown problem '" + c.problem_key + "'");
    } else {
        errors.push_back("problem: required");
    }

    real("tau", [&](double v) {
        if (v > 0.0) c.tau = v;
        else bad("tau", "must be positive");
    });

    if (auto it = values.find("initial"); it != values.end()) {
        InitialSpec spec;
        if (it->second == "constant") spec.kind = InitialKind::constant;
        else if (it->second == "linear") spec.kind = InitialKind::linear;
        else if (it->second == "zero") spec.kind = InitialKind::zero;
        else bad("initial", "expected constant, linear or zero");
        real("initial_value", [&](double v) { spec.value = v; });
        if (spec.kind == InitialKind::zero) spec.value = 0.0;
        c.initial = spec;
    } else if (values.contains("initial_value")) {
        bad("initial_value", "needs 'initial'");
    }

    // Step sizes
    auto step_to_m = [&](const std::string& key, std::string_view text) -> std::optional<std::size_t> {
        const auto d = parse_step(text);
        if (!d) {
            bad(key, "cannot read step size '" + std::string(text) + "'");
            return std::nullopt;
        }
        if (!(*d > 0.0 && *d <= 1.0)) {
            bad(key, "step size " + std::string(text) + " outside (0, 1]");
            return std::nullopt;
        }
        auto m = m_from_delta(c.tau, *d);
        if (!m) bad(key, "step size " + std::string(text) + " is not tau / M for an integer M");
        return m;
    };
    auto m_value = [&](const std::string& key) -> std::optional<std::size_t> {
        std::optional<std::size_t> out;
        count(key, [&](std::uint64_t v) {
            if (v == 0) bad(key, "must be >= 1");
            else if (c.tau / static_cast<double>(v) > 1.0) bad(key, "step size tau / M exceeds 1");
            else out = static_cast<std::size_t>(v);
        });
        return out;
    };

    if (values.contains("m_sub") && values.contains("delta")) bad("delta", "give either m_sub or delta");
    if (values.contains("m_sub")) c.m_sub = m_value("m_sub");
    if (values.contains("delta")) c.m_sub = step_to_m("delta", values["delta"]);

    if (values.contains("m_sub_list") && values.contains("delta_list"))
        bad("delta_list", "give either m_sub_list or delta_list");
    if (auto it = values.find("delta_list"); it != values.end()) {
        for (auto item : split_list(it->second))
            if (auto m = step_to_m("delta_list", item)) c.m_sub_list.push_back(*m);
    }
    if (auto it = values.find("m_sub_list"); it != values.end()) {
        for (auto item : split_list(it->second)) {
            auto v = parse_unsigned(item);
            if (!v || *v == 0) bad("m_sub_list", "entries must be integers >= 1");
            else c.m_sub_list.push_back(static_cast<std::size_t>(*v));
        }
    }
    if (values.contains("reference_m_sub") && values.contains("reference_delta"))
        bad("reference_delta", "give either reference_m_sub or reference_delta");
    if (values.contains("reference_m_sub")) c.reference_m_sub = m_value("reference_m_sub");
    if (values.contains("reference_delta")) c.reference_m_sub = step_to_m("reference_delta", values["reference_delta"]);

    real("horizon", [&](double v) {
        if (v >= 0.0) c.horizon = v;
        else bad("horizon", "must be >= 0");
    });
    count("n_paths", [&](std::uint64_t v) {
        if (v >= 1) c.n_paths = static_cast<std::size_t>(v);
        else bad("n_paths", "must be >= 1");
    });
    real("p", [&](double v) {
        if (v > 0.0) c.p = v;
        else bad("p", "must be positive");
    });
    real("q", [&](double v) {
        if (v > 2.0) c.q = v;
        else bad("q", "must exceed 2");
    });
    real("q_bar", [&](double v) {
        if (v >= 2.0) c.q_bar = v;
        else bad("q_bar", "must be >= 2");
    });
    real("epsilon", [&](double v) {
        if (v > 0.0 && v <= 0.25) c.epsilon = v;
        else bad("epsilon", "must lie in (0, 1/4]");
    });
    real("h_hat", [&](double v) {
        if (v >= 1.0) c.h_hat = v;
        else bad("h_hat", "must be >= 1");
    });
    real("h3", [&](double v) {
        if (v > 0.0) c.h3 = v;
        else bad("h3", "must be positive");
    });
    real("rho", [&](double v) {
        if (v > 0.0) c.rho = v;
        else bad("rho", "must be positive");
    });
    count("seed", [&](std::uint64_t v) { c.seed = v; });
    real("c_star", [&](double v) {
        if (v >= 1.0) c.c_star = v;
        else bad("c_star", "must be >= 1");
    });
    if (auto it = values.find("fit_window"); it != values.end()) {
        const auto parts = split_list(it->second);
        const auto lo = parts.size() == 2 ? parse_double(parts[0]) : std::nullopt;
        const auto hi = parts.size() == 2 ? parse_double(parts[1]) : std::nullopt;
        if (lo && hi && *lo >= 0.0 && *hi > *lo) c.fit_window = DecayWindow{*lo, *hi};
        else bad("fit_window", "expected 't_lo, t_hi' with 0 <= t_lo < t_hi");
    }
    real("sample_spacing", [&](double v) {
        if (v > 0.0) c.sample_spacing = v;
        else bad("sample_spacing", "must be positive");
    });
    count("batches", [&](std::uint64_t v) {
        if (v >= 2) c.batches = static_cast<std::size_t>(v);
        else bad("batches", "must be >= 2");
    });
    if (auto it = values.find("output_dir"); it != values.end()) {
        if (it->second.empty()) bad("output_dir", "must not be empty");
        else c.output_dir = it->second;
    }
    if (auto it = values.find("scheme"); it != values.end()) {
        if (it->second == "truncated") c.scheme = Variant::truncated;
        else if (it->second == "classical") c.scheme = Variant::classical;
        else bad("scheme", "expected truncated or classical");
    }
    boolean("fail_on_blowup", c.fail_on_blowup);
    count("record_stride", [&](std::uint64_t v) {
        if (v >= 1) c.record_stride = static_cast<std::size_t>(v);
        else bad("record_stride", "must be >= 1");
    });
    if (auto it = values.find("measure"); it != values.end()) {
        if (it->second == "strong_error") c.measure = Measure::strong_error;
        else if (it->second == "interpolation_gap") c.measure = Measure::interpolation_gap;
        else bad("measure", "expected strong_error or interpolation_gap");
    }
    count("n_samples", [&](std::uint64_t v) {
        if (v >= 1) c.n_samples = static_cast<std::size_t>(v);
        else bad("n_samples", "must be >= 1");
    });
    real("lipschitz_radius", [&](double v) {
        if (v > 0.0) c.lipschitz_radius = v;
        else bad("lipschitz_radius", "must be positive");
    });

    if (!errors.empty()) throw ConfigError(std::move(errors));
    return c;
}

ExperimentConfig load_config(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot read config file '" + path.string() + "'");
    std::ostringstream buf;
    buf << in.rdbuf();
    if (in.bad()) throw IoError("error while reading '" + path.string() + "'");
    return parse_config(buf.str());
}

Resolved resolve(const ExperimentConfig& config) {
    ParamMap params = config.problem_params;
    params["tau"] = config.tau;
    std::optional<ProblemRegistryEntry> entry;
    try {
        entry = registry::make(config.problem_key, params, config.initial);
    } catch (const std::exception& e) {
        throw ConfigError({std::string("problem: ") + e.what()});
    }
    Resolved r{std::move(*entry), 0.0, 0.0, 0.0, std::nullopt};

    const auto& known = r.entry.known_constants;
    if (config.rho) r.rho = *config.rho;
    else if (known.rho) r.rho = *known.rho;
    else throw ConfigError({"rho: required for problem '" + config.problem_key + "'"});
    if (config.h3) r.h3 = *config.h3;
    else if (known.h3) r.h3 = *known.h3;
    else r.h3 = estimate_h3(r.entry.problem, r.rho);

    r.h_hat = config.h_hat.value_or(std::max(1.0, r.h3));
    try {
        r.policy.emplace(r.h3, r.rho, r.h_hat, config.epsilon);
    } catch (const ArgumentError& e) {
        throw ConfigError({std::string("h_hat/h3/rho/epsilon: ") + e.what()});
    }
    return r;
}

std::string canonical_json(const ExperimentConfig& c) {
    using nlohmann::json;
    json j;
    j["problem"] = c.problem_key;
    j["params"] = json::object();
    for (const auto& [k, v] : c.problem_params) j["params"][k] = v;
    if (c.initial) {
        const char* kind = c.initial->kind == InitialKind::constant ? "constant"
                           : c.initial->kind == InitialKind::linear ? "linear"
                                                                    : "zero";
        j["initial"] = {{"kind", kind}, {"value", c.initial->value}};
    } else {
        j["initial"] = nullptr;
    }
    j["tau"] = c.tau;
    j["m_sub"] = c.m_sub ? json(*c.m_sub) : json(nullptr);
    j["m_sub_list"] = c.m_sub_list;
    j["reference_m_sub"] = c.reference_m_sub ? json(*c.reference_m_sub) : json(nullptr);
    j["horizon"] = c.horizon;
    j["n_paths"] = c.n_paths;
    j["p"] = c.p ? json(*c.p) : json(nullptr);
    j["q"] = c.q ? json(*c.q) : json(nullptr);
    j["q_bar"] = c.q_bar;
    j["epsilon"] = c.epsilon;
    j["h_hat"] = c.h_hat ? json(*c.h_hat) : json(nullptr);
    j["h3"] = c.h3 ? json(*c.h3) : json(nullptr);
    j["rho"] = c.rho ? json(*c.rho) : json(nullptr);
    j["seed"] = c.seed;
    j["c_star"] = c.c_star;
    j["fit_window"] = c.fit_window ? json::array({c.fit_window->t_lo, c.fit_window->t_hi}) : json(nullptr);
    j["sample_spacing"] = c.sample_spacing ? json(*c.sample_spacing) : json(nullptr);
    j["batches"] = c.batches;
    j["scheme"] = c.scheme == Variant::truncated ? "truncated" : "classical";
    j["fail_on_blowup"] = c.fail_on_blowup;
    j["record_stride"] = c.record_stride;
    j["measure"] = c.measure == Measure::strong_error ? "strong_error" : "interpolation_gap";
    j["n_samples"] = c.n_samples;
    j["lipschitz_radius"] = c.lipschitz_radius;
    return j.dump();
}

std::string config_hash(const ExperimentConfig& config) {
    std::uint64_t h = 0xcbf29ce484222325ull;
    for (unsigned char ch : canonical_json(config)) {
        h ^= ch;
        h *= 0x100000001b3ull;
    }
    char buf[17];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
    return buf;
}

}  // namespace sdde::cli
