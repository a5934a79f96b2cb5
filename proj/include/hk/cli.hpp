#pragma once

#include "hk/mc_sim.hpp"

#include <algorithm>
#include <cstdint>
#include <cstdio>
#include <limits>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

namespace hk::cli {

/// Bad flags, unknown options or an unreadable config (exit code 2).
struct usage_error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

inline const std::vector<std::string>& command_names() {
    static const std::vector<std::string> names{"constants", "fig1",     "identities", "kernel",
                                                "bounds",    "simulate", "verify-all"};
    return names;
}

/// Preset defaults of every command section; user options may only override these keys.
inline json preset_defaults(const std::string& preset) {
    if (preset != "quick" && preset != "full") throw usage_error("preset must be quick or full, got '" + preset + "'");
    const bool full = preset == "full";
    json o;
    o["fig1"] = {{"points", 50}};
    o["identities"] = {{"lyapunov_deltas", {0.25, 1.0, 2.0, 3.5}},
                       {"riesz_deltas", {0.25, 1.0, 3.5}},
                       {"divergence_eps", {1e-2, 1e-3, 1e-4}},
                       {"near_optimizer_n", 100.0}};
    o["kernel"] = {{"alpha", nullptr},
                   {"t", 1.0},
                   {"rho_min", 1e-3},
                   {"rho_max", 1e3},
                   {"points", full ? 241 : 121},
                   {"convolution", full}};
    o["bounds"] = {{"nodes", full ? 1024 : 512},
                   {"eps_list", full ? json{1e-2, 1e-3, 1e-4} : json{1e-2, 1e-3}},
                   {"t_list", full ? json{0.01, 0.03, 0.1, 0.3, 1.0} : json{0.01, 0.1, 1.0}},
                   {"rho_rel", full ? json{0.01, 0.03, 0.1, 0.3, 1.0, 3.0} : json{0.01, 0.1, 1.0, 3.0}},
                   {"two_sided_rho_rel", full ? json{0.03, 0.1, 0.3, 1.0, 3.0} : json{0.1, 1.0, 3.0}},
                   {"growth_times", {0.05, 0.25, 1.0}},
                   {"schrodinger_delta", 0.5},
                   {"duhamel_t", 0.5},
                   {"duhamel_eps", 1e-3}};
    o["simulate"] = {{"t", 1.0},
                     {"dt_fraction", 1e-2},
                     {"cf_samples", full ? 1000000 : 100000},
                     {"cf_arguments", {0.5, 1.0, 2.0}},
                     {"zero_drift_paths", full ? 1000000 : 100000},
                     {"zero_drift_r0", 0.5},
                     {"two_sided_paths", full ? 1000000 : 100000},
                     {"two_sided_cfl", full ? 0.1 : 0.02},
                     {"two_sided_eps", 1e-4},
                     {"two_sided_height", 0.3},
                     {"compare_paths", full ? 1000000 : 100000},
                     {"compare_cfl", 0.005},
                     {"compare_eps", full ? json{1e-2, 1e-3} : json{1e-2}},
                     {"compare_nodes", full ? 1024 : 512},
                     {"compare_r0", 0.3}};
    return o;
}

/// One invocation: command, model, per-command options, output directory and seed.
struct RunConfig {
    std::string command = "verify-all";
    ModelParams params{3, 1.5, 1.0, 1e-3};
    json options = json::object();
    std::string out_dir = "out";
    std::uint64_t seed = 20240601;
    std::string preset = "quick";

    /// Everything that determines the outputs, with options resolved against the preset
    /// (the output directory does not enter).
    json identity() const {
        const json defaults = preset_defaults(preset);
        json resolved = json::object();
        for (const auto& [k, v] : defaults.items()) resolved[k] = section(k);
        return {{"command", command},
                {"model", {{"d", params.d}, {"alpha", params.alpha}, {"delta", params.delta}, {"epsilon", params.epsilon}}},
                {"seed", seed},
                {"preset", preset},
                {"options", resolved}};
    }

    json to_json() const {
        json j = identity();
        j["options"] = options;
        j["out"] = out_dir;
        return j;
    }

    /// FNV-1a of the canonical identity dump, as 16 hex digits.
    std::string hash() const {
        std::uint64_t h = 0xcbf29ce484222325ULL;
        for (unsigned char c : identity().dump()) {
            h ^= c;
            h *= 0x100000001b3ULL;
        }
        char buf[17];
        std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
        return buf;
    }

    /// Options of one command: preset defaults patched with the user's section.
    json section(const std::string& name) const {
        json s = preset_defaults(preset).at(name);
        if (options.contains(name)) {
            const auto& user = options.at(name);
            if (!user.is_object()) throw usage_error("options." + name + " must be an object");
            for (const auto& [k, v] : user.items()) {
                if (!s.contains(k)) throw usage_error("unknown option " + name + "." + k);
                s[k] = v;
            }
        }
        return s;
    }

    static RunConfig from_json(const json& j) {
        if (!j.is_object()) throw usage_error("config must be a JSON object");
        static const std::vector<std::string> keys{"command", "model", "seed", "preset", "options", "out"};
        for (const auto& [k, v] : j.items())
            if (std::find(keys.begin(), keys.end(), k) == keys.end()) throw usage_error("unknown config key '" + k + "'");
        RunConfig c;
        try {
            if (j.contains("command")) c.command = j.at("command").get<std::string>();
            if (j.contains("model")) {
                const auto& m = j.at("model");
                for (const auto& [k, v] : m.items())
                    if (k != "d" && k != "alpha" && k != "delta" && k != "epsilon")
                        throw usage_error("unknown model key '" + k + "'");
                if (m.contains("d")) c.params.d = m.at("d").get<int>();
                if (m.contains("alpha")) c.params.alpha = m.at("alpha").get<double>();
                if (m.contains("delta")) c.params.delta = m.at("delta").get<double>();
                if (m.contains("epsilon")) c.params.epsilon = m.at("epsilon").get<double>();
            }
            if (j.contains("seed")) c.seed = j.at("seed").get<std::uint64_t>();
            if (j.contains("preset")) c.preset = j.at("preset").get<std::string>();
            if (j.contains("options")) c.options = j.at("options");
            if (j.contains("out")) c.out_dir = j.at("out").get<std::string>();
        } catch (const json::exception& e) {
            throw usage_error(std::string("config: ") + e.what());
        }
        c.validate();
        return c;
    }

    void validate() const {
        if (std::find(command_names().begin(), command_names().end(), command) == command_names().end())
            throw usage_error("unknown command '" + command + "'");
        const auto defaults = preset_defaults(preset);
        if (!options.is_object()) throw usage_error("options must be an object");
        for (const auto& [k, v] : options.items())
            if (!defaults.contains(k)) throw usage_error("unknown options section '" + k + "'");
        for (const auto& [k, v] : options.items()) section(k);
    }
};

/// A named output file and its exact bytes.
struct Output {
    std::string name;
    std::string content;
};

struct CommandResult {
    std::vector<Output> files;
    json summary = json::object();
    bool pass = true;

    void merge(CommandResult other) {
        for (auto& f : other.files) files.push_back(std::move(f));
        pass = pass && other.pass;
    }
};

namespace detail {

inline std::string csv_with_hash(const std::string& body, const std::string& hash) {
    return body + "# config_hash=" + hash + "\n";
}

inline std::string bound_csv(const BoundReport& r, const std::string& hash) {
    std::ostringstream os;
    r.write_csv(os);
    return csv_with_hash(os.str(), hash);
}

inline json header(const RunConfig& c, const std::string& command) {
    json j;
    j["command"] = command;
    j["config_hash"] = c.hash();
    j["model"] = c.identity()["model"];
    j["seed"] = c.seed;
    j["preset"] = c.preset;
    return j;
}

inline std::string dump(const json& j) { return j.dump(2) + "\n"; }

inline std::string fmt(const char* f, double v) {
    char buf[48];
    std::snprintf(buf, sizeof buf, f, v);
    return buf;
}

template <class T>
std::vector<T> list(const json& s, const char* key) {
    return s.at(key).get<std::vector<T>>();
}

inline EngineConfig engine_config(const json& s) {
    EngineConfig cfg;
    cfg.nodes = s.at("nodes").get<int>();
    cfg.eps_list = list<double>(s, "eps_list");
    if (cfg.nodes < 64) throw usage_error("bounds.nodes must be at least 64");
    return cfg;
}

} // namespace detail

/// Derived constants; delta up to 4 and alpha up to 2 are allowed here (beta only inside drift range).
inline CommandResult cmd_constants(const RunConfig& c) {
    const ModelParams& p = c.params;
    p.validate(ModelMode::oracle);
    if (p.d < 3) throw domain_error("d must be >= 3");
    json j = detail::header(c, "constants");
    json k;
    k["kappa"] = kappa(p);
    k["kappa_from_hardy"] = kappa_from_hardy(p);
    k["c_hardy"] = hardy_constant(p);
    k["r_crit"] = p.delta < 4.0 ? json(r_crit(p.delta)) : json(nullptr);
    k["j_prime"] = j_prime(p);
    k["rellich_F"] = rellich_F(p.alpha, p.d);
    k["rellich_c"] = p.alpha < 2.0 ? json(rellich_c(p.alpha, p.d)) : json(nullptr);
    const bool drift = p.alpha > 1.0 && p.alpha < 2.0 && p.delta < 4.0;
    if (drift) {
        const auto s = solve_beta(p);
        k["beta"] = s.beta;
        k["d_minus_beta"] = p.d - s.beta;
        k["gamma_beta_ratio"] = gamma_ratio(s.beta, p);
        k["beta_residual"] = s.residual;
        k["beta_sign_changes"] = s.sign_changes;
        k["weight"] = WeightProfile(p.d, p.alpha, s.beta).to_json();
    } else {
        k["beta"] = nullptr;
        j["note"] = "beta is defined for alpha in (1,2) and delta in (0,4)";
    }
    j["constants"] = k;
    const double kr = std::abs(k["kappa"].get<double>() - k["kappa_from_hardy"].get<double>()) /
                      std::max(std::abs(k["kappa"].get<double>()), 1e-300);
    j["kappa_formula_rel_diff"] = kr;
    CommandResult r;
    r.pass = kr < 1e-12 && (!drift || k["beta_residual"].get<double>() < 1e-10);
    j["pass"] = r.pass;
    r.summary = {{"pass", r.pass}};
    r.files.push_back({"constants.json", detail::dump(j)});
    return r;
}

/// d - beta over a uniform delta grid inside (0,4).
inline CommandResult cmd_fig1(const RunConfig& c) {
    c.params.validate(ModelMode::drift);
    const auto s = c.section("fig1");
    const int n = s.at("points").get<int>();
    if (n < 2) throw usage_error("fig1.points must be at least 2");
    const auto rows = fig1_data(c.params.d, c.params.alpha, default_delta_grid(n));
    std::ostringstream os;
    write_fig1_csv(os, rows);
    bool monotone = true;
    double worst = 0.0;
    for (std::size_t i = 0; i < rows.size(); ++i) {
        worst = std::max(worst, rows[i].residual);
        if (i && !(rows[i].d_minus_beta > rows[i - 1].d_minus_beta)) monotone = false;
    }
    CommandResult r;
    r.pass = monotone && worst < 1e-10;
    json j = detail::header(c, "fig1");
    j["options"] = s;
    j["points"] = rows.size();
    j["monotone"] = monotone;
    j["max_residual"] = worst;
    j["endpoints"] = {{"delta_min", rows.front().delta},
                      {"d_minus_beta_min", rows.front().d_minus_beta},
                      {"delta_max", rows.back().delta},
                      {"d_minus_beta_max", rows.back().d_minus_beta},
                      {"d_minus_alpha", c.params.d - c.params.alpha}};
    j["pass"] = r.pass;
    r.summary = {{"pass", r.pass}};
    r.files.push_back({"fig1.csv", detail::csv_with_hash(os.str(), c.hash())});
    r.files.push_back({"fig1.json", detail::dump(j)});
    return r;
}

/// Lyapunov balance, Riesz potentials, Hardy-Rellich, drift divergence, F(alpha), bridge.
inline CommandResult cmd_identities(const RunConfig& c) {
    const ModelParams& p = c.params;
    p.validate(ModelMode::drift);
    const auto s = c.section("identities");
    json j = detail::header(c, "identities");
    j["options"] = s;
    bool pass = true;

    json lyap = json::array();
    double const_res = 0.0;
    for (double dl : detail::list<double>(s, "lyapunov_deltas")) {
        const auto rep = lyapunov_balance_check(ModelParams{p.d, p.alpha, dl, 0.0});
        const_res = std::max(const_res, rep.extra["constant_residual"].get<double>());
        pass = pass && rep.pass;
        lyap.push_back(rep.to_json());
    }
    j["lyapunov"] = lyap;
    j["constant_identity"] = {{"max_residual", const_res}, {"tolerance", 1e-10}, {"pass", const_res < 1e-10}};
    pass = pass && const_res < 1e-10;

    json power = json::array();
    double power_worst = 0.0;
    for (double dl : detail::list<double>(s, "riesz_deltas")) {
        const ModelParams q{p.d, p.alpha, dl, 0.0};
        const double beta = solve_beta(q).beta, e = beta - p.alpha - p.d;
        const RadialFunction f([e](double r) { return std::pow(r, e); }, -e, e);
        RieszConfig rc;
        rc.d = p.d;
        rc.order = p.alpha;
        for (double r : {0.1, 1.0, 10.0}) {
            const double exact = gamma_weight(beta - p.alpha, p.d) / gamma_weight(beta, p.d) * std::pow(r, beta - p.d);
            const double rel = std::abs(riesz_radial(f, r, rc) / exact - 1.0);
            power_worst = std::max(power_worst, rel);
            power.push_back({{"delta", dl}, {"r", r}, {"rel_error", rel}});
        }
    }
    j["riesz_power_law"] = {{"rows", power}, {"max_rel_error", power_worst}, {"tolerance", 1e-3}, {"pass", power_worst < 1e-3}};
    pass = pass && power_worst < 1e-3;

    {
        RieszConfig inner, outer, both;
        inner.d = outer.d = both.d = p.d;
        inner.order = 1.0;
        outer.order = p.alpha - 1.0;
        both.order = p.alpha;
        inner.levels = outer.levels = 30;
        inner.cut_factor = outer.cut_factor = 1e3;
        const RadialFunction g([](double r) { return std::exp(-r * r); }, infinite_decay, 0.0);
        const RadialFunction Ig([&](double r) { return riesz_radial(g, r, inner); }, p.d - 1.0, 0.0, {}, {}, false);
        json rows = json::array();
        double worst = 0.0;
        for (double r : {0.5, 2.0}) {
            const double rel = std::abs(riesz_radial(Ig, r, outer) / riesz_radial(g, r, both) - 1.0);
            worst = std::max(worst, rel);
            rows.push_back({{"r", r}, {"rel_error", rel}});
        }
        j["riesz_composition"] = {{"orders", {inner.order, outer.order}}, {"rows", rows}, {"max_rel_error", worst},
                                  {"tolerance", 1e-3}, {"pass", worst < 1e-3}};
        pass = pass && worst < 1e-3;
    }

    if (p.d == 3) {
        const double c2 = std::pow(hardy_constant(p), 2);
        json fam = json::array();
        double min_q = std::numeric_limits<double>::infinity();
        for (const auto& pr : hardy_probe_family()) {
            const auto h = hardy_rellich_ratio(pr.f, p.d, p.alpha);
            min_q = std::min(min_q, h.ratio / c2);
            fam.push_back({{"profile", pr.name}, {"ratio_over_c2", h.ratio / c2}});
        }
        const auto near = hardy_near_optimizer(s.at("near_optimizer_n").get<double>(), p.d, p.alpha);
        const bool ok = min_q >= 1.0 - 1e-3 && near.ratio / c2 < 1.05 && near.ratio / c2 >= 1.0 - 1e-3;
        j["hardy_rellich"] = {{"c2", c2}, {"probe_family", fam}, {"min_ratio_over_c2", min_q},
                              {"near_optimizer_ratio_over_c2", near.ratio / c2}, {"pass", ok}};
        pass = pass && ok;
    } else {
        j["hardy_rellich"] = {{"skipped", "the Hankel transform is implemented for d = 3"}};
    }

    json div = json::array();
    std::vector<double> grid;
    for (int i = 0; i <= 40; ++i) grid.push_back(1e-3 * std::pow(1e6, i / 40.0));
    for (double e : detail::list<double>(s, "divergence_eps")) {
        ModelParams q = p;
        q.epsilon = e;
        const auto f = DriftFields::from(q);
        for (bool fd : {false, true}) {
            const auto rep = drift_divergence_check(f, grid, fd);
            pass = pass && rep.pass;
            div.push_back({{"epsilon", e}, {"derivative", fd ? "finite_difference" : "analytic"},
                           {"max_residual", rep.max_residual}, {"tolerance", rep.tolerance}, {"pass", rep.pass}});
        }
    }
    j["divergence"] = div;

    json F = json::array();
    double f2 = 0.0;
    for (int d = 3; d <= 10; ++d)
        for (double a : {0.5, 1.0, 1.25, 1.5, 1.75, 2.0}) {
            const double v = rellich_F(a, d);
            if (a == 2.0) f2 = std::max(f2, std::abs(v));
            F.push_back({{"d", d}, {"alpha", a}, {"F", v}});
        }
    j["rellich_F"] = {{"rows", F}, {"max_abs_F_at_2", f2}, {"tolerance", 1e-10}, {"pass", f2 < 1e-10}};
    pass = pass && f2 < 1e-10;

    const double kr = std::abs(kappa(p) - kappa_from_hardy(p)) / kappa(p);
    j["kappa_formulas"] = {{"kappa", kappa(p)}, {"rel_diff", kr}, {"tolerance", 1e-12}, {"pass", kr < 1e-12}};
    pass = pass && kr < 1e-12;

    j["bridge"] = WeightProfile(p.d, p.alpha, solve_beta(p).beta).to_json();
    j["pass"] = pass;
    CommandResult r;
    r.pass = pass;
    r.summary = {{"pass", pass}};
    r.files.push_back({"identities.json", detail::dump(j)});
    return r;
}

/// Stable density, comparator and gradient kernel on a log grid, plus k0..k3.
inline CommandResult cmd_kernel(const RunConfig& c) {
    const auto s = c.section("kernel");
    const double a = s.at("alpha").is_null() ? c.params.alpha : s.at("alpha").get<double>();
    const double t = s.at("t").get<double>(), lo = s.at("rho_min").get<double>(), hi = s.at("rho_max").get<double>();
    const int n = s.at("points").get<int>();
    if (!(a > 0.0 && a <= 2.0)) throw domain_error("kernel.alpha must lie in (0,2]");
    if (!(t > 0.0) || !(lo > 0.0) || !(hi > lo) || n < 2) throw usage_error("kernel: need t > 0, 0 < rho_min < rho_max, points >= 2");
    if (c.params.d < 3) throw domain_error("d must be >= 3");
    const int d = c.params.d;
    const StableKernel k(d, a);
    const bool cauchy = a == 1.0 && d == 3, gauss = a == 2.0;
    std::string body = "rho,p_t,comparator,E_t";
    if (cauchy) body += ",cauchy";
    if (gauss) body += ",gaussian";
    body += "\n";
    double closed_worst = 0.0;
    for (int i = 0; i < n; ++i) {
        const double rho = lo * std::pow(hi / lo, static_cast<double>(i) / (n - 1));
        const double p = k.density(t, rho);
        body += detail::fmt("%.10g", rho) + "," + detail::fmt("%.12g", p) + "," + detail::fmt("%.12g", k.comparator(t, rho)) + "," +
                detail::fmt("%.12g", k.E_kernel(t, rho));
        if (cauchy || gauss) {
            const double ref = cauchy ? t / (pi * pi * std::pow(t * t + rho * rho, 2))
                                      : std::pow(4.0 * pi * t, -0.5 * d) * std::exp(-rho * rho / (4.0 * t));
            body += "," + detail::fmt("%.12g", ref);
            if (ref > 1e-280) closed_worst = std::max(closed_worst, std::abs(p / ref - 1.0));
        }
        body += "\n";
    }
    json j = detail::header(c, "kernel");
    j["options"] = s;
    j["alpha"] = a;
    bool pass = true;
    if (d == 3) {
        const double m = k.mass();
        j["mass"] = m;
        pass = pass && std::abs(m - 1.0) < 1e-6;
    }
    if (cauchy || gauss) {
        const double tol = cauchy ? 1e-6 : 1e-8;
        j["closed_form"] = {{"kind", cauchy ? "cauchy" : "gaussian"}, {"max_rel_error", closed_worst}, {"tolerance", tol}};
        pass = pass && closed_worst < tol;
    }
    if (a < 2.0) {
        const double k0 = calibrate_k0(k, 400), k0r = calibrate_k0(k, 801);
        const auto g = check_gradient_bound(k);
        json cs = {{"k0", k0}, {"k0_refined", k0r}, {"k1", g.value}, {"k1_refined", g.value_refined}};
        bool stable = std::abs(k0r / k0 - 1.0) < 0.1 && g.relative_change < 0.1 && std::isfinite(k0) && std::isfinite(g.value);
        if (s.at("convolution").get<bool>() && d == 3) {
            const auto cv = check_convolution_inequalities(k);
            cs["k2"] = cv.k2;
            cs["k2_refined"] = cv.k2_refined;
            cs["k3"] = cv.k3;
            cs["k3_refined"] = cv.k3_refined;
            stable = stable && std::abs(cv.k2_refined / cv.k2 - 1.0) < 0.1 && std::abs(cv.k3_refined / cv.k3 - 1.0) < 0.1;
        }
        cs["stable"] = stable;
        j["constants"] = cs;
        pass = pass && stable;
    }
    j["pass"] = pass;
    CommandResult r;
    r.pass = pass;
    r.summary = {{"pass", pass}};
    r.files.push_back({"kernel.csv", detail::csv_with_hash(body, c.hash())});
    r.files.push_back({"kernel.json", detail::dump(j)});
    return r;
}

/// Engine estimate suite; one CSV per report plus a PASS/FAIL table.
inline CommandResult cmd_bounds(const RunConfig& c) {
    const ModelParams& p = c.params;
    p.validate(ModelMode::drift);
    const auto s = c.section("bounds");
    const auto cfg = detail::engine_config(s);
    const auto t_list = detail::list<double>(s, "t_list");
    const auto rho_rel = detail::list<double>(s, "rho_rel");
    const auto growth = detail::list<double>(s, "growth_times");
    const ModelParams schr{p.d, p.alpha, s.at("schrodinger_delta").get<double>(), 0.0};

    std::vector<std::pair<std::string, BoundReport>> reps;
    reps.emplace_back("nie", verify_nie(p, t_list, rho_rel, cfg));
    reps.emplace_back("two_sided", verify_two_sided(p, t_list, detail::list<double>(s, "two_sided_rho_rel"), cfg));
    reps.emplace_back("s1_decay", verify_S1(p, 2.0 * r_crit(p.delta), cfg));
    reps.emplace_back("s4_growth", verify_S4(p, 1.0, growth, {}, cfg));
    reps.emplace_back("integral_lower", verify_integral_lower(p, 1.0, growth, {}, cfg));
    reps.emplace_back("adjoint_mass", verify_adjoint_mass(p, {}, 0.25, cfg));
    reps.emplace_back("supersolution", verify_weight_supersolution(p, 1.0, cfg));
    reps.emplace_back("adjoint_weight", verify_adjoint_weight_bound(p, 1.0, cfg));
    reps.emplace_back("duhamel", verify_duhamel(p, s.at("duhamel_t").get<double>(), s.at("duhamel_eps").get<double>(), 16, cfg));
    reps.emplace_back("schrodinger", schrodinger_nie(schr, t_list, rho_rel, cfg));

    CommandResult r;
    json j = detail::header(c, "bounds");
    j["options"] = s;
    json table = json::array(), full = json::object();
    std::string summary_csv = "check,status\n";
    for (const auto& [name, rep] : reps) {
        r.pass = r.pass && rep.pass;
        table.push_back({{"check", name}, {"status", rep.pass ? "PASS" : "FAIL"}});
        summary_csv += name + "," + (rep.pass ? "PASS" : "FAIL") + "\n";
        full[name] = rep.to_json();
        r.files.push_back({"bounds_" + name + ".csv", detail::bound_csv(rep, c.hash())});
    }
    j["table"] = table;
    j["pass"] = r.pass;
    j["reports"] = full;
    r.summary = {{"pass", r.pass}, {"table", table}};
    r.files.push_back({"bounds_summary.csv", detail::csv_with_hash(summary_csv, c.hash())});
    r.files.push_back({"bounds.json", detail::dump(j)});
    return r;
}

/// Monte Carlo reports: increment laws, zero-drift reduction, two-sided bands, engine comparison.
inline CommandResult cmd_simulate(const RunConfig& c) {
    const ModelParams& p = c.params;
    p.validate(ModelMode::drift);
    if (p.d != 3) throw domain_error("simulate: d = 3 only");
    const auto s = c.section("simulate");
    const double t = s.at("t").get<double>();
    const auto args = detail::list<double>(s, "cf_arguments");
    const auto n_cf = s.at("cf_samples").get<std::size_t>();
    auto mc_with = [&](const char* paths, double cfl) {
        McConfig mc;
        mc.n_paths = s.at(paths).get<std::size_t>();
        mc.dt_fraction = s.at("dt_fraction").get<double>();
        mc.substep_cfl = cfl;
        mc.seed = c.seed;
        return mc;
    };

    CommandResult r;
    json j = detail::header(c, "simulate");
    j["options"] = s;

    auto lap = laplace_test(t, 0.5 * p.alpha, args, n_cf, c.seed);
    const auto chf = characteristic_test(t, p, args, n_cf, c.seed + 1);
    lap.insert(lap.end(), chf.begin(), chf.end());
    json cf = json::array();
    std::string cf_csv = "test,argument,empirical,exact,std_error,z\n";
    double zmax = 0.0;
    for (const auto& m : lap) {
        cf.push_back(m.to_json());
        zmax = std::max(zmax, std::abs(m.z));
        cf_csv += m.label + "," + detail::fmt("%.10g", m.argument) + "," + detail::fmt("%.12g", m.empirical) + "," +
                  detail::fmt("%.12g", m.exact) + "," + detail::fmt("%.6g", m.std_error) + "," + detail::fmt("%.6g", m.z) + "\n";
    }
    const bool cf_ok = zmax <= 4.0;
    j["characteristic_function"] = {{"samples", n_cf}, {"checks", cf}, {"max_abs_z", zmax}, {"sigma", 4.0}, {"pass", cf_ok}};
    r.pass = cf_ok;
    r.files.push_back({"simulate_cf.csv", detail::csv_with_hash(cf_csv, c.hash())});

    json table = json::array();
    table.push_back({{"check", "characteristic_function"}, {"status", cf_ok ? "PASS" : "FAIL"}});
    auto add = [&](const std::string& name, const BoundReport& rep) {
        r.pass = r.pass && rep.pass;
        j[name] = rep.to_json();
        table.push_back({{"check", name}, {"status", rep.pass ? "PASS" : "FAIL"}});
        r.files.push_back({"simulate_" + name + ".csv", detail::bound_csv(rep, c.hash())});
    };

    const double cfl_default = SimulationOptions{}.substep_cfl;
    add("zero_drift", mc_zero_drift_check(p, s.at("zero_drift_r0").get<double>(), t, mc_with("zero_drift_paths", cfl_default)));
    add("two_sided", mc_verify_two_sided(p, s.at("two_sided_eps").get<double>(), {0.0, 0.0, s.at("two_sided_height").get<double>()}, t,
                                         mc_with("two_sided_paths", s.at("two_sided_cfl").get<double>())));
    EngineConfig cfg;
    cfg.nodes = s.at("compare_nodes").get<int>();
    const auto cmc = mc_with("compare_paths", s.at("compare_cfl").get<double>());
    const double r0 = s.at("compare_r0").get<double>();
    const auto eps_list = detail::list<double>(s, "compare_eps");
    add("compare_free", mc_vs_pde(p, eps_list.front(), r0, t, true, cmc, cfg));
    for (double e : eps_list) add("compare_eps_" + detail::fmt("%g", e), mc_vs_pde(p, e, r0, t, false, cmc, cfg));

    j["table"] = table;
    j["pass"] = r.pass;
    r.summary = {{"pass", r.pass}, {"table", table}};
    r.files.push_back({"simulate.json", detail::dump(j)});
    return r;
}

inline CommandResult run(const RunConfig& c);

/// Every command into one directory, plus an overall table.
inline CommandResult cmd_verify_all(const RunConfig& c) {
    CommandResult all;
    json table = json::array();
    for (const auto& name : command_names()) {
        if (name == "verify-all") continue;
        RunConfig sub = c;
        sub.command = name;
        auto r = run(sub);
        table.push_back({{"command", name}, {"status", r.pass ? "PASS" : "FAIL"}});
        all.merge(std::move(r));
    }
    json j = detail::header(c, "verify-all");
    j["table"] = table;
    j["pass"] = all.pass;
    all.summary = {{"pass", all.pass}, {"table", table}};
    all.files.push_back({"verify_all.json", detail::dump(j)});
    return all;
}

inline CommandResult run(const RunConfig& c) {
    c.validate();
    const auto& n = c.command;
    if (n == "constants") return cmd_constants(c);
    if (n == "fig1") return cmd_fig1(c);
    if (n == "identities") return cmd_identities(c);
    if (n == "kernel") return cmd_kernel(c);
    if (n == "bounds") return cmd_bounds(c);
    if (n == "simulate") return cmd_simulate(c);
    return cmd_verify_all(c);
}

} // namespace hk::cli
