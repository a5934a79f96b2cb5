#pragma once

#include "hk/pde_engine.hpp"

#include <cstdint>
#include <random>

namespace hk {

/// Per-path random source: a Mersenne twister seeded from (seed, index).
class PathRng {
public:
    PathRng(std::uint64_t seed, std::uint64_t index) : eng_(mix(mix(seed) ^ index)) {}

    static std::uint64_t mix(std::uint64_t z) {
        z += 0x9E3779B97F4A7C15ULL;
        z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
        z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
        return z ^ (z >> 31);
    }

    /// Uniform on the open interval (0,1).
    double uniform() {
        double u;
        do u = std::generate_canonical<double, 53>(eng_);
        while (u == 0.0);
        return u;
    }
    double exponential() { return -std::log(uniform()); }
    double normal() { return normal_(eng_); }

private:
    std::mt19937_64 eng_;
    std::normal_distribution<double> normal_;
};

/// Positive (alpha_half)-stable increment with E exp(-lambda S) = exp(-dt lambda^alpha_half),
/// by the Chambers-Mallows-Stuck (Kanter) representation.
inline double sample_subordinator_increment(double dt, double alpha_half, PathRng& rng) {
    if (!(alpha_half > 0.0 && alpha_half < 1.0)) throw domain_error("subordinator: alpha_half must lie in (0,1)");
    if (!(dt > 0.0)) throw domain_error("subordinator: dt must be positive");
    const double a = alpha_half;
    const double v = pi * rng.uniform(), w = rng.exponential();
    const double s = std::sin(a * v) / std::pow(std::sin(v), 1.0 / a) * std::pow(std::sin((1.0 - a) * v) / w, (1.0 - a) / a);
    const double out = std::pow(dt, 1.0 / a) * s;
    return out > 0.0 ? out : std::numeric_limits<double>::min();
}

/// Isotropic alpha-stable increment Z = sqrt(2S) G, so E exp(i xi.Z) = exp(-dt |xi|^alpha).
inline void sample_stable_increment(double dt, double alpha, int d, PathRng& rng, double* z) {
    const double S = alpha == 2.0 ? dt : sample_subordinator_increment(dt, 0.5 * alpha, rng);
    const double s = std::sqrt(2.0 * S);
    for (int k = 0; k < d; ++k) z[k] = s * rng.normal();
}

inline std::vector<double> sample_stable_increment(double dt, const ModelParams& p, PathRng& rng) {
    std::vector<double> z(p.d);
    sample_stable_increment(dt, p.alpha, p.d, rng, z.data());
    return z;
}

struct SimulationOptions {
    bool zero_drift = false;
    double substep_cfl = 0.1;
    double substep_floor = 1e-6; // relative to dt
    bool killing = false;        // record the weight exp(-int U_eps(X_s) ds) of each path
};

struct PathEnsemble {
    int d = 3;
    double alpha = 1.5;
    double kappa = 0.0;
    std::size_t n_paths = 0;
    std::vector<double> x0;
    double t_final = 0.0;
    double dt = 0.0;
    double epsilon = 0.0;
    std::uint64_t seed = 0;
    bool zero_drift = false;
    std::vector<double> positions; // n_paths x d, row major
    std::vector<double> weights;   // Feynman-Kac weights when killing is on, else empty
    std::uint64_t substeps = 0;
    std::uint64_t floor_hits = 0;

    const double* position(std::size_t i) const { return positions.data() + i * d; }
    double radius(std::size_t i) const {
        double s = 0.0;
        for (int k = 0; k < d; ++k) s += position(i)[k] * position(i)[k];
        return std::sqrt(s);
    }
    double mean_radius() const {
        double s = 0.0;
        for (std::size_t i = 0; i < n_paths; ++i) s += radius(i);
        return s / n_paths;
    }

    json to_json() const {
        return {{"d", d},         {"alpha", alpha},   {"kappa", kappa},           {"n_paths", n_paths},
                {"x0", x0},       {"t_final", t_final}, {"dt", dt},              {"epsilon", epsilon},
                {"seed", seed},   {"zero_drift", zero_drift}, {"substeps", substeps}, {"floor_hits", floor_hits},
                {"killing", !weights.empty()}, {"mean_radius", mean_radius()}};
    }
};

/**
 * Euler scheme for dX = -b_eps(X) dt + dZ with b_eps(x) = kappa x (|x|^2+eps)^{-alpha/2}.
 * Substeps are min(dt, cfl |X|_eps^alpha / kappa), floored at floor*dt (counted).
 * Without drift the stable increments are exact, so one step covers [0, t_final].
 * With killing on, path weights exp(-int U_eps) (trapezoid per substep) turn the
 * ensemble into a sample of e^{-tP} with P = (-Delta)^{alpha/2} + b_eps.grad + U_eps.
 * Path i draws from its own stream, so the ensemble does not depend on chunking.
 */
inline PathEnsemble simulate(const ModelParams& params, double eps, const std::vector<double>& x0, double t_final, double dt,
                             std::size_t n_paths, std::uint64_t seed, const SimulationOptions& opt = {}) {
    params.validate(ModelMode::drift);
    if (!(eps > 0.0)) throw domain_error("simulate: eps must be positive");
    if (static_cast<int>(x0.size()) != params.d) throw domain_error("simulate: x0 has wrong dimension");
    if (!(t_final > 0.0 && dt > 0.0)) throw domain_error("simulate: t_final and dt must be positive");
    if (n_paths == 0) throw domain_error("simulate: n_paths must be positive");
    PathEnsemble e;
    e.d = params.d;
    e.alpha = params.alpha;
    e.kappa = opt.zero_drift ? 0.0 : kappa(params);
    e.n_paths = n_paths;
    e.x0 = x0;
    e.t_final = t_final;
    e.dt = dt;
    e.epsilon = eps;
    e.seed = seed;
    e.zero_drift = opt.zero_drift;
    e.positions.resize(n_paths * params.d);
    if (opt.killing) e.weights.resize(n_paths);
    const int d = params.d;
    const double a = params.alpha, k = e.kappa, floor = opt.substep_floor * dt;
    const double uk = opt.killing ? a * kappa(params) * eps : 0.0;
    auto U = [&](double reg) { return uk * std::pow(reg, -0.5 * a - 1.0); };
    std::vector<double> z(d);
    for (std::size_t i = 0; i < n_paths; ++i) {
        PathRng rng(seed, i);
        double* x = e.positions.data() + i * d;
        std::copy(x0.begin(), x0.end(), x);
        double t = 0.0, kill = 0.0;
        auto reg_at = [&] {
            double r2 = 0.0;
            for (int c = 0; c < d; ++c) r2 += x[c] * x[c];
            return r2 + eps;
        };
        while (t < t_final) {
            const double reg = reg_at();
            double h = t_final - t;
            if (k > 0.0) {
                h = std::min({h, dt, opt.substep_cfl * std::pow(reg, 0.5 * a) / k});
                if (h < floor) {
                    h = std::min(floor, t_final - t);
                    ++e.floor_hits;
                }
            }
            if (t + h >= t_final * (1.0 - 1e-14)) h = t_final - t;
            sample_stable_increment(h, a, d, rng, z.data());
            const double pull = k * std::pow(reg, -0.5 * a) * h;
            for (int c = 0; c < d; ++c) x[c] += -pull * x[c] + z[c];
            if (uk > 0.0) kill += 0.5 * h * (U(reg) + U(reg_at()));
            t += h;
            ++e.substeps;
        }
        if (opt.killing) e.weights[i] = std::exp(-kill);
    }
    return e;
}

/// Histogram of an ensemble in (rho = |y|, mu = cos angle(y, x0)); mu refers
/// to the last axis when x0 = 0.
struct DensityHistogram {
    std::vector<double> rho_edges, mu_edges;
    std::vector<std::uint64_t> counts; // rho-major
    std::vector<double> volume, density, std_error;
    std::size_t n_paths = 0;
    std::size_t escapes = 0;

    std::size_t n_rho() const { return rho_edges.size() - 1; }
    std::size_t n_mu() const { return mu_edges.size() - 1; }
    std::size_t index(std::size_t i, std::size_t j) const { return i * n_mu() + j; }
    double retained_fraction() const { return double(n_paths - escapes) / n_paths; }
    double integrated_mass() const {
        double s = 0.0;
        for (std::size_t b = 0; b < counts.size(); ++b) s += density[b] * volume[b];
        return s;
    }

    void write_csv(std::ostream& os) const {
        os << "rho_lo,rho_hi,mu_lo,mu_hi,count,volume,density,std_error\n";
        char buf[160];
        for (std::size_t i = 0; i < n_rho(); ++i)
            for (std::size_t j = 0; j < n_mu(); ++j) {
                const std::size_t b = index(i, j);
                std::snprintf(buf, sizeof buf, "%.10g,%.10g,%.10g,%.10g,%llu,%.10g,%.10g,%.10g\n", rho_edges[i],
                              rho_edges[i + 1], mu_edges[j], mu_edges[j + 1], static_cast<unsigned long long>(counts[b]),
                              volume[b], density[b], std_error[b]);
                os << buf;
            }
    }
};

/// Volume of {a <= |y| < b, m1 <= mu < m2} in R^d.
inline double bin_volume(int d, double a, double b, double m1, double m2) {
    const double radial = (std::pow(b, d) - std::pow(a, d)) / d;
    if (d == 3) return 2.0 * pi * radial * (m2 - m1);
    // int (1-mu^2)^{(d-3)/2} dmu in the angle, where the integrand is smooth
    const double ang = quad::panel<20>([&](double th) { return std::pow(std::sin(th), d - 2); }, std::acos(m2), std::acos(m1));
    return sphere_area(d - 1) * radial * ang;
}

inline DensityHistogram histogram_points(int d, const std::vector<double>& pts, const std::vector<double>& axis,
                                         const std::vector<double>& rho_edges, const std::vector<double>& mu_edges,
                                         const std::vector<double>& weights = {}) {
    const std::size_t n = pts.size() / d;
    if (n == 0) throw domain_error("estimate_density: empty ensemble");
    auto increasing = [](const std::vector<double>& v) {
        return v.size() >= 2 && std::adjacent_find(v.begin(), v.end(), std::greater_equal<>()) == v.end();
    };
    if (!increasing(rho_edges) || rho_edges.front() < 0.0) throw domain_error("estimate_density: bad rho edges");
    if (!increasing(mu_edges) || mu_edges.front() < -1.0 || mu_edges.back() > 1.0)
        throw domain_error("estimate_density: bad mu edges");
    std::vector<double> u(d, 0.0);
    double an = 0.0;
    for (double c : axis) an += c * c;
    if (an > 0.0)
        for (int k = 0; k < d; ++k) u[k] = axis[k] / std::sqrt(an);
    else
        u[d - 1] = 1.0;
    DensityHistogram h;
    h.rho_edges = rho_edges;
    h.mu_edges = mu_edges;
    h.n_paths = n;
    h.counts.assign(h.n_rho() * h.n_mu(), 0);
    const bool weighted = !weights.empty();
    if (weighted && weights.size() != n) throw domain_error("estimate_density: weight count mismatch");
    std::vector<double> sw(h.counts.size(), 0.0), sw2(h.counts.size(), 0.0);
    for (std::size_t p = 0; p < n; ++p) {
        const double* y = pts.data() + p * d;
        double r2 = 0.0, dot = 0.0;
        for (int k = 0; k < d; ++k) {
            r2 += y[k] * y[k];
            dot += y[k] * u[k];
        }
        const double r = std::sqrt(r2), mu = r > 0.0 ? std::clamp(dot / r, -1.0, 1.0) : 1.0;
        const auto ir = std::upper_bound(rho_edges.begin(), rho_edges.end(), r) - rho_edges.begin() - 1;
        auto im = std::upper_bound(mu_edges.begin(), mu_edges.end(), mu) - mu_edges.begin() - 1;
        if (mu == mu_edges.back()) im = static_cast<long>(h.n_mu()) - 1;
        if (ir < 0 || ir >= static_cast<long>(h.n_rho()) || im < 0 || im >= static_cast<long>(h.n_mu())) {
            ++h.escapes;
            continue;
        }
        const std::size_t b = h.index(ir, im);
        ++h.counts[b];
        const double w = weighted ? weights[p] : 1.0;
        sw[b] += w;
        sw2[b] += w * w;
    }
    for (std::size_t i = 0; i < h.n_rho(); ++i)
        for (std::size_t j = 0; j < h.n_mu(); ++j) {
            const double v = bin_volume(d, rho_edges[i], rho_edges[i + 1], mu_edges[j], mu_edges[j + 1]);
            const std::size_t b = h.index(i, j);
            const double q = sw[b] / n; // binomial variance when unweighted
            h.volume.push_back(v);
            h.density.push_back(q / v);
            h.std_error.push_back(std::sqrt(std::max(sw2[b] / n - q * q, 0.0) / n) / v);
        }
    return h;
}

/// density = count / (n_paths * volume); out-of-range points are counted as escapes.
inline DensityHistogram estimate_density(const PathEnsemble& e, const std::vector<double>& rho_edges,
                                         const std::vector<double>& mu_edges = {-1.0, 1.0}) {
    return histogram_points(e.d, e.positions, e.x0, rho_edges, mu_edges, e.weights);
}

/// Merge of unweighted histograms over the same bins (commutative).
inline DensityHistogram merge(const DensityHistogram& a, const DensityHistogram& b) {
    if (a.rho_edges != b.rho_edges || a.mu_edges != b.mu_edges) throw domain_error("merge: bins differ");
    DensityHistogram h = a;
    h.n_paths = a.n_paths + b.n_paths;
    h.escapes = a.escapes + b.escapes;
    for (std::size_t k = 0; k < h.counts.size(); ++k) {
        h.counts[k] = a.counts[k] + b.counts[k];
        const double q = double(h.counts[k]) / h.n_paths;
        h.density[k] = q / h.volume[k];
        h.std_error[k] = std::sqrt(q * (1.0 - q) / h.n_paths) / h.volume[k];
    }
    return h;
}

inline std::vector<double> geometric_edges(double lo, double hi, int n, bool from_zero = true) {
    std::vector<double> e;
    if (from_zero) e.push_back(0.0);
    for (int k = 0; k <= n; ++k) e.push_back(lo * std::pow(hi / lo, double(k) / n));
    return e;
}

inline std::vector<double> uniform_edges(double lo, double hi, int n) {
    std::vector<double> e;
    for (int k = 0; k <= n; ++k) e.push_back(lo + (hi - lo) * k / n);
    return e;
}

/// Two-sample Kolmogorov-Smirnov statistic with the asymptotic p-value.
struct KsResult {
    double D = 0.0;
    double p_value = 1.0;
};

inline double kolmogorov_q(double lam) {
    if (lam < 1e-3) return 1.0;
    double s = 0.0;
    for (int k = 1; k <= 100; ++k) {
        const double term = std::exp(-2.0 * k * k * lam * lam);
        s += (k % 2 ? 2.0 : -2.0) * term;
        if (term < 1e-16) break;
    }
    return std::clamp(s, 0.0, 1.0);
}

inline KsResult ks_two_sample(std::vector<double> a, std::vector<double> b) {
    if (a.empty() || b.empty()) throw domain_error("ks_two_sample: empty sample");
    std::sort(a.begin(), a.end());
    std::sort(b.begin(), b.end());
    const double na = a.size(), nb = b.size();
    std::size_t i = 0, j = 0;
    double D = 0.0;
    while (i < a.size() && j < b.size()) {
        const double x = std::min(a[i], b[j]);
        while (i < a.size() && a[i] == x) ++i;
        while (j < b.size() && b[j] == x) ++j;
        D = std::max(D, std::abs(i / na - j / nb));
    }
    const double ne = std::sqrt(na * nb / (na + nb));
    return {D, kolmogorov_q((ne + 0.12 + 0.11 / ne) * D)};
}

/// One Monte Carlo mean against its closed form.
struct MeanCheck {
    std::string label;
    double argument = 0.0;
    double empirical = 0.0;
    double exact = 0.0;
    double std_error = 0.0;
    double z = 0.0;

    bool within(double k) const { return std::abs(z) <= k; }
    json to_json() const {
        return {{"label", label}, {"argument", argument}, {"empirical", empirical}, {"exact", exact},
                {"std_error", std_error}, {"z", z}};
    }
};

namespace detail {
template <class F>
MeanCheck mean_check(std::string label, double arg, double exact, std::size_t n, F&& draw) {
    double s = 0.0, s2 = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        const double v = draw(i);
        s += v;
        s2 += v * v;
    }
    MeanCheck c;
    c.label = std::move(label);
    c.argument = arg;
    c.empirical = s / n;
    c.std_error = std::sqrt(std::max(s2 / n - c.empirical * c.empirical, 0.0) / n);
    c.exact = exact;
    c.z = (c.empirical - exact) / std::max(c.std_error, 1e-300);
    return c;
}
} // namespace detail

/// Empirical Laplace transform of the subordinator at each lambda.
inline std::vector<MeanCheck> laplace_test(double dt, double alpha_half, const std::vector<double>& lambdas, std::size_t n,
                                           std::uint64_t seed) {
    std::vector<double> S(n);
    for (std::size_t i = 0; i < n; ++i) {
        PathRng rng(seed, i);
        S[i] = sample_subordinator_increment(dt, alpha_half, rng);
    }
    std::vector<MeanCheck> out;
    for (double lam : lambdas)
        out.push_back(detail::mean_check("laplace", lam, std::exp(-dt * std::pow(lam, alpha_half)), n,
                                         [&](std::size_t i) { return std::exp(-lam * S[i]); }));
    return out;
}

/// Empirical E cos(xi . Z) along the first axis and along the diagonal.
inline std::vector<MeanCheck> characteristic_test(double dt, const ModelParams& p, const std::vector<double>& xi_norms,
                                                  std::size_t n, std::uint64_t seed) {
    std::vector<double> Z(n * p.d);
    for (std::size_t i = 0; i < n; ++i) {
        PathRng rng(seed, i);
        sample_stable_increment(dt, p.alpha, p.d, rng, Z.data() + i * p.d);
    }
    std::vector<MeanCheck> out;
    for (double xi : xi_norms) {
        const double exact = std::exp(-dt * std::pow(xi, p.alpha));
        out.push_back(detail::mean_check("axis", xi, exact, n, [&](std::size_t i) { return std::cos(xi * Z[i * p.d]); }));
        const double c = xi / std::sqrt(double(p.d));
        out.push_back(detail::mean_check("diagonal", xi, exact, n, [&](std::size_t i) {
            double s = 0.0;
            for (int k = 0; k < p.d; ++k) s += Z[i * p.d + k];
            return std::cos(c * s);
        }));
    }
    return out;
}

struct McConfig {
    std::size_t n_paths = 1000000;
    double dt_fraction = 1e-2;   // dt = dt_fraction * t
    double substep_cfl = 0.005;  // near-origin resolution of drift and killing
    std::uint64_t seed = 20240601;
    int rho_bins = 14;
    int mu_bins = 4;
    std::size_t min_count = 200;
    double band_cap = 10.0;
    double sigma = 3.0;

    json to_json() const {
        return {{"n_paths", n_paths}, {"dt_fraction", dt_fraction}, {"substep_cfl", substep_cfl}, {"seed", seed}, {"rho_bins", rho_bins},
                {"mu_bins", mu_bins}, {"min_count", min_count}, {"band_cap", band_cap}, {"sigma", sigma}};
    }
};

namespace detail {
/// Bin average of f(rho, mu) over {rho in [a,b], mu in [m1,m2]} (d = 3).
template <class F>
double bin_average3(F&& f, double a, double b, double m1, double m2) {
    const auto& R = quad::gauss_legendre<8>();
    double s = 0.0, w = 0.0;
    for (std::size_t i = 0; i < R.x.size(); ++i) {
        const double rho = 0.5 * (a + b) + 0.5 * (b - a) * R.x[i];
        for (std::size_t j = 0; j < R.x.size(); ++j) {
            const double mu = 0.5 * (m1 + m2) + 0.5 * (m2 - m1) * R.x[j];
            const double wt = R.w[i] * R.w[j] * rho * rho;
            s += wt * f(rho, mu);
            w += wt;
        }
    }
    return s / w;
}
} // namespace detail

/**
 * Two-sided bound from paths: per-bin ratio density / avg(p_t(|x0-y|) phi_t(|y|))
 * with sigma-bands. Passes when every bin with at least min_count paths has its
 * band inside [1/band_cap, band_cap]; c = max(hi, 1/lo) over those bands.
 */
inline BoundReport mc_verify_two_sided(const ModelParams& params, double eps, const std::vector<double>& x0, double t,
                                       const McConfig& mc = {}) {
    params.validate(ModelMode::drift);
    if (params.d != 3) throw domain_error("mc_verify_two_sided: d = 3 only");
    const double a = params.alpha, sc = std::pow(t, 1.0 / a);
    const WeightProfile W(3, a, solve_beta(params).beta);
    const auto& K = detail::free_reference(a).kernel;
    SimulationOptions opt;
    opt.substep_cfl = mc.substep_cfl;
    const auto ens = simulate(params, eps, x0, t, mc.dt_fraction * t, mc.n_paths, mc.seed, opt);
    const double r0 = std::sqrt(x0[0] * x0[0] + x0[1] * x0[1] + x0[2] * x0[2]);
    const double lo_edge = std::max(2.0 * std::sqrt(eps), 0.02 * sc);
    auto redges = geometric_edges(lo_edge, 4.0 * sc + r0, mc.rho_bins, false);
    const auto h = estimate_density(ens, redges, uniform_edges(-1.0, 1.0, mc.mu_bins));
    BoundReport rep;
    rep.operation = "mc_verify_two_sided";
    rep.params = {{"model", {{"d", params.d}, {"alpha", a}, {"delta", params.delta}}},
                  {"eps", eps}, {"x0", x0}, {"t", t}, {"mc", mc.to_json()}, {"ensemble", ens.to_json()}};
    rep.columns = {"rho_lo", "rho_hi", "mu_lo", "mu_hi", "count", "density", "reference", "raw_ratio", "ratio", "ratio_lo", "ratio_hi"};
    double lo = std::numeric_limits<double>::infinity(), hi = 0.0, near_lo = lo, near_hi = 0.0;
    std::size_t used = 0, near_used = 0, sparse = 0;
    for (std::size_t i = 0; i < h.n_rho(); ++i)
        for (std::size_t j = 0; j < h.n_mu(); ++j) {
            const std::size_t b = h.index(i, j);
            const double ra = redges[i], rb = redges[i + 1], ma = h.mu_edges[j], mb = h.mu_edges[j + 1];
            const double pt = detail::bin_average3(
                [&](double rho, double mu) { return K.density(t, std::sqrt(std::max(rho * rho + r0 * r0 - 2 * rho * r0 * mu, 0.0))); },
                ra, rb, ma, mb);
            const double ref = detail::bin_average3(
                [&](double rho, double mu) {
                    return K.density(t, std::sqrt(std::max(rho * rho + r0 * r0 - 2 * rho * r0 * mu, 0.0))) * W.phi(t, rho);
                },
                ra, rb, ma, mb);
            const double ratio = h.density[b] / ref, band = mc.sigma * h.std_error[b] / ref;
            rep.add_row({ra, rb, ma, mb, double(h.counts[b]), h.density[b], ref, h.density[b] / pt, ratio, ratio - band, ratio + band});
            if (h.counts[b] < mc.min_count) {
                ++sparse;
                continue;
            }
            ++used;
            lo = std::min(lo, ratio - band);
            hi = std::max(hi, ratio + band);
            if (rb <= 0.5 * sc) {
                ++near_used;
                near_lo = std::min(near_lo, ratio - band);
                near_hi = std::max(near_hi, ratio + band);
            }
        }
    const double c = lo > 0.0 ? std::max(hi, 1.0 / lo) : std::numeric_limits<double>::infinity();
    rep.summary = {{"c", c},
                   {"band_cap", mc.band_cap},
                   {"bins_used", used},
                   {"bins_sparse", sparse},
                   {"near_origin_bins", near_used},
                   {"near_origin_band", {near_used ? near_lo : 0.0, near_hi}},
                   {"band", {lo, hi}},
                   {"escapes", h.escapes}};
    rep.pass = used > 0 && near_used > 0 && c <= mc.band_cap;
    return rep;
}

/// Mass of a piecewise-linear radial profile on [a,b] (d = 3).
inline double shell_mass(const RadialGrid& g, const Eigen::VectorXd& u, double a, double b) {
    double s = 0.0;
    for (std::size_t i = 0; i + 1 < g.size(); ++i) {
        const double lo = std::max(a, g.r[i]), hi = std::min(b, g.r[i + 1]);
        if (hi <= lo) continue;
        const double h = g.r[i + 1] - g.r[i];
        s += quad::panel<4>(
            [&](double r) { return 4.0 * pi * r * r * (u[i] + (u[i + 1] - u[i]) * (r - g.r[i]) / h); }, lo, hi);
    }
    return s;
}

/**
 * Cross-check of the path simulation against the radial engine: the shell
 * density of paths from x0 is compared with the adjoint evolution of the unit
 * shell at |x0| (equal by rotation invariance). In drift mode the paths carry
 * the U_eps killing weight so both sides describe e^{-tP}; the unweighted
 * discrepancy is reported alongside. The engine uncertainty is the change
 * between N and N/2 nodes; z = (mc - pde) / sqrt(se^2 + engine^2).
 */
inline BoundReport mc_vs_pde(const ModelParams& params, double eps, double r0, double t, bool free_mode,
                             const McConfig& mc = {}, const EngineConfig& cfg = {}) {
    params.validate(ModelMode::drift);
    if (params.d != 3) throw domain_error("mc_vs_pde: d = 3 only");
    const double a = params.alpha, sc = std::pow(t, 1.0 / a);
    const RadialGrid g = cfg.grid(), gc = cfg.grid(true);
    const auto mode = free_mode ? OperatorMode::free : OperatorMode::adjoint;
    const std::size_t node = g.nearest(r0);
    const double rho0 = g.r[node];
    const auto run = [&](const RadialGrid& grid) {
        const auto A = assemble(params, free_operator(grid, a), free_mode ? 0.0 : eps, mode);
        return shell_kernel(A, rho0, {t}, cfg.stepping);
    };
    const auto fine = run(g), coarse = run(gc);
    SimulationOptions opt;
    opt.zero_drift = free_mode;
    opt.killing = !free_mode;
    opt.substep_cfl = mc.substep_cfl;
    const auto ens = simulate(params, eps, {0.0, 0.0, rho0}, t, mc.dt_fraction * t, mc.n_paths, mc.seed, opt);
    const auto redges = geometric_edges(std::max(0.05 * sc, 2.0 * std::sqrt(eps)), 5.0 * sc + rho0, mc.rho_bins);
    const auto h = estimate_density(ens, redges);
    const auto hu = histogram_points(3, ens.positions, ens.x0, redges, {-1.0, 1.0});
    BoundReport rep;
    rep.operation = "mc_vs_pde";
    rep.params = {{"model", {{"d", params.d}, {"alpha", a}, {"delta", params.delta}}},
                  {"mode", free_mode ? "free" : "drift"}, {"eps", eps}, {"rho0", rho0}, {"t", t},
                  {"mc", mc.to_json()}, {"engine", cfg.to_json()}, {"ensemble", ens.to_json()}};
    rep.columns = {"rho_lo", "rho_hi", "count", "mc_density", "mc_se", "pde_density", "pde_uncertainty", "z", "z_unweighted"};
    const std::size_t need = free_mode ? mc.min_count : std::max<std::size_t>(mc.min_count, 500);
    double zmax = 0.0, zu_max = 0.0;
    std::size_t used = 0;
    for (std::size_t i = 0; i < h.n_rho(); ++i) {
        const double ra = redges[i], rb = redges[i + 1];
        const double pde = shell_mass(g, fine.result.snapshots[0], ra, rb) / h.volume[i];
        const double pdec = shell_mass(gc, coarse.result.snapshots[0], ra, rb) / h.volume[i];
        const double unc = std::abs(pde - pdec);
        const double z = (h.density[i] - pde) / std::sqrt(h.std_error[i] * h.std_error[i] + unc * unc);
        const double zu = (hu.density[i] - pde) / std::sqrt(hu.std_error[i] * hu.std_error[i] + unc * unc);
        rep.add_row({ra, rb, double(h.counts[i]), h.density[i], h.std_error[i], pde, unc, z, zu});
        if (h.counts[i] >= need) {
            ++used;
            zmax = std::max(zmax, std::abs(z));
            zu_max = std::max(zu_max, std::abs(zu));
        }
    }
    rep.summary = {{"max_abs_z", zmax}, {"max_abs_z_unweighted", zu_max}, {"sigma", mc.sigma},
                   {"bins_used", used}, {"min_count", need}, {"escapes", h.escapes}};
    rep.pass = used > 0 && zmax <= mc.sigma;
    return rep;
}

/// Zero-drift paths against the exact stable shell density.
inline BoundReport mc_zero_drift_check(const ModelParams& params, double r0, double t, const McConfig& mc = {}) {
    if (params.d != 3) throw domain_error("mc_zero_drift_check: d = 3 only");
    const double a = params.alpha, sc = std::pow(t, 1.0 / a);
    SimulationOptions opt;
    opt.zero_drift = true;
    const auto ens = simulate(params, 1.0, {0.0, 0.0, r0}, t, mc.dt_fraction * t, mc.n_paths, mc.seed, opt);
    const auto redges = geometric_edges(0.05 * sc, 5.0 * sc + r0, mc.rho_bins);
    const auto h = estimate_density(ens, redges);
    const auto& S = detail::free_reference(a).shell;
    BoundReport rep;
    rep.operation = "mc_zero_drift_check";
    rep.params = {{"model", {{"d", params.d}, {"alpha", a}}}, {"rho0", r0}, {"t", t}, {"mc", mc.to_json()}};
    rep.columns = {"rho_lo", "rho_hi", "count", "mc_density", "mc_se", "exact", "z"};
    double zmax = 0.0;
    std::size_t used = 0;
    for (std::size_t i = 0; i < h.n_rho(); ++i) {
        const double ra = redges[i], rb = redges[i + 1];
        double m = 0.0;
        const double w = (rb - ra) / 8.0;
        for (int k = 0; k < 8; ++k)
            m += quad::panel<10>([&](double r) { return 4.0 * pi * r * r * S(t, r, r0); }, ra + k * w, ra + (k + 1) * w);
        const double ex = m / h.volume[i];
        const double z = (h.density[i] - ex) / h.std_error[i];
        rep.add_row({ra, rb, double(h.counts[i]), h.density[i], h.std_error[i], ex, z});
        if (h.counts[i] >= mc.min_count) {
            ++used;
            zmax = std::max(zmax, std::abs(z));
        }
    }
    rep.summary = {{"max_abs_z", zmax}, {"sigma", mc.sigma}, {"bins_used", used}};
    rep.pass = used > 0 && zmax <= mc.sigma;
    return rep;
}

} // namespace hk
