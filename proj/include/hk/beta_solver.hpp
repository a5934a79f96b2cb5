#pragma once

#include "hk/constants.hpp"

#include <cmath>
#include <cstdio>
#include <functional>
#include <ostream>
#include <sstream>
#include <utility>
#include <vector>

namespace hk {

struct BetaSolution {
    double beta = 0.0;
    double residual = 0.0;
    std::pair<double, double> bracket{0.0, 0.0};
    int iterations = 0;
    int sign_changes = 0;      // number of sign changes found by the scan
    bool scan_monotone = true; // residual function monotone on the scan grid
};

/// Left-hand side of the beta equation,
/// 2^a Gamma(b/2) Gamma((d-b+a)/2) / ((b-a) Gamma((d-b)/2) Gamma((b-a)/2)).
inline double beta_lhs(double beta, const ModelParams& p) {
    const double a = p.alpha;
    const int d = p.d;
    if (!(beta > a && beta < d)) throw domain_error("beta_lhs: beta must lie in (alpha,d)");
    const double lg = log_gamma_fn(0.5 * beta) + log_gamma_fn(0.5 * (d - beta + a)) -
                      log_gamma_fn(0.5 * (d - beta)) - log_gamma_fn(0.5 * (beta - a));
    return std::exp(a * std::log(2.0) + lg) / (beta - a);
}

/// Same quantity written as gamma(b)/((b-a) gamma(b-a)).
inline double beta_lhs_gamma_form(double beta, const ModelParams& p) {
    return gamma_weight(beta, p.d) / ((beta - p.alpha) * gamma_weight(beta - p.alpha, p.d));
}

/// gamma(b)/gamma(b-a).
inline double gamma_ratio(double beta, const ModelParams& p) {
    return gamma_weight(beta, p.d) / gamma_weight(beta - p.alpha, p.d);
}

namespace detail {

// Scan g on [lo,hi] with n points, then bisect the sign change. If several
// sign changes exist the one closest to `prefer_hi ? hi : lo` is refined and
// the count is reported.
inline BetaSolution scan_and_bisect(const std::function<double(double)>& g, double lo, double hi,
                                    bool prefer_hi, const char* what) {
    const int n = 1000;
    std::vector<double> xs(n), gs(n);
    for (int i = 0; i < n; ++i) {
        xs[i] = lo + (hi - lo) * i / (n - 1);
        gs[i] = g(xs[i]);
    }
    BetaSolution sol;
    int up = 0, down = 0;
    int pick = -1;
    for (int i = 0; i + 1 < n; ++i) {
        const double dg = gs[i + 1] - gs[i];
        if (dg > 0) ++up;
        if (dg < 0) ++down;
        if ((gs[i] <= 0.0) != (gs[i + 1] <= 0.0)) {
            ++sol.sign_changes;
            if (pick < 0 || prefer_hi) pick = i;
        }
    }
    sol.scan_monotone = (up == 0 || down == 0);
    if (pick < 0) {
        std::ostringstream os;
        os << what << ": no sign change on [" << lo << ", " << hi << "]; scanned values:";
        for (int i = 0; i < n; i += n / 10) os << " g(" << xs[i] << ")=" << gs[i];
        os << " g(" << xs[n - 1] << ")=" << gs[n - 1];
        throw solver_error(os.str());
    }
    double a = xs[pick], b = xs[pick + 1];
    double ga = gs[pick];
    int it = 0;
    while (b - a > 1e-13 && it < 200) {
        const double m = 0.5 * (a + b);
        if (m <= a || m >= b) break;
        const double gm = g(m);
        if ((gm <= 0.0) == (ga <= 0.0)) {
            a = m;
            ga = gm;
        } else {
            b = m;
        }
        ++it;
    }
    sol.beta = 0.5 * (a + b);
    sol.bracket = {a, b};
    sol.iterations = it;
    sol.residual = std::abs(g(sol.beta));
    return sol;
}

} // namespace detail

/// Solve beta_lhs(beta) = kappa(delta) for beta in (alpha, d).
inline BetaSolution solve_beta(const ModelParams& p) {
    p.validate(ModelMode::drift);
    const double k = kappa(p);
    const double h = 1e-8 * (p.d - p.alpha);
    auto g = [&](double b) { return beta_lhs(b, p) - k; };
    return detail::scan_and_bisect(g, p.alpha + h, p.d - h, false, "solve_beta");
}

/// Solve delta c^2 = gamma(beta)/gamma(beta-alpha). The ratio is symmetric
/// about (d+alpha)/2 where it peaks at c^2; the branch [(d+alpha)/2, d) is
/// used so that beta -> d as delta -> 0.
inline BetaSolution solve_beta_schrodinger(const ModelParams& p) {
    p.validate(ModelMode::schrodinger);
    const double c = hardy_constant(p);
    const double target = p.delta * c * c;
    const double mid = 0.5 * (p.d + p.alpha);
    const double h = 1e-8 * (p.d - p.alpha);
    auto g = [&](double b) { return gamma_ratio(b, p) - target; };
    if (g(mid) <= 1e-12 * target) {
        // delta = 1 (up to roundoff): tangential root at the symmetry point.
        BetaSolution sol;
        sol.beta = mid;
        sol.bracket = {mid, mid};
        sol.residual = std::abs(g(mid));
        sol.sign_changes = 0;
        return sol;
    }
    return detail::scan_and_bisect(g, mid, p.d - h, false, "solve_beta_schrodinger");
}

/// Full set of derived constants for drift mode.
inline DerivedConstants derive_constants(const ModelParams& p) {
    p.validate(ModelMode::drift);
    DerivedConstants c;
    c.kappa = kappa(p);
    c.c_hardy = hardy_constant(p);
    c.beta = solve_beta(p).beta;
    c.r_crit = r_crit(p.delta);
    c.j_prime = j_prime(p);
    c.gamma_beta_ratio = gamma_ratio(c.beta, p);
    return c;
}

struct Fig1Row {
    double delta, beta, d_minus_beta, residual;
};

inline std::vector<Fig1Row> fig1_data(int d, double alpha, const std::vector<double>& delta_grid) {
    std::vector<Fig1Row> rows;
    rows.reserve(delta_grid.size());
    for (double delta : delta_grid) {
        if (!(delta > 0.0 && delta < 4.0)) throw domain_error("fig1_data: delta grid must lie in (0,4)");
        ModelParams p{d, alpha, delta, 0.0};
        const auto s = solve_beta(p);
        rows.push_back({delta, s.beta, d - s.beta, s.residual});
    }
    return rows;
}

/// Uniform grid of n points strictly inside (0,4).
inline std::vector<double> default_delta_grid(int n) {
    std::vector<double> g(n);
    for (int i = 0; i < n; ++i) g[i] = 4.0 * (i + 0.5) / n;
    return g;
}

inline void write_fig1_csv(std::ostream& os, const std::vector<Fig1Row>& rows) {
    os << "delta,beta,d_minus_beta,residual\n";
    char buf[160];
    for (const auto& r : rows) {
        std::snprintf(buf, sizeof buf, "%.10g,%.15g,%.15g,%.3e\n", r.delta, r.beta, r.d_minus_beta, r.residual);
        os << buf;
    }
}

} // namespace hk
