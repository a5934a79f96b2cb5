#pragma once

#include "hk/constants.hpp"

#include <boost/math/quadrature/gauss.hpp>

#include <cmath>
#include <vector>

namespace hk::quad {

/// Full Gauss-Legendre rule on [-1,1], expanded from Boost's half-rule tables.
struct Rule {
    std::vector<double> x, w;
};

template <unsigned N>
const Rule& gauss_legendre() {
    static const Rule rule = [] {
        using G = boost::math::quadrature::gauss<double, N>;
        Rule r;
        const auto& a = G::abscissa();
        const auto& w = G::weights();
        for (std::size_t i = 0; i < a.size(); ++i) {
            if (a[i] == 0.0) {
                r.x.push_back(0.0);
                r.w.push_back(w[i]);
            } else {
                r.x.push_back(-a[i]);
                r.w.push_back(w[i]);
                r.x.push_back(a[i]);
                r.w.push_back(w[i]);
            }
        }
        return r;
    }();
    return rule;
}

/// Integrate f over [a,b] with the N-point rule.
template <unsigned N, class F>
double panel(F&& f, double a, double b) {
    const auto& r = gauss_legendre<N>();
    const double c = 0.5 * (a + b), h = 0.5 * (b - a);
    double s = 0.0;
    for (std::size_t i = 0; i < r.x.size(); ++i) s += r.w[i] * f(c + h * r.x[i]);
    return s * h;
}

/// Integrate over [a,b] with panels graded geometrically towards a (ratio 2),
/// the smallest panel having width (b-a)*2^{-levels}.
template <unsigned N, class F>
double graded_left(F&& f, double a, double b, int levels) {
    double s = 0.0;
    double hi = b;
    for (int k = 0; k < levels; ++k) {
        const double lo = a + 0.5 * (hi - a);
        s += panel<N>(f, lo, hi);
        hi = lo;
    }
    s += panel<N>(f, a, hi);
    return s;
}

/// Euler transform of an alternating series given its signed terms
/// (repeated averaging of the partial sums).
inline double euler_alternating_sum(const std::vector<double>& signed_terms) {
    const std::size_t n = signed_terms.size();
    if (n == 0) return 0.0;
    std::vector<double> partial(n);
    double s = 0.0;
    for (std::size_t k = 0; k < n; ++k) {
        s += signed_terms[k];
        partial[k] = s;
    }
    // Averaging passes shrink the vector by one each time.
    for (std::size_t pass = 0; pass + 1 < n; ++pass) {
        for (std::size_t k = 0; k + 1 < partial.size(); ++k) partial[k] = 0.5 * (partial[k] + partial[k + 1]);
        partial.pop_back();
    }
    return partial[0];
}

struct SineOptions {
    double u_max = 0.0;     // integrand negligible beyond this point
    double u_singular = 0.0; // first-cell grading is used if > 0 (singularity at 0)
    int grading_levels = 40;
    std::size_t max_cells = 200000;
    std::size_t euler_terms = 24;
};

/// I = int_0^inf g(u) sin(rho u) du, splitting at the zeros k pi / rho and
/// applying Gauss-Legendre on each cell. The first cell is graded towards 0.
/// If u_max is not reached within max_cells, the remaining alternating cell
/// contributions are summed with the Euler transform.
template <class G>
double sine_transform(G&& g, double rho, const SineOptions& opt) {
    const double cell = pi / rho;
    auto f = [&](double u) { return g(u) * std::sin(rho * u); };
    const std::size_t n_cells = static_cast<std::size_t>(std::ceil(opt.u_max / cell));
    double s = 0.0;
    const std::size_t direct = std::min(n_cells, opt.max_cells);
    for (std::size_t k = 0; k < direct; ++k) {
        const double a = k * cell, b = (k + 1) * cell;
        if (k == 0 && opt.u_singular > 0.0) {
            s += graded_left<20>(f, a, b, opt.grading_levels);
        } else {
            s += panel<20>(f, a, b);
        }
    }
    if (n_cells > direct) {
        std::vector<double> tail;
        for (std::size_t k = direct; k < direct + opt.euler_terms; ++k) tail.push_back(panel<20>(f, k * cell, (k + 1) * cell));
        s += euler_alternating_sum(tail);
    }
    return s;
}

/// Smooth (non-oscillatory at the scale of [0,u_max]) integral with grading at 0
/// and uniform panels of width <= max_width.
template <class F>
double graded_integral(F&& f, double u_max, double max_width, int levels) {
    const double first = std::min(u_max, max_width);
    double s = graded_left<20>(f, 0.0, first, levels);
    const int n = static_cast<int>(std::ceil((u_max - first) / max_width));
    for (int k = 0; k < n; ++k) {
        const double a = first + (u_max - first) * k / n, b = first + (u_max - first) * (k + 1) / n;
        s += panel<20>(f, a, b);
    }
    return s;
}

} // namespace hk::quad
