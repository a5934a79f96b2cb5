#pragma once

#include "hk/beta_solver.hpp"
#include "hk/constants.hpp"
#include "hk/quadrature.hpp"
#include "hk/report.hpp"

#include <boost/math/quadrature/gauss.hpp>

#include <algorithm>
#include <cmath>
#include <complex>
#include <functional>
#include <limits>
#include <string>
#include <utility>
#include <vector>

namespace hk {

inline constexpr double infinite_decay = std::numeric_limits<double>::infinity();

/// |S^{n-1}| = 2 pi^{n/2} / Gamma(n/2).
inline double sphere_area(int n) { return 2.0 * std::pow(pi, 0.5 * n) / gamma_fn(0.5 * n); }

/// Radial profile r -> f(r) with its power behaviour at 0 and at infinity.
/// f ~ r^{singularity} near 0 and f ~ r^{-decay} near infinity; decay may be
/// infinite_decay for rapidly decaying or compactly supported profiles.
struct RadialFunction {
    std::function<double(double)> f;
    double decay = infinite_decay;
    double singularity = 0.0;
    std::function<double(double)> df;
    std::function<double(double)> d2f;

    RadialFunction() = default;
    RadialFunction(std::function<double(double)> fn, double decay_exp, double sing_exp,
                   std::function<double(double)> dfn = {}, std::function<double(double)> d2fn = {}, bool check = true)
        : f(std::move(fn)), decay(decay_exp), singularity(sing_exp), df(std::move(dfn)), d2f(std::move(d2fn)) {
        if (check) validate();
    }

    double operator()(double r) const { return f(r); }

    // Five-point differences with step r/100 when no analytic derivative is given.
    double derivative(double r) const {
        if (df) return df(r);
        const double h = 1e-2 * r;
        return (f(r - 2 * h) - 8.0 * f(r - h) + 8.0 * f(r + h) - f(r + 2 * h)) / (12.0 * h);
    }

    double second_derivative(double r) const {
        if (d2f) return d2f(r);
        const double h = 1e-2 * r;
        return (-f(r - 2 * h) + 16.0 * f(r - h) - 30.0 * f(r) + 16.0 * f(r + h) - f(r + 2 * h)) / (12.0 * h * h);
    }

    /// Compare the declared exponents with log-slopes at probe points.
    void validate() const {
        auto slope = [&](double a, double b) {
            return (std::log(std::abs(f(b))) - std::log(std::abs(f(a)))) / (std::log(b) - std::log(a));
        };
        auto close = [](double got, double want) { return std::abs(got - want) <= 0.1 * std::max(1.0, std::abs(want)); };
        if (f(1e-8) != 0.0 && f(1e-7) != 0.0) {
            const double s = slope(1e-8, 1e-7);
            if (!close(s, singularity))
                throw domain_error("RadialFunction: declared singularity exponent " + std::to_string(singularity) +
                                   " but log-slope at 0 is " + std::to_string(s));
        } else if (singularity < 0.0) {
            throw domain_error("RadialFunction: profile vanishes at 0 but a singularity was declared");
        }
        if (std::isfinite(decay)) {
            const double s = slope(1e6, 1e7);
            if (!close(-s, decay))
                throw domain_error("RadialFunction: declared decay exponent " + std::to_string(decay) +
                                   " but log-slope at infinity is " + std::to_string(-s));
        } else {
            double m = 0.0;
            for (double r = 1e-3; r <= 1e3; r *= 1.5) m = std::max(m, std::abs(f(r)));
            if (std::abs(f(1e6)) * 1e18 > 1e-8 * m)
                throw domain_error("RadialFunction: rapid decay declared but f(1e6) is not negligible");
        }
    }
};

/// C(d,alpha) = 2^alpha Gamma((d+alpha)/2) / (pi^{d/2} |Gamma(-alpha/2)|).
inline double fraclap_norm_const(int d, double alpha) {
    if (!(alpha > 0.0 && alpha < 2.0)) throw domain_error("fraclap_norm_const: alpha must lie in (0,2)");
    // |Gamma(-a/2)| = Gamma(1 - a/2) / (a/2)
    return std::pow(2.0, alpha) * gamma_fn(0.5 * (d + alpha)) * (0.5 * alpha) /
           (std::pow(pi, 0.5 * d) * gamma_fn(1.0 - 0.5 * alpha));
}

namespace detail {

// d = 3: int_{S^2} |x - rho w|^{-e} dsigma, written so that it stays accurate
// both near the diagonal and for rho << r.
inline double sphere_power_d3(double r, double rho, double e) {
    const double M = std::max(r, rho), x = std::min(r, rho) / M;
    const double nu = 2.0 - e;
    if (x == 1.0) {
        if (nu > 0.0) return 2.0 * pi / (r * rho) * std::pow(2.0 * r, nu) / nu;
        return std::numeric_limits<double>::infinity();
    }
    const double at = 2.0 * std::atanh(x);
    const double bracket = nu == 0.0 ? at : std::pow(M, nu) * std::pow(1.0 - x, nu) * std::expm1(nu * at) / nu;
    return 2.0 * pi / (r * rho) * bracket;
}

// General d: |S^{d-2}| int_0^pi ((r-rho)^2 + 4 r rho sin^2(t/2))^{-e/2} sin^{d-2} t dt
// with 64-node Gauss-Legendre panels graded towards t = 0.
inline double sphere_power_general(double r, double rho, double e, int d) {
    auto g = [&](double t) {
        const double s = std::sin(0.5 * t);
        const double q = (r - rho) * (r - rho) + 4.0 * r * rho * s * s;
        return std::pow(q, -0.5 * e) * std::pow(std::sin(t), d - 2);
    };
    const double sep = std::abs(r - rho) / std::max(r, rho);
    int levels = 0;
    for (double w = pi; w > 0.25 * sep && levels < 60; w *= 0.5) ++levels;
    double s = 0.0, hi = pi;
    for (int k = 0; k < levels; ++k) {
        const double lo = 0.5 * hi;
        s += quad::panel<64>(g, lo, hi);
        hi = lo;
    }
    s += quad::panel<64>(g, 0.0, hi);
    return sphere_area(d - 1) * s;
}

inline double sphere_power(double r, double rho, double e, int d) {
    return d == 3 ? sphere_power_d3(r, rho, e) : sphere_power_general(r, rho, e, d);
}

} // namespace detail

/// K(r,rho) = int_{S^{d-1}} |x - rho w|^{-d-alpha} dsigma(w) for |x| = r.
inline double angular_kernel(double r, double rho, int d, double alpha) {
    if (!(r > 0.0 && rho > 0.0) || r == rho) throw domain_error("angular_kernel: need r, rho > 0 and r != rho");
    return detail::sphere_power(r, rho, d + alpha, d);
}

/// Same kernel by angular quadrature for any d (used to cross-check d = 3).
inline double angular_kernel_quadrature(double r, double rho, int d, double alpha) {
    if (!(r > 0.0 && rho > 0.0) || r == rho) throw domain_error("angular_kernel: need r, rho > 0 and r != rho");
    return detail::sphere_power_general(r, rho, d + alpha, d);
}

struct FraclapConfig {
    int d = 3;
    double alpha = 1.5;
    double h_rel = 1e-3;       // half-width of the excluded cell, relative to r
    double refine_tol = 1e-4;  // accept once halving h changes the result by less
    int max_refinements = 8;
    double cut_factor = 1e4;   // tail closed analytically beyond cut_factor * max(r,1)
    int origin_levels = 46;    // geometric grading towards rho = 0
};

namespace detail {

struct FraclapParts {
    double value = 0.0;
    double magnitude = 0.0;
};

inline FraclapParts fraclap_at(const RadialFunction& f, double r, double h, const FraclapConfig& c) {
    const int d = c.d;
    const double a = c.alpha;
    const double fr = f(r);
    auto F = [&](double rho) {
        return (fr - f(rho)) * std::pow(rho, d - 1) * sphere_power(r, rho, d + a, d);
    };
    FraclapParts out;
    auto acc = [&](double v) {
        out.value += v;
        out.magnitude += std::abs(v);
    };
    // excluded cell |rho - r| < h: second-order Taylor against the local kernel
    const double A = std::pow(pi, 0.5 * (d - 1)) * gamma_fn(0.5 * (1.0 + a)) / gamma_fn(0.5 * (d + a));
    acc(-A * 2.0 * std::pow(h, 2.0 - a) / (2.0 - a) *
        (f.derivative(r) * (d - 1) / (2.0 * r) + 0.5 * f.second_derivative(r)));
    // symmetric pairs rho = r +- s, h <= s <= r
    auto pair = [&](double s) { return F(r + s) + F(r - s); };
    for (double lo = h; lo < 0.5 * r;) {
        const double hi = std::min(2.0 * lo, 0.5 * r);
        acc(quad::panel<20>(pair, lo, hi));
        lo = hi;
    }
    double w = 0.5 * r;
    for (int k = 0; k < c.origin_levels; ++k) {
        acc(quad::panel<20>(pair, r - w, r - 0.5 * w));
        w *= 0.5;
    }
    // origin cell [0, w]: f ~ f(w) (rho/w)^sigma, kernel ~ its value at 0
    if (!(d + f.singularity > 0.0)) throw domain_error("apply_fraclap: singularity at 0 is not integrable");
    const double K0 = sphere_area(d) * std::pow(r, -d - a);
    acc(K0 * std::pow(w, d) * (fr / d - f(w) / (d + f.singularity)));
    // rho in (2r - w, 2r], left over by the pairs
    acc(quad::panel<20>([&](double s) { return F(r + s); }, r - w, r));
    // far field
    const double R = c.cut_factor * std::max(r, 1.0);
    for (double lo = 2.0 * r; lo < R;) {
        const double hi = std::min(2.0 * lo, R);
        acc(quad::panel<20>(F, lo, hi));
        lo = hi;
    }
    if (std::isfinite(f.decay) && !(a + f.decay > 0.0)) throw domain_error("apply_fraclap: tail is not integrable");
    const double tail_f = std::isfinite(f.decay) ? f(R) / (a + f.decay) : 0.0;
    acc(sphere_area(d) * std::pow(R, -a) * (fr / a - tail_f));
    out.value *= fraclap_norm_const(d, a);
    out.magnitude *= fraclap_norm_const(d, a);
    return out;
}

} // namespace detail

/// (-Delta)^{alpha/2} f at |x| = r as the principal-value radial integral
/// C(d,alpha) P.V. int K(r,rho) (f(r) - f(rho)) rho^{d-1} drho.
inline double apply_fraclap(const RadialFunction& f, double r, const FraclapConfig& c = {}) {
    if (!(r > 0.0)) throw domain_error("apply_fraclap: r must be positive");
    if (!(c.alpha > 0.0 && c.alpha < 2.0)) throw domain_error("apply_fraclap: alpha must lie in (0,2)");
    double h = c.h_rel * r;
    auto prev = detail::fraclap_at(f, r, h, c);
    for (int k = 0; k < c.max_refinements; ++k) {
        h *= 0.5;
        const auto cur = detail::fraclap_at(f, r, h, c);
        const double diff = std::abs(cur.value - prev.value);
        if (diff <= c.refine_tol * std::abs(cur.value) || diff <= 1e-13 * cur.magnitude) return cur.value;
        prev = cur;
    }
    throw quadrature_error("apply_fraclap: no convergence under cell refinement at r = " + std::to_string(r));
}

struct RieszConfig {
    int d = 3;
    double order = 1.5;       // s in I_s
    double cut_factor = 1e4;
    int levels = 46;          // grading towards rho = r and rho = 0
};

/// I_s g(r) = (1/gamma(s)) int |x - y|^{-d+s} g(|y|) dy.
inline double riesz_radial(const RadialFunction& g, double r, const RieszConfig& c = {}) {
    const int d = c.d;
    const double s = c.order;
    if (!(s > 0.0 && s < d)) throw domain_error("riesz_radial: order must lie in (0,d)");
    if (!(r > 0.0)) throw domain_error("riesz_radial: r must be positive");
    if (!(d + g.singularity > 0.0)) throw domain_error("riesz_radial: singularity at 0 is not integrable");
    if (std::isfinite(g.decay) && !(g.decay > s)) throw domain_error("riesz_radial: tail is not integrable");
    const double e = d - s;
    auto F = [&](double rho) { return g(rho) * std::pow(rho, d - 1) * detail::sphere_power(r, rho, e, d); };
    double sum = 0.0;
    // [0, r]: graded towards 0 over [0, r/2] and towards r over [r/2, r]
    // grading stops at roundoff scale, where rho would round onto r
    const double w_min = 1e-12 * r;
    double w = 0.5 * r;
    for (int k = 0; k < c.levels && w > w_min; ++k) {
        sum += quad::panel<20>(F, 0.5 * w, w);
        sum += quad::panel<20>(F, r - w, r - 0.5 * w);
        w *= 0.5;
    }
    sum += sphere_area(d) * std::pow(r, -e) * g(w) * std::pow(w, d) / (d + g.singularity);
    sum += quad::panel<20>(F, r - w, r);
    // [r, 2r] graded towards r
    w = r;
    for (int k = 0; k < c.levels && w > w_min; ++k) {
        sum += quad::panel<20>(F, r + 0.5 * w, r + w);
        w *= 0.5;
    }
    sum += quad::panel<20>(F, r, r + w);
    const double R = c.cut_factor * std::max(r, 1.0);
    for (double lo = 2.0 * r; lo < R;) {
        const double hi = std::min(2.0 * lo, R);
        sum += quad::panel<20>(F, lo, hi);
        lo = hi;
    }
    if (std::isfinite(g.decay)) sum += sphere_area(d) * g(R) * std::pow(R, s) / (g.decay - s);
    return sum / gamma_weight(s, d);
}

// ---------------------------------------------------------------------------
// Hardy-Rellich quotient

struct HardyResult {
    double ratio = 0.0;
    double numerator = 0.0;
    double denominator = 0.0;
    double c2 = 0.0; // sharp constant c_{d,alpha}^2
};

namespace detail {

// Radius beyond which |f| r^3 is negligible (scan on a doubling grid).
inline double effective_support(const RadialFunction& f) {
    double m = 0.0;
    std::vector<std::pair<double, double>> probe;
    for (double r = 1.0 / 1024; r <= 3e7; r *= 1.25) {
        const double v = std::abs(f(r)) * r * r * r;
        probe.emplace_back(r, v);
        m = std::max(m, v);
    }
    for (std::size_t i = probe.size(); i-- > 0;)
        if (probe[i].second > 1e-17 * m) {
            if (i + 1 >= probe.size()) throw domain_error("hardy_rellich_ratio: profile does not decay fast enough");
            return probe[i + 1].first;
        }
    throw domain_error("hardy_rellich_ratio: zero profile");
}

// F(k) = 4 pi int_0^R f(r) r^2 sin(kr)/(kr) dr, panels graded towards 0 and
// no wider than half an oscillation.
inline double hankel3(const RadialFunction& f, double k, double R) {
    auto g = [&](double r) {
        const double x = k * r;
        const double j0 = x < 1e-4 ? 1.0 - x * x / 6.0 : std::sin(x) / x;
        return f(r) * r * r * j0;
    };
    double s = 0.0;
    double lo = R * std::ldexp(1.0, -50);
    s += quad::panel<20>(g, 0.0, lo);
    while (lo < R) {
        const double hi = std::min(2.0 * lo, R);
        const int n = std::max(1, static_cast<int>(std::ceil((hi - lo) * k / pi)));
        for (int i = 0; i < n; ++i) s += quad::panel<20>(g, lo + (hi - lo) * i / n, lo + (hi - lo) * (i + 1) / n);
        lo = hi;
    }
    return 4.0 * pi * s;
}

} // namespace detail

/// ||(-Delta)^{alpha/4} f||^2 / || |x|^{-alpha/2} f ||^2 in d = 3, numerator by
/// Plancherel on the radial Fourier transform.
inline HardyResult hardy_rellich_ratio(const RadialFunction& f, int d, double alpha) {
    if (d != 3) throw domain_error("hardy_rellich_ratio: the Plancherel path is implemented for d = 3");
    if (!(alpha > 0.0 && alpha < 2.0)) throw domain_error("hardy_rellich_ratio: alpha must lie in (0,2)");
    if (!(2.0 * f.singularity + 3.0 - alpha > 0.0)) throw domain_error("hardy_rellich_ratio: divergent denominator");
    const double R = detail::effective_support(f);
    HardyResult out;
    out.c2 = std::pow(hardy_constant(d, alpha), 2);
    // denominator 4 pi int r^{2-alpha} f^2 dr
    {
        auto g = [&](double r) {
            const double v = f(r);
            return std::pow(r, 2.0 - alpha) * v * v;
        };
        double lo = R * std::ldexp(1.0, -60), s = 0.0;
        s += std::pow(lo, 3.0 - alpha) * std::pow(f(lo), 2) / (3.0 - alpha + 2.0 * f.singularity);
        while (lo < R) {
            const double hi = std::min(2.0 * lo, R);
            s += quad::panel<20>(g, lo, hi);
            lo = hi;
        }
        out.denominator = 4.0 * pi * s;
    }
    // numerator (2 pi)^{-3} 4 pi int k^{2+alpha} F(k)^2 dk, panels in log k
    {
        auto integrand = [&](double y) {
            const double k = std::exp(y);
            const double F = detail::hankel3(f, k, R);
            return std::pow(k, 3.0 + alpha) * F * F;
        };
        const double k_lo = 1e-3 / R;
        const double F0 = detail::hankel3(f, 0.0, R);
        double s = F0 * F0 * std::pow(k_lo, 3.0 + alpha) / (3.0 + alpha);
        double y = std::log(k_lo);
        const double step = std::log(2.0);
        double last = 0.0, last_ratio = 0.0;
        bool closed = false;
        for (int i = 0; i < 200; ++i) {
            const double piece = quad::panel<20>(integrand, y, y + step);
            s += piece;
            y += step;
            if (std::exp(y) > 10.0 / R && piece < 1e-15 * s) {
                closed = true;
                break;
            }
            if (last > 0.0 && piece > 0.0) {
                const double q = piece / last;
                if (std::exp(y) > 100.0 / R && q < 0.9 && std::abs(q - last_ratio) < 1e-3 * q && piece < 1e-6 * s) {
                    s += piece * q / (1.0 - q); // geometric tail of a power law
                    closed = true;
                    break;
                }
                last_ratio = q;
            }
            last = piece;
        }
        if (!closed) throw quadrature_error("hardy_rellich_ratio: frequency integral did not converge");
        out.numerator = 4.0 * pi * s / std::pow(2.0 * pi, 3);
    }
    out.ratio = out.numerator / out.denominator;
    return out;
}

/// Multiplier of (-Delta)^{alpha/2} on |x|^{-(d-alpha)/2 + i tau}:
/// 2^alpha |Gamma((d+alpha)/4 + i tau/2)|^2 / |Gamma((d-alpha)/4 + i tau/2)|^2.
inline double hardy_mellin_symbol(double tau, int d, double alpha) {
    const double lp = log_gamma_complex({0.25 * (d + alpha), 0.5 * tau}).real();
    const double lm = log_gamma_complex({0.25 * (d - alpha), 0.5 * tau}).real();
    return std::pow(2.0, alpha) * std::exp(2.0 * (lp - lm));
}

/// Hardy-Rellich quotient of f(x) = |x|^{-(d-alpha)/2} h(ln|x|) through the
/// Mellin-Plancherel identity: ratio = (1/2pi) int |h^(tau)|^2 Phi(tau) dtau / int h^2.
/// h must be negligible outside [y_lo, y_hi].
inline HardyResult hardy_rellich_ratio_mellin(const std::function<double(double)>& h, double y_lo, double y_hi, int d,
                                              double alpha) {
    if (!(alpha > 0.0 && alpha < 2.0)) throw domain_error("hardy_rellich_ratio_mellin: alpha must lie in (0,2)");
    const int panels = std::max(64, static_cast<int>(std::ceil((y_hi - y_lo) * 4.0)));
    const double w = (y_hi - y_lo) / panels;
    double h2 = 0.0;
    for (int i = 0; i < panels; ++i) h2 += quad::panel<20>([&](double y) { return h(y) * h(y); }, y_lo + i * w, y_lo + (i + 1) * w);
    auto hat2 = [&](double tau) {
        double re = 0.0, im = 0.0;
        const int sub = std::max(1, static_cast<int>(std::ceil(w * std::abs(tau) / pi)));
        for (int i = 0; i < panels * sub; ++i) {
            const double a = y_lo + i * w / sub, b = a + w / sub;
            re += quad::panel<20>([&](double y) { return h(y) * std::cos(tau * y); }, a, b);
            im += quad::panel<20>([&](double y) { return h(y) * std::sin(tau * y); }, a, b);
        }
        return re * re + im * im;
    };
    // |h^|^2 Phi is even in tau; integrate on [0, T] with T where the tail is negligible
    double s = 0.0, tau = 0.0;
    const double dtau = pi / (y_hi - y_lo);
    bool closed = false;
    for (int i = 0; i < 4000; ++i) {
        const double piece = quad::panel<20>([&](double t) { return hat2(t) * hardy_mellin_symbol(t, d, alpha); }, tau, tau + dtau);
        s += piece;
        tau += dtau;
        if (piece < 1e-15 * s && i > 4) {
            closed = true;
            break;
        }
    }
    if (!closed) throw quadrature_error("hardy_rellich_ratio_mellin: frequency integral did not converge");
    HardyResult out;
    out.c2 = std::pow(hardy_constant(d, alpha), 2);
    out.numerator = 2.0 * s / (2.0 * pi);
    out.denominator = h2;
    out.ratio = out.numerator / out.denominator;
    return out;
}

/// Near-optimizer |x|^{-(d-alpha)/2} exp(-(ln|x|)^2 / (2 sigma^2)), sigma = ln n:
/// a smooth cutoff of the extremal power to the scales (1/n, n).
inline HardyResult hardy_near_optimizer(double n, int d, double alpha) {
    if (!(n > 1.0)) throw domain_error("hardy_near_optimizer: n must exceed 1");
    const double sigma = std::log(n);
    return hardy_rellich_ratio_mellin([sigma](double y) { return std::exp(-y * y / (2.0 * sigma * sigma)); },
                                      -12.0 * sigma, 12.0 * sigma, d, alpha);
}

struct NamedProfile {
    std::string name;
    RadialFunction f;
};

/// Twenty smooth, rapidly decaying test profiles for the Hardy-Rellich quotient.
inline std::vector<NamedProfile> hardy_probe_family() {
    const double inf = infinite_decay;
    auto bump = [](double c, double w) {
        return [c, w](double r) {
            const double z = (r - c) / w;
            return std::abs(z) < 1.0 ? std::exp(-1.0 / (1.0 - z * z)) : 0.0;
        };
    };
    std::vector<NamedProfile> v;
    auto add = [&](std::string n, std::function<double(double)> f, double sing) {
        v.push_back({std::move(n), RadialFunction(std::move(f), inf, sing)});
    };
    add("gauss_a0.25", [](double r) { return std::exp(-0.25 * r * r); }, 0.0);
    add("gauss_a1", [](double r) { return std::exp(-r * r); }, 0.0);
    add("gauss_a4", [](double r) { return std::exp(-4.0 * r * r); }, 0.0);
    add("r2_gauss", [](double r) { return r * r * std::exp(-r * r); }, 2.0);
    add("r4_gauss", [](double r) { return std::pow(r, 4) * std::exp(-r * r); }, 4.0);
    add("one_minus_r2_gauss", [](double r) { return (1.0 - r * r) * std::exp(-r * r); }, 0.0);
    add("one_plus_r2_gauss", [](double r) { return (1.0 + r * r) * std::exp(-r * r); }, 0.0);
    add("two_scale_sum", [](double r) { return std::exp(-r * r) + 0.5 * std::exp(-r * r / 9.0); }, 0.0);
    add("two_scale_diff", [](double r) { return std::exp(-r * r) - 0.9 * std::exp(-r * r / 4.0); }, 0.0);
    add("exp", [](double r) { return std::exp(-r); }, 0.0);
    add("one_plus_r_exp", [](double r) { return (1.0 + r) * std::exp(-r); }, 0.0);
    add("r_exp", [](double r) { return r * std::exp(-r); }, 1.0);
    add("exp_gauss", [](double r) { return std::exp(-r - r * r); }, 0.0);
    add("bump", bump(0.0, 1.0), 0.0);
    add("shell_bump", bump(2.0, 1.0), 0.0);
    add("sech", [](double r) { return 1.0 / std::cosh(r); }, 0.0);
    add("sqrt_r_gauss", [](double r) { return std::sqrt(r) * std::exp(-r * r); }, 0.5);
    add("cos_gauss", [](double r) { return (1.0 + std::cos(3.0 * r)) * std::exp(-r * r); }, 0.0);
    add("cos2r_gauss", [](double r) { return std::cos(2.0 * r) * std::exp(-r * r); }, 0.0);
    add("offset_gauss", [](double r) { return std::exp(-(r - 1.0) * (r - 1.0)); }, 0.0);
    return v;
}

// ---------------------------------------------------------------------------
// Drift fields and balance checks

/// Regularized Hardy drift and the potentials attached to it.
struct DriftFields {
    int d = 3;
    double alpha = 1.5;
    double kappa = 0.0;
    double beta = 0.0;
    double epsilon = 0.0;

    static DriftFields from(const ModelParams& p) {
        p.validate(ModelMode::drift);
        DriftFields f;
        f.d = p.d;
        f.alpha = p.alpha;
        f.kappa = hk::kappa(p);
        f.beta = solve_beta(p).beta;
        f.epsilon = p.epsilon;
        return f;
    }

    double reg(double r) const { return r * r + epsilon; }
    double b(double r) const { return kappa * r * std::pow(reg(r), -0.5 * alpha); }
    double db(double r) const {
        return kappa * std::pow(reg(r), -0.5 * alpha) - alpha * kappa * r * r * std::pow(reg(r), -0.5 * alpha - 1.0);
    }
    double U(double r) const { return alpha * kappa * epsilon * std::pow(reg(r), -0.5 * (alpha + 2.0)); }
    double W(double r) const { return (d - alpha) * kappa * std::pow(reg(r), -0.5 * alpha); }
    double V(double r) const { return (beta - alpha) * kappa * std::pow(r, -alpha); }

    /// div b in radial form b' + (d-1) b / r.
    double divergence(double r) const { return db(r) + (d - 1) * b(r) / r; }
    double divergence_fd(double r) const {
        const double h = 1e-5 * r;
        return (b(r + h) - b(r - h)) / (2.0 * h) + (d - 1) * b(r) / r;
    }
};

/// max |div b_eps - (W_eps + U_eps)| over the grid (absolute).
inline CheckReport drift_divergence_check(const DriftFields& f, const std::vector<double>& grid, bool finite_difference = false) {
    CheckReport rep;
    rep.operation = "drift_divergence_check";
    rep.params = {{"d", f.d}, {"alpha", f.alpha}, {"kappa", f.kappa}, {"epsilon", f.epsilon},
                  {"derivative", finite_difference ? "finite_difference" : "analytic"}};
    rep.tolerance = finite_difference ? 1e-5 : 1e-8;
    for (double r : grid) {
        const double div = finite_difference ? f.divergence_fd(r) : f.divergence(r);
        rep.add(r, div, std::abs(div - (f.W(r) + f.U(r))));
    }
    rep.finish();
    return rep;
}

/// Constant identity (beta - alpha) kappa = gamma(beta)/gamma(beta - alpha) and
/// the quadrature residual of (-Delta)^{alpha/2} r^{-d+beta} on a log grid in [0.1, 10].
inline CheckReport lyapunov_balance_check(const ModelParams& p, int points = 21, const FraclapConfig& base = {}) {
    p.validate(ModelMode::drift);
    const double beta = solve_beta(p).beta;
    const double k = kappa(p);
    const double lhs = (beta - p.alpha) * k;
    const double rhs = gamma_ratio(beta, p);
    CheckReport rep;
    rep.operation = "lyapunov_balance_check";
    rep.params = {{"d", p.d}, {"alpha", p.alpha}, {"delta", p.delta}, {"beta", beta}, {"kappa", k}};
    rep.tolerance = 1e-3;
    const double sigma = beta - p.d;
    RadialFunction f([sigma](double r) { return std::pow(r, sigma); }, -sigma, sigma,
                     [sigma](double r) { return sigma * std::pow(r, sigma - 1.0); },
                     [sigma](double r) { return sigma * (sigma - 1.0) * std::pow(r, sigma - 2.0); });
    FraclapConfig c = base;
    c.d = p.d;
    c.alpha = p.alpha;
    for (int i = 0; i < points; ++i) {
        const double r = 0.1 * std::pow(100.0, static_cast<double>(i) / (points - 1));
        const double v = apply_fraclap(f, r, c);
        const double exact = rhs * std::pow(r, sigma - p.alpha);
        rep.add(r, v, std::abs(v / exact - 1.0));
    }
    const double const_residual = std::abs(lhs - rhs);
    rep.extra = {{"constant_lhs", lhs}, {"constant_rhs", rhs}, {"constant_residual", const_residual},
                 {"constant_tolerance", 1e-10}};
    rep.finish();
    rep.pass = rep.pass && const_residual < 1e-10;
    return rep;
}

} // namespace hk
