#pragma once

#include "hk/constants.hpp"
#include "hk/quadrature.hpp"

#include <boost/math/interpolators/pchip.hpp>
#include <boost/math/quadrature/gauss_kronrod.hpp>
#include <boost/math/quadrature/tanh_sinh.hpp>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <functional>
#include <istream>
#include <memory>
#include <optional>
#include <ostream>
#include <sstream>
#include <string>
#include <type_traits>
#include <vector>

namespace hk {

struct StableKernelConfig {
    std::size_t cache_points = 4096;
    double rho_lo = 1e-4;
    double rho_hi = 1e4;
    double rho_sinc = 1.0; // below: sinc form; above: twice integrated by parts
    double rho_asym = 30.0; // above: asymptotic series (alpha < 2)
    int grading_levels = 40;
};

/// Radial profile of the isotropic alpha-stable density in d = 3, with
/// symbol exp(-t|xi|^alpha).
class StableKernel {
public:
    StableKernel(int d, double alpha, StableKernelConfig cfg = {}) : d_(d), alpha_(alpha), cfg_(cfg) {
        if (!(alpha > 0.0 && alpha <= 2.0)) throw domain_error("StableKernel: alpha must lie in (0,2]");
        if (d < 1) throw domain_error("StableKernel: d must be positive");
        if (d_ == 3) build_cache();
    }

    int d() const { return d_; }
    double alpha() const { return alpha_; }
    bool exact() const { return d_ == 3; }
    const StableKernelConfig& config() const { return cfg_; }

    /// p_1(0) = Gamma(d/alpha) / (alpha 2^{d-1} pi^{d/2} Gamma(d/2)).
    double p1_zero() const {
        return gamma_fn(d_ / alpha_) / (alpha_ * std::pow(2.0, d_ - 1) * std::pow(pi, 0.5 * d_) * gamma_fn(0.5 * d_));
    }

    /// Quadrature evaluation of p_1(rho) (no cache).
    double p1_direct(double rho) const { return density_direct(1.0, rho); }

    /// Quadrature evaluation of p_t(rho) straight from the symbol e^{-t u^alpha},
    /// without the self-similar rescaling.
    double density_direct(double t, double rho) const {
        require_exact();
        if (!(t > 0.0)) throw domain_error("density: t must be positive");
        if (rho < 0.0) throw domain_error("p1: rho must be >= 0");
        const double a = alpha_;
        const double scale = std::pow(t, 1.0 / a);
        if (rho == 0.0) return p1_zero() / (scale * scale * scale);
        const double umax = u_max() / scale;
        if (rho <= cfg_.rho_sinc * scale) {
            auto f = [&](double u) {
                const double x = u * rho;
                const double sinc = x < 1e-4 ? 1.0 - x * x / 6.0 : std::sin(x) / x;
                return u * u * std::exp(-t * std::pow(u, a)) * sinc;
            };
            const double w = std::min(0.5 / scale, pi / rho);
            return quad::graded_integral(f, umax, w, cfg_.grading_levels) / (2.0 * pi * pi);
        }
        if (a < 2.0 && rho > cfg_.rho_asym * scale) return p1_series(rho / scale) / (scale * scale * scale);
        // g(u) = u e^{-t u^a}; p = -(1/(2 pi^2 rho^3)) int g''(u) sin(u rho) du.
        auto g2 = [&](double u) {
            if (u == 0.0) return a == 1.0 ? -2.0 * t : 0.0;
            const double ua = t * std::pow(u, a);
            return a * ua / u * std::exp(-ua) * (a * ua - a - 1.0);
        };
        quad::SineOptions opt;
        opt.u_max = umax;
        opt.u_singular = 1.0;
        opt.grading_levels = cfg_.grading_levels;
        return -quad::sine_transform(g2, rho, opt) / (2.0 * pi * pi * rho * rho * rho);
    }

    /// Large-rho asymptotic series.
    double p1_series(double rho) const {
        const double a = alpha_;
        double s = 0.0, prev = 0.0;
        double fact = 1.0;
        for (int k = 1; k <= 80; ++k) {
            fact *= k;
            const double sn = std::sin(pi * a * k / 2.0);
            if (std::abs(sn) < 1e-12) continue; // vanishing term
            const double term = ((k % 2) ? 1.0 : -1.0) / fact * gamma_fn(0.5 * (a * k + d_)) *
                                gamma_fn(0.5 * a * k + 1.0) * sn * std::pow(2.0, a * k) * std::pow(rho, -a * k - d_);
            if (prev != 0.0 && std::abs(term) > prev) break; // asymptotic divergence sets in
            s += term;
            prev = std::abs(term);
            if (prev < 1e-17 * std::abs(s)) break;
        }
        return s * std::pow(pi, -0.5 * d_ - 1.0);
    }

    /// Leading tail constant: p_1(rho) ~ A rho^{-d-alpha}.
    double tail_constant() const {
        const double a = alpha_;
        return a * std::pow(2.0, a - 1.0) * std::pow(pi, -0.5 * d_ - 1.0) * std::sin(pi * a / 2.0) *
               gamma_fn(0.5 * (d_ + a)) * gamma_fn(0.5 * a);
    }

    /// Cached p_1(rho).
    double p1(double rho) const {
        require_exact();
        if (rho < 0.0) throw domain_error("p1: rho must be >= 0");
        if (alpha_ >= 2.0) return gaussian_p1(rho); // exact law, no cache needed
        if (rho < cache_lo_) return p1_zero() - m2_ * rho * rho;
        if (rho > cache_hi_) return p1_series(rho);
        return std::exp((*interp_)(std::log(rho)));
    }

    /// p_t(rho) = t^{-d/alpha} p_1(t^{-1/alpha} rho).
    double density(double t, double rho) const {
        if (!(t > 0.0)) throw domain_error("density: t must be positive");
        const double s = std::pow(t, -1.0 / alpha_);
        return std::pow(s, d_) * p1(s * rho);
    }

    /// Spherical average of p_t(x - y) over |y| = rho0 at |x| = r (d = 3).
    double shell_average(double t, double r, double rho0) const {
        require_exact();
        if (r == 0.0) return density(t, rho0);
        if (rho0 == 0.0) return density(t, r);
        const double lo = std::abs(r - rho0), hi = r + rho0;
        auto f = [&](double q) { return density(t, q) * q; };
        const double scale = std::pow(t, 1.0 / alpha_);
        double s = 0.0;
        // split so each piece is resolved relative to the kernel scale
        std::vector<double> cuts{lo};
        for (double c = scale; c < hi; c *= 4.0)
            if (c > lo) cuts.push_back(c);
        cuts.push_back(hi);
        for (std::size_t i = 0; i + 1 < cuts.size(); ++i)
            s += boost::math::quadrature::gauss_kronrod<double, 31>::integrate(f, cuts[i], cuts[i + 1], 12, 1e-11);
        return s / (2.0 * r * rho0);
    }

    /// t^{-d/alpha} min t rho^{-d-alpha}.
    double comparator(double t, double rho) const {
        const double a = std::pow(t, -d_ / alpha_);
        if (rho == 0.0) return a;
        return std::min(a, t * std::pow(rho, -d_ - alpha_));
    }

    /// E^t(rho) = t min(rho^{-d-alpha-1}, t^{-(d+alpha+1)/alpha}).
    double E_kernel(double t, double rho) const {
        const double m = d_ + alpha_ + 1.0;
        const double a = std::pow(t, -m / alpha_);
        if (rho == 0.0) return t * a;
        return t * std::min(a, std::pow(rho, -m));
    }

    /// 4 pi int_0^inf rho^2 p_1(rho) d rho (d = 3).
    double mass() const {
        require_exact();
        auto f = [&](double r) { return 4.0 * pi * r * r * p1(r); };
        double s = boost::math::quadrature::gauss_kronrod<double, 31>::integrate(f, 0.0, 1e-3, 8, 1e-13);
        double lo = 1e-3;
        while (lo < 1e6) {
            const double hi = lo * 2.0;
            s += boost::math::quadrature::gauss_kronrod<double, 31>::integrate(f, lo, hi, 8, 1e-13);
            lo = hi;
        }
        if (alpha_ < 2.0) s += 4.0 * pi * tail_constant() * std::pow(lo, -alpha_) / alpha_;
        return s;
    }

    void export_csv(std::ostream& os) const {
        require_exact();
        os << "rho,p1\n";
        char buf[96];
        for (std::size_t i = 0; i < grid_.size(); ++i) {
            std::snprintf(buf, sizeof buf, "%.17g,%.17g\n", grid_[i], vals_[i]);
            os << buf;
        }
    }

    /// Rebuild an evaluator from an exported profile.
    static StableKernel import_csv(std::istream& is, double alpha, StableKernelConfig cfg = {}) {
        StableKernel k(alpha, cfg);
        std::string line;
        std::getline(is, line);
        if (line != "rho,p1") throw domain_error("import_csv: unexpected header");
        while (std::getline(is, line)) {
            if (line.empty()) continue;
            const auto comma = line.find(',');
            if (comma == std::string::npos) throw domain_error("import_csv: malformed row");
            k.grid_.push_back(std::stod(line.substr(0, comma)));
            k.vals_.push_back(std::stod(line.substr(comma + 1)));
        }
        if (k.grid_.size() < 4) throw domain_error("import_csv: too few rows");
        k.finish_cache();
        return k;
    }

private:
    // Uninitialised evaluator used by import_csv.
    StableKernel(double alpha, StableKernelConfig cfg) : d_(3), alpha_(alpha), cfg_(cfg) {}

    void require_exact() const {
        if (d_ != 3) throw domain_error("exact stable density is implemented for d = 3 only");
    }

    // Heat kernel profile used past the alpha = 2 cache.
    static double gaussian_p1(double rho) { return std::pow(4.0 * pi, -1.5) * std::exp(-rho * rho / 4.0); }

    double u_max() const {
        // u^{2 alpha} e^{-u^alpha} < 1e-22
        double X = 60.0;
        for (int i = 0; i < 20; ++i) X = 22.0 * std::log(10.0) + 2.0 * std::log(X);
        return std::pow(X, 1.0 / alpha_);
    }

    void build_cache() {
        double hi = cfg_.rho_hi;
        if (alpha_ >= 2.0) hi = std::min(hi, 6.5); // quadrature loses relative accuracy beyond
        const std::size_t n = cfg_.cache_points;
        grid_.resize(n);
        vals_.resize(n);
        for (std::size_t i = 0; i < n; ++i) {
            grid_[i] = cfg_.rho_lo * std::pow(hi / cfg_.rho_lo, static_cast<double>(i) / (n - 1));
            vals_[i] = p1_direct(grid_[i]);
        }
        finish_cache();
    }

    void finish_cache() {
        std::vector<double> lx(grid_.size()), ly(grid_.size());
        for (std::size_t i = 0; i < grid_.size(); ++i) {
            if (!(vals_[i] > 0.0)) throw quadrature_error("stable density cache: non-positive value");
            lx[i] = std::log(grid_[i]);
            ly[i] = std::log(vals_[i]);
        }
        cache_lo_ = grid_.front();
        cache_hi_ = grid_[grid_.size() - 8]; // keep clear of the one-sided end slopes
        m2_ = gamma_fn(5.0 / alpha_) / alpha_ / (12.0 * pi * pi);
        interp_ = std::make_shared<boost::math::interpolators::pchip<std::vector<double>>>(std::move(lx), std::move(ly));
    }

    int d_;
    double alpha_;
    StableKernelConfig cfg_;
    std::vector<double> grid_, vals_;
    double cache_lo_ = 0.0, cache_hi_ = 0.0, m2_ = 0.0;
    std::shared_ptr<boost::math::interpolators::pchip<std::vector<double>>> interp_;
};

/// Radial convolution in d = 3: (f*g)(R) = (2 pi / R) int f(s) s [Gg(R+s) - Gg(|R-s|)] ds,
/// with Gg(q) = int_0^q g(u) u du. At R = 0: 4 pi int f(s) g(s) s^2 ds.
/// Gg may instead take (lo, hi, hi - lo) and return Gg(hi) - Gg(lo) directly.
template <class F, class GPrim, class GVal>
double radial_convolution(F&& f, GPrim&& Gg, GVal&& g, double R, const std::vector<double>& breaks,
                          int panels_per_break) {
    double s = 0.0;
    for (std::size_t i = 0; i + 1 < breaks.size(); ++i) {
        const double a = breaks[i], b = breaks[i + 1];
        for (int k = 0; k < panels_per_break; ++k) {
            const double lo = a + (b - a) * k / panels_per_break, hi = a + (b - a) * (k + 1) / panels_per_break;
            if (R == 0.0) {
                s += quad::panel<20>([&](double x) { return 4.0 * pi * f(x) * g(x) * x * x; }, lo, hi);
            } else {
                s += quad::panel<20>(
                    [&](double x) {
                        const double a = std::abs(R - x), b = R + x;
                        double dG;
                        if constexpr (std::is_invocable_v<GPrim, double, double, double>)
                            dG = Gg(a, b, 2.0 * std::min(x, R));
                        else
                            dG = Gg(b) - Gg(a);
                        return 2.0 * pi / R * f(x) * x * dG;
                    },
                    lo, hi);
            }
        }
    }
    return s;
}

namespace detail {

// Breakpoints for radial integrals of kernels at scale `scale` near the
// singular point R: geometric towards R from both sides and out to far.
inline std::vector<double> conv_breaks(double R, double scale, double far, const std::vector<double>& extra = {}) {
    std::vector<double> b{0.0};
    auto push = [&](double x) {
        if (x > b.back() + 1e-14 * std::max(1.0, x)) b.push_back(x);
    };
    std::vector<double> pts;
    for (double x = scale * 1e-4; x < far; x *= 2.0) pts.push_back(x);
    if (R > 0) {
        for (double h = R * 1e-6; h < R; h *= 2.0) {
            pts.push_back(R - h);
            pts.push_back(R + h);
        }
        pts.push_back(R);
        pts.push_back(2.0 * R);
    }
    for (double x : extra) pts.push_back(std::abs(x));
    pts.push_back(far);
    std::sort(pts.begin(), pts.end());
    for (double x : pts)
        if (x > 0.0 && x <= far) push(x);
    return b;
}

// Primitive int_0^q E^tau(u) u du of E^tau(u) = tau min(u^{-m}, tau^{-m/alpha}).
inline double E_primitive(double tau, double q, double m, double alpha) {
    const double qc = std::pow(tau, 1.0 / alpha);
    const double top = std::pow(tau, -m / alpha);
    if (q <= qc) return tau * top * q * q / 2.0;
    return tau * (top * qc * qc / 2.0 + (std::pow(qc, 2.0 - m) - std::pow(q, 2.0 - m)) / (m - 2.0));
}

// E_primitive(b) - E_primitive(a) for a <= b, with w = b - a, free of the
// cancellation in the tail where both values approach the same constant.
inline double E_primitive_diff(double tau, double a, double b, double w, double m, double alpha) {
    const double qc = std::pow(tau, 1.0 / alpha);
    const double top = std::pow(tau, -m / alpha);
    auto tail = [&](double lo, double width) {
        return -tau * std::pow(lo, 2.0 - m) * std::expm1((2.0 - m) * std::log1p(width / lo)) / (m - 2.0);
    };
    if (b <= qc) return tau * top * w * (a + b) / 2.0;
    if (a >= qc) return tail(a, w);
    return tau * top * (qc - a) * (qc + a) / 2.0 + tail(qc, b - qc);
}

} // namespace detail

/// Table-backed primitive G(q) = int_0^q g(u) u du: cumulative 20-point
/// Gauss-Legendre sums on a geometric node grid, plus one panel per query.
class RadialPrimitive {
public:
    template <class G>
    RadialPrimitive(G&& g, double q_lo, double q_hi, int n) : g_(std::forward<G>(g)) {
        nodes_.push_back(0.0);
        for (int i = 0; i < n; ++i) nodes_.push_back(q_lo * std::pow(q_hi / q_lo, static_cast<double>(i) / (n - 1)));
        cum_.assign(nodes_.size(), 0.0);
        for (std::size_t i = 1; i < nodes_.size(); ++i) cum_[i] = cum_[i - 1] + piece(nodes_[i - 1], nodes_[i]);
    }

    double operator()(double q) const {
        if (q <= 0.0) return 0.0;
        if (q >= nodes_.back()) return cum_.back() + piece(nodes_.back(), q);
        const auto it = std::upper_bound(nodes_.begin(), nodes_.end(), q);
        const std::size_t j = static_cast<std::size_t>(it - nodes_.begin()) - 1;
        return cum_[j] + piece(nodes_[j], q);
    }

private:
    double piece(double a, double b) const {
        if (b <= a) return 0.0;
        return quad::panel<20>([&](double u) { return g_(u) * u; }, a, b);
    }

    std::function<double(double)> g_;
    std::vector<double> nodes_, cum_;
};

/// Fast spherical averages of p_t (d = 3) from a cumulative table of
/// int_0^q p_1(v) v dv; short intervals are integrated directly.
class ShellReference {
public:
    explicit ShellReference(const StableKernel& k)
        : k_(k), G_([&k](double v) { return k.p1(v); }, 1e-5, 1e5, 3000) {
        if (k.d() != 3) throw domain_error("ShellReference: d = 3 only");
    }

    double operator()(double t, double r, double rho0) const {
        if (r == 0.0) return k_.density(t, rho0);
        if (rho0 == 0.0) return k_.density(t, r);
        const double lo = std::abs(r - rho0), hi = r + rho0;
        if (hi - lo < 0.05 * hi)
            return quad::panel<20>([&](double q) { return k_.density(t, q) * q; }, lo, hi) / (2.0 * r * rho0);
        const double s = std::pow(t, -1.0 / k_.alpha());
        return (G_(s * hi) - G_(s * lo)) * std::pow(t, -1.0 / k_.alpha()) / (2.0 * r * rho0);
    }

private:
    const StableKernel& k_;
    RadialPrimitive G_;
};

struct ConstantReport {
    double value = 0.0;
    double value_refined = 0.0;
    double relative_change = 0.0;
    std::vector<double> grid;
    std::vector<double> ratios;
};

/// k0 = max(sup p/comparator, sup comparator/p) on a log grid [1e-3, 1e3] at t = 1.
inline double calibrate_k0(const StableKernel& k, int n = 400) {
    if (k.alpha() >= 2.0) throw domain_error("calibrate_k0: the comparator is an alpha < 2 bound");
    std::vector<double> grid{1.0}; // comparator crossover, where the ratio has its kink
    for (int i = 0; i < n; ++i) grid.push_back(1e-3 * std::pow(1e6, static_cast<double>(i) / (n - 1)));
    double best = 0.0;
    for (double rho : grid) {
        const double p = k.p1(rho), c = k.comparator(1.0, rho);
        if (!(p > 0.0)) throw quadrature_error("calibrate_k0: non-positive density");
        best = std::max({best, p / c, c / p});
    }
    if (!std::isfinite(best)) throw quadrature_error("calibrate_k0: ratio diverges");
    return best;
}

/// sup over a log grid of |p_1'(rho)| / E^1(rho), central differences.
inline ConstantReport check_gradient_bound(const StableKernel& k, int n = 200) {
    auto run = [&](int m, ConstantReport* rep) {
        double best = 0.0;
        for (int i = 0; i < m; ++i) {
            const double rho = 1e-3 * std::pow(1e6, static_cast<double>(i) / (m - 1));
            const double h = 1e-4 * std::max(rho, 1.0);
            const double lo = std::max(0.0, rho - h);
            const double dp = (k.p1_direct(rho + h) - k.p1_direct(lo)) / (rho + h - lo);
            const double r = std::abs(dp) / k.E_kernel(1.0, rho);
            best = std::max(best, r);
            if (rep) {
                rep->grid.push_back(rho);
                rep->ratios.push_back(r);
            }
        }
        return best;
    };
    ConstantReport rep;
    rep.value = run(n, &rep);
    rep.value_refined = run(2 * n, nullptr);
    rep.relative_change = std::abs(rep.value_refined - rep.value) / rep.value;
    return rep;
}

struct ConvolutionReport {
    std::vector<double> separations;
    std::vector<double> ratio_k2, ratio_k3;
    double k2 = 0.0, k3 = 0.0;
    double k2_refined = 0.0, k3_refined = 0.0;
};

/// Empirical k2, k3 of the time-convolution inequalities at t = 1 on nine
/// separations |x - y|.
inline ConvolutionReport check_convolution_inequalities(const StableKernel& k, int level = 1) {
    const double a = k.alpha();
    const double t = 1.0;
    const double m = k.d() + a + 1.0;
    const std::vector<double> seps{0.0, 0.25, 0.5, 1.0, 2.0, 4.0, 10.0, 30.0, 100.0};
    auto compute = [&](int lvl, std::vector<double>* r2, std::vector<double>* r3) {
        const int panels = 2 * lvl;
        const double tol = lvl == 1 ? 1e-6 : 1e-8;
        double K2 = 0.0, K3 = 0.0;
        boost::math::quadrature::tanh_sinh<double> ts;
        for (double R : seps) {
            auto conv_pE = [&](double tau, double tc) {
                if (tc < 0.0) tau = -tc;
                const double rest = tc > 0.0 ? tc : t - tau;
                if (tau < 1e-30 || rest < 1e-30) return 0.0;
                const double sc = std::pow(rest, 1.0 / a);
                auto f = [&](double s) { return k.density(rest, s); };
                auto G = [&](double lo, double hi, double w) { return detail::E_primitive_diff(tau, lo, hi, w, m, a); };
                auto g = [&](double q) { return k.E_kernel(tau, q); };
                const double qc = std::pow(tau, 1.0 / a);
                const auto br = detail::conv_breaks(R, std::min(sc, qc), 1e3 + 10 * R, {qc - R, qc + R});
                return radial_convolution(f, G, g, R, br, panels);
            };
            auto conv_EE = [&](double tau, double tc) {
                if (tc < 0.0) tau = -tc;
                const double rest = tc > 0.0 ? tc : t - tau;
                if (tau < 1e-30 || rest < 1e-30) return 0.0;
                auto f = [&](double s) { return k.E_kernel(rest, s); };
                auto G = [&](double lo, double hi, double w) { return detail::E_primitive_diff(tau, lo, hi, w, m, a); };
                auto g = [&](double q) { return k.E_kernel(tau, q); };
                const double qc = std::pow(tau, 1.0 / a), sc = std::pow(rest, 1.0 / a);
                const auto br = detail::conv_breaks(R, std::min(sc, qc), 1e3 + 10 * R, {sc, qc - R, qc + R});
                return radial_convolution(f, G, g, R, br, panels);
            };
            const double lhs2 = ts.integrate(conv_pE, 0.0, t, tol);
            const double lhs3 = ts.integrate(conv_EE, 0.0, t, tol);
            const double scale = std::pow(t, (a - 1.0) / a);
            const double q2 = lhs2 / (scale * k.density(t, R));
            const double q3 = lhs3 / (scale * k.E_kernel(t, R));
            K2 = std::max(K2, q2);
            K3 = std::max(K3, q3);
            if (r2) r2->push_back(q2);
            if (r3) r3->push_back(q3);
        }
        return std::pair{K2, K3};
    };
    ConvolutionReport rep;
    rep.separations = seps;
    std::tie(rep.k2, rep.k3) = compute(level, &rep.ratio_k2, &rep.ratio_k3);
    std::tie(rep.k2_refined, rep.k3_refined) = compute(2 * level, nullptr, nullptr);
    return rep;
}

/// Relative residual |(p_t * p_s)(R) - p_{t+s}(R)| / p_{t+s}(R), maximised over
/// the given separations.
inline double chapman_kolmogorov_check(const StableKernel& k, double t, double s,
                                       const std::vector<double>& seps = {0.0, 0.3, 1.0, 2.5, 6.0}) {
    const double a = k.alpha();
    double worst = 0.0;
    const double sc_s = std::pow(s, 1.0 / a);
    const RadialPrimitive Gp([&](double u) { return k.density(s, u); }, sc_s * 1e-6, a < 2.0 ? 1e4 : 60.0 * sc_s, 600);
    for (double R : seps) {
        auto f = [&](double x) { return k.density(t, x); };
        auto g = [&](double x) { return k.density(s, x); };
        const double sc = std::min(std::pow(t, 1.0 / a), std::pow(s, 1.0 / a));
        const double far = a < 2.0 ? 2e3 : 40.0;
        const auto br = detail::conv_breaks(R, sc, far);
        const double v = radial_convolution(f, Gp, g, R, br, 1);
        const double ref = k.density(t + s, R);
        worst = std::max(worst, std::abs(v - ref) / ref);
    }
    return worst;
}

} // namespace hk
