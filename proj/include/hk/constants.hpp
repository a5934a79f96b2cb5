#pragma once

#include <cmath>
#include <complex>
#include <numbers>
#include <stdexcept>
#include <string>

namespace hk {

struct domain_error : std::domain_error {
    using std::domain_error::domain_error;
};

struct solver_error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct quadrature_error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

inline constexpr double pi = std::numbers::pi;

enum class ModelMode { drift, schrodinger, oracle };

/// Problem definition: dimension, stability index, relative drift bound and
/// regularization.
struct ModelParams {
    int d = 3;
    double alpha = 1.5;
    double delta = 1.0;
    double epsilon = 1e-3;

    void validate(ModelMode mode = ModelMode::drift) const {
        if (d < 3) throw domain_error("d must be >= 3");
        if (!(epsilon >= 0.0)) throw domain_error("epsilon must be >= 0");
        switch (mode) {
        case ModelMode::drift:
            if (!(alpha > 1.0 && alpha < 2.0)) throw domain_error("drift mode needs alpha in (1,2)");
            if (!(delta > 0.0 && delta < 4.0)) throw domain_error("drift mode needs delta in (0,4)");
            break;
        case ModelMode::schrodinger:
            if (!(alpha > 0.0 && alpha < 2.0)) throw domain_error("schrodinger mode needs alpha in (0,2)");
            if (!(delta > 0.0 && delta <= 1.0)) throw domain_error("schrodinger mode needs delta in (0,1]");
            break;
        case ModelMode::oracle:
            if (!(alpha > 0.0 && alpha <= 2.0)) throw domain_error("alpha must lie in (0,2]");
            if (!(delta > 0.0 && delta <= 4.0)) throw domain_error("delta must lie in (0,4]");
            break;
        }
    }
};

namespace detail {

// Lanczos approximation, g = 7, n = 9 (Godfrey's coefficients).
inline constexpr double lanczos_g = 7.0;
inline constexpr double lanczos_coef[9] = {
    0.99999999999980993,  676.5203681218851,     -1259.1392167224028,
    771.32342877765313,   -176.61502916214059,   12.507343278686905,
    -0.13857109526572012, 9.9843695780195716e-6, 1.5056327351493116e-7};

inline double lanczos_series(double z) {
    double a = lanczos_coef[0];
    for (int k = 1; k < 9; ++k) a += lanczos_coef[k] / (z + k);
    return a;
}

} // namespace detail

/// Euler Gamma for x > 0.
inline double gamma_fn(double x) {
    if (!(x > 0.0) || !std::isfinite(x)) throw domain_error("gamma_fn: argument must be positive");
    if (x < 0.5) {
        // Recurrence keeps the Lanczos sum in its accurate range.
        return gamma_fn(x + 1.0) / x;
    }
    if (x == std::floor(x) && x <= 21.0) {
        double f = 1.0;
        for (int k = 2; k < static_cast<int>(x); ++k) f *= k;
        return f;
    }
    const double z = x - 1.0;
    const double t = z + detail::lanczos_g + 0.5;
    return std::sqrt(2.0 * pi) * std::pow(t, z + 0.5) * std::exp(-t) * detail::lanczos_series(z);
}

/// log Gamma for x > 0, same approximation.
inline double log_gamma_fn(double x) {
    if (!(x > 0.0) || !std::isfinite(x)) throw domain_error("log_gamma_fn: argument must be positive");
    if (x < 0.5) return log_gamma_fn(x + 1.0) - std::log(x);
    const double z = x - 1.0;
    const double t = z + detail::lanczos_g + 0.5;
    return 0.5 * std::log(2.0 * pi) + (z + 0.5) * std::log(t) - t + std::log(detail::lanczos_series(z));
}

/// Principal log Gamma for complex z with Re z > 0.
inline std::complex<double> log_gamma_complex(std::complex<double> z) {
    if (!(z.real() > 0.0)) throw domain_error("log_gamma_complex: Re z must be positive");
    if (z.real() < 0.5) return log_gamma_complex(z + 1.0) - std::log(z);
    const std::complex<double> w = z - 1.0;
    std::complex<double> a = detail::lanczos_coef[0];
    for (int k = 1; k < 9; ++k) a += detail::lanczos_coef[k] / (w + static_cast<double>(k));
    const std::complex<double> t = w + detail::lanczos_g + 0.5;
    return 0.5 * std::log(2.0 * pi) + (w + 0.5) * std::log(t) - t + std::log(a);
}

/// gamma(s) = 2^s pi^{d/2} Gamma(s/2) / Gamma((d-s)/2), 0 < s < d.
inline double gamma_weight(double s, int d) {
    if (!(s > 0.0 && s < d)) throw domain_error("gamma_weight: s must lie in (0,d)");
    return std::exp(s * std::log(2.0) + 0.5 * d * std::log(pi) + log_gamma_fn(0.5 * s) -
                    log_gamma_fn(0.5 * (d - s)));
}

/// Sharp Hardy-Rellich constant c_{d,alpha} = 2^{alpha/2} Gamma((d+alpha)/4)/Gamma((d-alpha)/4).
inline double hardy_constant(int d, double alpha) {
    if (!(alpha > 0.0 && alpha < d)) throw domain_error("hardy_constant: alpha must lie in (0,d)");
    return std::pow(2.0, 0.5 * alpha) * gamma_fn(0.25 * (d + alpha)) / gamma_fn(0.25 * (d - alpha));
}

inline double hardy_constant(const ModelParams& p) { return hardy_constant(p.d, p.alpha); }

/// Drift strength from the Gamma formula.
inline double kappa(const ModelParams& p) {
    p.validate(ModelMode::oracle);
    const double g = gamma_fn(0.25 * (p.d + p.alpha)) / gamma_fn(0.25 * (p.d - p.alpha));
    return std::sqrt(p.delta) * std::pow(2.0, p.alpha + 1.0) / (p.d - p.alpha) * g * g;
}

/// Drift strength via the Hardy-Rellich constant: sqrt(delta) 2 c^2/(d-alpha).
inline double kappa_from_hardy(const ModelParams& p) {
    p.validate(ModelMode::oracle);
    const double c = hardy_constant(p);
    return std::sqrt(p.delta) * 2.0 * c * c / (p.d - p.alpha);
}

/// Critical Lebesgue exponent 2/(2 - sqrt(delta)).
inline double r_crit(double delta) {
    if (!(delta > 0.0 && delta < 4.0)) throw domain_error("r_crit: delta must lie in (0,4)");
    return 2.0 / (2.0 - std::sqrt(delta));
}

inline double j_prime(const ModelParams& p) { return p.d / p.alpha; }

/// F(alpha) = (d-alpha) G((d-2+2a)/4) G((d-a)/4)^2 - 4 G((d+2-2a)/4) G((d+a)/4)^2.
inline double rellich_F(double alpha, int d) {
    if (!(alpha > 0.0 && alpha <= 2.0)) throw domain_error("rellich_F: alpha must lie in (0,2]");
    const double gm = gamma_fn(0.25 * (d - alpha));
    const double gp = gamma_fn(0.25 * (d + alpha));
    return (d - alpha) * gamma_fn(0.25 * (d - 2.0 + 2.0 * alpha)) * gm * gm -
           4.0 * gamma_fn(0.25 * (d + 2.0 - 2.0 * alpha)) * gp * gp;
}

/// c(alpha-1, d) = gamma(d/2 - alpha + 1)/gamma(d/2).
inline double rellich_c(double alpha, int d) {
    if (!(alpha >= 1.0 && alpha < 2.0)) throw domain_error("rellich_c: alpha must lie in [1,2)");
    return gamma_weight(0.5 * d - alpha + 1.0, d) / gamma_weight(0.5 * d, d);
}

/// Closed-form constants of the model; beta and the gamma ratio are filled by
/// the beta solver (see derive_constants in beta_solver.hpp).
struct DerivedConstants {
    double kappa = 0.0;
    double c_hardy = 0.0;
    double beta = 0.0;
    double r_crit = 0.0;
    double j_prime = 0.0;
    double gamma_beta_ratio = 0.0;
};

} // namespace hk
