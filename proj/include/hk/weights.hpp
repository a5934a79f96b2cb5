#pragma once

#include "hk/constants.hpp"

#include "json.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <string>

namespace hk {

enum class BridgeKind { quintic, smooth_exp };

inline const char* to_string(BridgeKind k) { return k == BridgeKind::quintic ? "quintic" : "smooth_exp"; }

/**
 * Weight profile eta: r^{-(d-beta)} on (0,1), a C^2 bridge on [1,2], and 1/2
 * beyond 2. The default bridge is the quintic Hermite interpolant of the
 * endpoint jets; if it fails the monotonicity / lower-bound scan the profile
 * switches to 1/2 + S(r-1) exp(q(r-1))/2 with S the reversed quintic
 * smoothstep, which is C^2, monotone and >= 1/2 for every exponent.
 */
class WeightProfile {
public:
    WeightProfile() = default;

    WeightProfile(int d, double alpha, double beta) : d_(d), alpha_(alpha), beta_(beta) {
        if (!(beta > 0.0 && beta <= d)) throw domain_error("WeightProfile: beta must lie in (0,d]");
        p_ = d - beta;
        const double y0 = 1.0, y0p = -p_, y0pp = p_ * (p_ + 1.0);
        const double y1 = 0.5, y1p = 0.0, y1pp = 0.0;
        const double A = y1 - y0 - y0p - 0.5 * y0pp;
        const double B = y1p - y0p - y0pp;
        const double C = y1pp - y0pp;
        coef_ = {y0, y0p, 0.5 * y0pp, 10.0 * A - 4.0 * B + 0.5 * C, -15.0 * A + 7.0 * B - C,
                 6.0 * A - 3.0 * B + 0.5 * C};
        // Same quintic as 1/2 + u^3 (h0 + h1 u + h2 u^2) in u = 1 - s, exact at r = 2.
        const double h2 = (y0pp - 6.0 * p_ + 6.0) / 2.0;
        const double h1 = p_ - 1.5 - 2.0 * h2;
        hc_ = {0.5 - h1 - h2, h1, h2};
        kind_ = BridgeKind::quintic;
        if (!bridge_ok()) kind_ = BridgeKind::smooth_exp;
        if (!bridge_ok()) throw solver_error("WeightProfile: no admissible bridge");
        compute_comparability();
    }

    int d() const { return d_; }
    double alpha() const { return alpha_; }
    double beta() const { return beta_; }
    double exponent() const { return p_; } // d - beta
    BridgeKind kind() const { return kind_; }
    const std::array<double, 6>& bridge_coeffs() const { return coef_; }
    double c_lo() const { return c_lo_; }
    double c_hi() const { return c_hi_; }

    /// eta and its first two derivatives.
    std::array<double, 3> eta_jet(double r) const {
        if (!(r > 0.0)) throw domain_error("eta: r must be positive");
        if (r < 1.0) {
            const double v = std::pow(r, -p_);
            return {v, -p_ * v / r, p_ * (p_ + 1.0) * v / (r * r)};
        }
        if (r >= 2.0) return {0.5, 0.0, 0.0};
        return bridge_jet(r - 1.0);
    }

    double eta(double r) const { return eta_jet(r)[0]; }

    /// phi_t(|y|) = eta(t^{-1/alpha}|y|).
    double phi(double t, double y_norm) const {
        if (!(t > 0.0)) throw domain_error("phi: t must be positive");
        if (!(y_norm > 0.0)) throw domain_error("phi: |y| must be positive");
        return eta(std::pow(t, -1.0 / alpha_) * y_norm);
    }

    /// Pure power law (s^{-1/alpha}|x|)^{-(d-beta)}.
    double phi_tilde(double s, double x_norm) const {
        if (!(s > 0.0)) throw domain_error("phi_tilde: s must be positive");
        if (!(x_norm > 0.0)) throw domain_error("phi_tilde: |x| must be positive");
        return std::pow(std::pow(s, -1.0 / alpha_) * x_norm, -p_);
    }

    nlohmann::json to_json() const {
        return {{"d", d_},
                {"alpha", alpha_},
                {"beta", beta_},
                {"bridge", to_string(kind_)},
                {"bridge_coeffs", coef_},
                {"c_lo", c_lo_},
                {"c_hi", c_hi_}};
    }

private:
    std::array<double, 3> bridge_jet(double s) const {
        if (kind_ == BridgeKind::quintic) {
            const auto& h = hc_;
            const double u = 1.0 - s;
            const double P = h[0] + u * (h[1] + u * h[2]);
            const double P1 = h[1] + 2.0 * u * h[2];
            const double P2 = 2.0 * h[2];
            return {0.5 + u * u * u * P, -(3.0 * u * u * P + u * u * u * P1),
                    6.0 * u * P + 6.0 * u * u * P1 + u * u * u * P2};
        }
        const double S = (1.0 - s) * (1.0 - s) * (1.0 - s) * (1.0 + 3.0 * s + 6.0 * s * s);
        const double S1 = -30.0 * s * s * (1.0 - s) * (1.0 - s);
        const double S2 = -60.0 * s * (1.0 - s) * (1.0 - 2.0 * s);
        const double q = -2.0 * p_ * s + (p_ - p_ * p_) * s * s;
        const double q1 = -2.0 * p_ + 2.0 * (p_ - p_ * p_) * s;
        const double q2 = 2.0 * (p_ - p_ * p_);
        const double E = std::exp(q);
        const double E1 = q1 * E;
        const double E2 = (q2 + q1 * q1) * E;
        return {0.5 + 0.5 * S * E, 0.5 * (S1 * E + S * E1), 0.5 * (S2 * E + 2.0 * S1 * E1 + S * E2)};
    }

    bool bridge_ok() const {
        const int n = 4000;
        double prev = bridge_jet(0.0)[0];
        for (int i = 1; i <= n; ++i) {
            const double v = bridge_jet(static_cast<double>(i) / n)[0];
            if (v < 0.5 - 1e-12 || v > prev + 1e-14) return false;
            prev = v;
        }
        return true;
    }

    void compute_comparability() {
        double lo = 1.0, hi = 1.0;
        const int n = 4000;
        for (int i = 0; i <= n; ++i) {
            const double v = bridge_jet(static_cast<double>(i) / n)[0];
            lo = std::min(lo, v);
            hi = std::max(hi, v);
        }
        c_lo_ = std::min(lo, 0.5);
        c_hi_ = hi;
    }

    int d_ = 3;
    double alpha_ = 1.5;
    double beta_ = 2.25;
    double p_ = 0.75;
    std::array<double, 6> coef_{};
    std::array<double, 3> hc_{};
    BridgeKind kind_ = BridgeKind::quintic;
    double c_lo_ = 0.5;
    double c_hi_ = 1.0;
};

} // namespace hk
