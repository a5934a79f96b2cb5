#include "hk/stable_kernel.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <sstream>
#include <utility>

using namespace hk;

namespace {

double cauchy(double t, double r) { return t / (pi * pi * std::pow(t * t + r * r, 2)); }
double gauss(double t, double r) { return std::pow(4.0 * pi * t, -1.5) * std::exp(-r * r / (4.0 * t)); }

const StableKernel& k1() {
    static const StableKernel k(3, 1.0);
    return k;
}
const StableKernel& k15() {
    static const StableKernel k(3, 1.5);
    return k;
}
const StableKernel& k2() {
    static const StableKernel k(3, 2.0);
    return k;
}

long double E_primitive_ld(long double tau, long double q, long double m, long double a) {
    const long double qc = std::pow(tau, 1.0L / a), top = std::pow(tau, -m / a);
    if (q <= qc) return tau * top * q * q / 2.0L;
    return tau * (top * qc * qc / 2.0L + (std::pow(qc, 2.0L - m) - std::pow(q, 2.0L - m)) / (m - 2.0L));
}

} // namespace

TEST(StableDensity, CauchyClosedForm) {
    for (double t : {0.1, 1.0, 3.0})
        for (int i = 0; i <= 400; ++i) {
            const double r = i == 0 ? 0.0 : 1e-4 * std::pow(1e8, i / 400.0);
            EXPECT_NEAR(k1().density(t, r) / cauchy(t, r), 1.0, 1e-6) << t << " " << r;
        }
    for (double r : {0.0, 0.3, 1.0, 1.7, 12.0, 29.0, 31.0, 500.0}) EXPECT_NEAR(k1().p1_direct(r) / cauchy(1, r), 1.0, 1e-12);
}

TEST(StableDensity, GaussianClosedForm) {
    for (double t : {0.01, 0.5, 1.0, 7.0})
        for (int i = 0; i <= 300; ++i) {
            const double r = 0.1 * i * std::sqrt(t);
            EXPECT_NEAR(k2().density(t, r) / gauss(t, r), 1.0, 1e-8);
            // quadrature path, while the density is still resolvable in double precision
            if (r <= 6.0 * std::sqrt(t)) EXPECT_NEAR(k2().density_direct(t, r) / gauss(t, r), 1.0, 1e-8) << t << " " << r;
        }
}

TEST(StableDensity, Normalization) {
    for (double a : {1.0, 1.25, 1.5, 1.75, 2.0}) {
        const StableKernel k(3, a);
        EXPECT_NEAR(k.mass(), 1.0, 1e-6) << a;
    }
}

TEST(StableDensity, PositiveAndMonotoneOnCache) {
    std::stringstream ss;
    k15().export_csv(ss);
    std::string line;
    std::getline(ss, line);
    double prev = 1e300;
    int rows = 0;
    while (std::getline(ss, line)) {
        const double p = std::stod(line.substr(line.find(',') + 1));
        ASSERT_GT(p, 0.0);
        ASSERT_LE(p, prev);
        prev = p;
        ++rows;
    }
    EXPECT_EQ(rows, 4096);
}

TEST(StableDensity, SelfSimilarityFromScratch) {
    for (double r : {0.0, 0.2, 0.9, 1.5, 4.0, 20.0}) {
        const double a = k15().density_direct(0.3, r);
        const double b = std::pow(0.3, -2.0) * k15().p1_direct(std::pow(0.3, -1.0 / 1.5) * r);
        EXPECT_NEAR(a / b, 1.0, 1e-6) << r;
        EXPECT_NEAR(k15().density(2.5, r) / k15().density_direct(2.5, r), 1.0, 1e-6) << r;
    }
}

TEST(StableDensity, TailConstantStabilizes) {
    std::vector<double> ratios;
    for (double r : {20.0, 40.0, 80.0}) ratios.push_back(k15().p1(r) * std::pow(r, 4.5));
    EXPECT_LT(std::abs(ratios[2] - ratios[1]), std::abs(ratios[1] - ratios[0]));
    EXPECT_NEAR(ratios[2] / k15().tail_constant(), 1.0, 0.01);
    EXPECT_NEAR(k15().tail_constant(), 0.119051, 1e-5);
}

TEST(StableDensity, BranchesAgreeAtSwitches) {
    for (double r : {1.0, 30.0}) {
        const double h = 1e-9 * r;
        EXPECT_NEAR(k15().p1_direct(r - h) / k15().p1_direct(r + h), 1.0, 1e-8);
    }
    EXPECT_NEAR(k15().p1(1e-4 * 0.999) / k15().p1(1e-4 * 1.001), 1.0, 1e-8);
}

TEST(StableDensity, Errors) {
    EXPECT_THROW(k15().density(0.0, 1.0), domain_error);
    EXPECT_THROW(k15().p1(-1.0), domain_error);
    const StableKernel k4(4, 1.5);
    EXPECT_THROW(k4.p1(1.0), domain_error);
    EXPECT_DOUBLE_EQ(k4.comparator(1.0, 0.0), 1.0);
    EXPECT_THROW(StableKernel(3, 2.5), domain_error);
}

TEST(Comparator, Examples) {
    const auto& k = k15();
    EXPECT_DOUBLE_EQ(k.comparator(0.7, 0.0), std::pow(0.7, -2.0));
    const double t = 0.4, rc = std::pow(t, 1.0 / 1.5);
    EXPECT_NEAR(k.comparator(t, rc), std::pow(t, -2.0), 1e-12);
    EXPECT_NEAR(k.comparator(1.0, 2.0), std::pow(2.0, -4.5), 1e-15);
}

TEST(EKernel, Examples) {
    const auto& k = k15();
    EXPECT_NEAR(k.E_kernel(0.5, 0.0), std::pow(0.5, -4.0 / 1.5), 1e-12);
    EXPECT_DOUBLE_EQ(k.E_kernel(1.0, 1.0), 1.0);
    for (double lam : {0.3, 2.0})
        for (double r : {0.0, 0.4, 3.0})
            EXPECT_NEAR(k.E_kernel(std::pow(lam, 1.5) * 0.8, lam * r), std::pow(lam, -4.0) * k.E_kernel(0.8, r),
                        1e-12 * k.E_kernel(std::pow(lam, 1.5) * 0.8, lam * r));
}

TEST(CalibrateK0, Values) {
    EXPECT_THROW(calibrate_k0(k2()), domain_error);
    // Cauchy: sup of comparator / p sits at the crossover rho = 1, giving 4 pi^2.
    EXPECT_NEAR(calibrate_k0(k1(), 401), 4.0 * pi * pi, 1e-6);
    const double a = calibrate_k0(k15(), 400), b = calibrate_k0(k15(), 801);
    EXPECT_NEAR(a / b, 1.0, 0.01);
    EXPECT_TRUE(std::isfinite(a));
}

TEST(GradientBound, CauchyOracle) {
    const auto rep = check_gradient_bound(k1(), 200);
    double best = 0.0;
    for (double r : rep.grid) {
        const double dp = 4.0 * r / (pi * pi * std::pow(1.0 + r * r, 3));
        best = std::max(best, dp / std::min(1.0, std::pow(r, -5.0)));
    }
    EXPECT_NEAR(rep.value / best, 1.0, 1e-5);
}

TEST(GradientBound, StableUnderRefinement) {
    const auto rep = check_gradient_bound(k15());
    EXPECT_TRUE(std::isfinite(rep.value));
    EXPECT_LT(rep.relative_change, 0.02);
}

TEST(ConvolutionInequalities, PrimitiveDifferenceIsCancellationFree) {
    const double m = 5.5, a = 1.5;
    for (double tau : {0.01, 0.5, 1.0}) {
        for (auto [lo, hi] : {std::pair{0.01, 0.05}, std::pair{0.05, 3.0}, std::pair{0.5, 2.0}}) {
            const double ref = static_cast<double>(E_primitive_ld(tau, hi, m, a) - E_primitive_ld(tau, lo, m, a));
            EXPECT_NEAR(detail::E_primitive_diff(tau, lo, hi, hi - lo, m, a), ref, 1e-13 * std::abs(ref));
        }
        // Far field: the difference over [R - x, R + x] is 2 x R g(R) to leading order.
        const double R = 100.0, x = 1e-6;
        const double lead = 2.0 * x * R * tau * std::pow(R, -m);
        EXPECT_NEAR(detail::E_primitive_diff(tau, R - x, R + x, 2.0 * x, m, a), lead, 1e-9 * lead);
    }
}

TEST(ConvolutionInequalities, FiniteAndStable) {
    const auto rep = check_convolution_inequalities(k15());
    ASSERT_EQ(rep.separations.size(), 9u);
    for (std::size_t i = 0; i < 9; ++i) {
        EXPECT_TRUE(std::isfinite(rep.ratio_k2[i]) && rep.ratio_k2[i] > 0.0);
        EXPECT_TRUE(std::isfinite(rep.ratio_k3[i]) && rep.ratio_k3[i] > 0.0);
    }
    EXPECT_NEAR(rep.k2_refined / rep.k2, 1.0, 0.1);
    EXPECT_NEAR(rep.k3_refined / rep.k3, 1.0, 0.1);
}

TEST(ChapmanKolmogorov, Residuals) {
    EXPECT_LT(chapman_kolmogorov_check(k2(), 0.5, 0.5), 1e-8);
    EXPECT_LT(chapman_kolmogorov_check(k1(), 0.5, 0.5), 1e-5);
    EXPECT_LT(chapman_kolmogorov_check(k15(), 0.5, 0.5), 1e-4);
    EXPECT_LT(chapman_kolmogorov_check(k15(), 0.2, 1.3), 1e-4);
}

TEST(RadialConvolution, PrimitiveTable) {
    const RadialPrimitive G([](double u) { return std::exp(-u * u); }, 1e-6, 10.0, 200);
    for (double q : {0.0, 0.5, 1.0, 3.0, 20.0}) EXPECT_NEAR(G(q), 0.5 * (1.0 - std::exp(-q * q)), 1e-14);
}

TEST(ProfileCsv, RoundTrip) {
    std::stringstream ss;
    k15().export_csv(ss);
    const auto back = StableKernel::import_csv(ss, 1.5);
    for (double r : {0.0, 1e-3, 0.5, 2.0, 50.0, 5e3}) EXPECT_NEAR(back.p1(r) / k15().p1(r), 1.0, 1e-14) << r;
    std::stringstream bad("x,y\n1,2\n");
    EXPECT_THROW(StableKernel::import_csv(bad, 1.5), domain_error);
}
