#include "hk/beta_solver.hpp"

#include <gtest/gtest.h>

#include <sstream>

using namespace hk;

TEST(BetaLhs, TwoFormsAgree) {
    for (int d : {3, 4, 5})
        for (double a : {1.25, 1.5, 1.75}) {
            ModelParams p{d, a, 1.0, 0.0};
            for (int i = 1; i < 50; ++i) {
                const double b = a + (d - a) * i / 50.0;
                EXPECT_NEAR(beta_lhs(b, p) / beta_lhs_gamma_form(b, p), 1.0, 1e-12);
            }
        }
}

TEST(BetaLhs, MidpointAndEndpoints) {
    for (int d : {3, 4, 6})
        for (double a : {1.25, 1.5, 1.75}) {
            ModelParams p{d, a, 1.0, 0.0};
            EXPECT_NEAR(beta_lhs(0.5 * (d + a), p) / kappa(p), 1.0, 1e-12);
            EXPECT_LT(beta_lhs(d - 1e-9, p), 1e-8);
            // beta -> alpha limit: 2^{a-1} Gamma(a/2) Gamma(d/2) / Gamma((d-a)/2).
            const double lim = std::pow(2.0, a - 1) * gamma_fn(a / 2) * gamma_fn(d / 2.0) / gamma_fn((d - a) / 2);
            EXPECT_NEAR(beta_lhs(a + 1e-10, p) / lim, 1.0, 1e-8);
            // The limit exceeds kappa(delta = 4) for alpha < 2.
            EXPECT_GT(lim, kappa(ModelParams{d, a, 4.0, 0.0}));
        }
    EXPECT_THROW(beta_lhs(1.5, ModelParams{3, 1.5, 1.0, 0.0}), domain_error);
}

TEST(SolveBeta, ClosedFormAtDeltaOne) {
    for (int d : {3, 4, 5})
        for (double a : {1.25, 1.5, 1.75}) {
            const auto s = solve_beta(ModelParams{d, a, 1.0, 0.0});
            EXPECT_NEAR(s.beta, 0.5 * (d + a), 1e-10);
        }
    const auto s = solve_beta(ModelParams{3, 1.5, 1.0, 0.0});
    EXPECT_NEAR(3.0 - s.beta, 0.75, 1e-10);
}

TEST(SolveBeta, ReferenceRoots) {
    // 40-digit reference roots for d = 3, alpha = 1.5.
    const std::pair<double, double> ref[] = {{0.01, 2.9280414252970158967}, {0.25, 2.6296218623990534437},
                                             {0.5, 2.4718828564607406217},  {2.0, 1.947593843622070739},
                                             {3.5, 1.6421915709824313256},  {3.96, 1.5686602326771907363}};
    for (auto [dl, b] : ref) EXPECT_NEAR(solve_beta(ModelParams{3, 1.5, dl, 0.0}).beta, b, 1e-11) << dl;
}

TEST(SolveBeta, SweepResidualsAndShape) {
    for (int d : {3, 4, 5})
        for (double a : {1.25, 1.5, 1.75}) {
            const auto rows = fig1_data(d, a, default_delta_grid(50));
            double prev = -1.0;
            for (const auto& r : rows) {
                EXPECT_LT(r.residual, 1e-10);
                EXPECT_GT(r.beta, a);
                EXPECT_LT(r.beta, d);
                EXPECT_GT(r.d_minus_beta, prev);
                prev = r.d_minus_beta;
                ModelParams p{d, a, r.delta, 0.0};
                EXPECT_NEAR(gamma_ratio(r.beta, p), (r.beta - a) * kappa(p), 1e-10);
            }
        }
}

TEST(SolveBeta, Endpoints) {
    const auto lo = solve_beta(ModelParams{3, 1.5, 1e-6, 0.0});
    EXPECT_LT(3.0 - lo.beta, 1e-2);
    // delta -> 4: the root stays strictly inside (alpha, d); for (3, 1.5) the
    // limit root of beta_lhs = kappa(4) sits at beta - alpha = 0.0625996...
    const auto hi = solve_beta(ModelParams{3, 1.5, 4.0 - 1e-10, 0.0});
    EXPECT_NEAR(hi.beta - 1.5, 0.0625996, 1e-6);
    EXPECT_GT(hi.beta, 1.5);
    const auto small = solve_beta(ModelParams{3, 1.5, 0.01, 0.0});
    EXPECT_LT(3.0 - small.beta, 0.2);
}

TEST(BetaLhs, AlphaTwoLimitMatchesKappaFour) {
    // At alpha = 2 the beta -> alpha limit equals kappa(4) = d - 2.
    for (int d = 3; d <= 8; ++d) {
        ModelParams p{d, 2.0, 1.0, 0.0};
        EXPECT_NEAR(beta_lhs(2.0 + 1e-10, p), d - 2.0, 1e-8);
    }
}

TEST(SolveBeta, SolutionMetadata) {
    const auto s = solve_beta(ModelParams{3, 1.5, 2.0, 0.0});
    EXPECT_EQ(s.sign_changes, 1);
    EXPECT_TRUE(s.scan_monotone);
    EXPECT_LT(s.bracket.second - s.bracket.first, 1e-12);
    EXPECT_GT(s.iterations, 0);
    EXPECT_THROW(solve_beta(ModelParams{3, 1.5, 5.0, 0.0}), domain_error);
}

TEST(SolveBetaSchrodinger, ScanOracle) {
    // Dense scan: the ratio gamma(b)/gamma(b-a) is symmetric about (d+a)/2
    // and peaks there at c^2.
    for (double a : {0.5, 1.0, 1.5}) {
        ModelParams p{3, a, 1.0, 0.0};
        const double c2 = std::pow(hardy_constant(p), 2);
        const double mid = 0.5 * (3 + a);
        double best = 0.0, best_b = 0.0;
        for (int i = 1; i < 20000; ++i) {
            const double b = a + (3 - a) * i / 20000.0;
            const double r = gamma_ratio(b, p);
            if (r > best) best = r, best_b = b;
        }
        EXPECT_NEAR(best / c2, 1.0, 1e-6);
        EXPECT_NEAR(best_b, mid, 2e-3);
        EXPECT_NEAR(gamma_ratio(mid + 0.3, p), gamma_ratio(mid - 0.3, p), 1e-12);
        const auto s = solve_beta_schrodinger(p);
        EXPECT_NEAR(s.beta, mid, 1e-12);
    }
}

TEST(SolveBetaSchrodinger, Branch) {
    const auto s = solve_beta_schrodinger(ModelParams{3, 1.5, 0.5, 0.0});
    EXPECT_NEAR(s.beta, 2.7869183964643492488, 1e-11);
    const auto s1 = solve_beta_schrodinger(ModelParams{3, 1.0, 0.5, 0.0});
    EXPECT_NEAR(s1.beta, 2.7420192964071031808, 1e-11);
    EXPECT_LT(s1.residual, 1e-10);
    const auto s0 = solve_beta_schrodinger(ModelParams{3, 1.5, 1e-6, 0.0});
    EXPECT_GT(s0.beta, 2.99);
    EXPECT_THROW(solve_beta_schrodinger(ModelParams{3, 1.5, 1.5, 0.0}), domain_error);
}

TEST(DerivedConstants, Consistency) {
    const auto c = derive_constants(ModelParams{3, 1.5, 1.0, 0.0});
    EXPECT_NEAR(c.beta, 2.25, 1e-10);
    EXPECT_NEAR(c.gamma_beta_ratio, (c.beta - 1.5) * c.kappa, 1e-10);
    EXPECT_NEAR(c.j_prime, 2.0, 1e-15);
    EXPECT_NEAR(c.r_crit, 2.0, 1e-15);
    EXPECT_GT(c.kappa, 0.0);
}

TEST(Fig1, CsvHeader) {
    std::ostringstream os;
    write_fig1_csv(os, fig1_data(3, 1.5, {0.5, 1.0}));
    const auto s = os.str();
    EXPECT_EQ(s.substr(0, s.find('\n')), "delta,beta,d_minus_beta,residual");
    EXPECT_THROW(fig1_data(3, 1.5, {4.5}), domain_error);
}
