#include "hk/mc_sim.hpp"

#include <boost/math/distributions/chi_squared.hpp>
#include <gtest/gtest.h>

#include <cmath>

using namespace hk;

namespace {

const ModelParams kDrift{3, 1.5, 1.0, 0.0};

std::vector<double> subordinator_samples(double dt, double a, std::size_t n, std::uint64_t seed) {
    std::vector<double> s(n);
    for (std::size_t i = 0; i < n; ++i) {
        PathRng rng(seed, i);
        s[i] = sample_subordinator_increment(dt, a, rng);
    }
    return s;
}

McConfig quick_mc(std::size_t n) {
    McConfig mc;
    mc.n_paths = n;
    return mc;
}

} // namespace

TEST(Subordinator, LaplaceTransform) {
    for (double a : {0.75, 0.5}) {
        const auto checks = laplace_test(0.4, a, {0.5, 1.0, 2.0}, 1000000, 11);
        for (const auto& c : checks) EXPECT_TRUE(c.within(4.0)) << a << " " << c.to_json();
    }
}

TEST(Subordinator, PositiveAndValidated) {
    for (double v : subordinator_samples(1e-3, 0.75, 100000, 3)) ASSERT_GT(v, 0.0);
    PathRng rng(1, 1);
    EXPECT_THROW(sample_subordinator_increment(1.0, 1.0, rng), domain_error);
    EXPECT_THROW(sample_subordinator_increment(1.0, 0.0, rng), domain_error);
    EXPECT_THROW(sample_subordinator_increment(0.0, 0.5, rng), domain_error);
}

TEST(Subordinator, AdditivityAndScaling) {
    const double a = 0.75, dt = 0.3;
    const auto s1 = subordinator_samples(dt, a, 100000, 5), s2 = subordinator_samples(dt, a, 100000, 6);
    auto sum = s1;
    for (std::size_t i = 0; i < sum.size(); ++i) sum[i] += s2[i];
    EXPECT_GT(ks_two_sample(sum, subordinator_samples(2 * dt, a, 100000, 7)).p_value, 0.01);
    auto unit = subordinator_samples(1.0, a, 100000, 8);
    for (double& v : unit) v *= std::pow(dt, 1.0 / a);
    EXPECT_GT(ks_two_sample(subordinator_samples(dt, a, 100000, 9), unit).p_value, 0.01);
}

TEST(StableIncrement, CharacteristicFunction) {
    for (double alpha : {1.5, 1.0}) {
        const ModelParams p{3, alpha, 1.0, 0.0};
        for (const auto& c : characteristic_test(0.5, p, {0.5, 1.0, 2.0}, 1000000, 21))
            EXPECT_TRUE(c.within(4.0)) << alpha << " " << c.to_json();
    }
}

TEST(StableIncrement, RotationInvariance) {
    const std::size_t n = 100000;
    std::vector<double> first(n), third(n);
    for (std::size_t i = 0; i < n; ++i) {
        PathRng rng(31, i);
        const auto z = sample_stable_increment(0.2, kDrift, rng);
        first[i] = z[0];
        third[i] = z[2];
    }
    EXPECT_GT(ks_two_sample(first, third).p_value, 0.01);
}

TEST(StableIncrement, GaussianLimit) {
    const ModelParams p{3, 2.0, 1.0, 0.0};
    const std::size_t n = 200000;
    const double dt = 0.7;
    double s2 = 0.0, s4 = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        PathRng rng(41, i);
        const double z = sample_stable_increment(dt, p, rng)[1];
        s2 += z * z;
        s4 += z * z * z * z;
    }
    const double var = s2 / n, se = std::sqrt((s4 / n - var * var) / n);
    EXPECT_NEAR(var, 2.0 * dt, 4.0 * se);
    EXPECT_NEAR(s4 / n / (var * var), 3.0, 0.05); // Gaussian kurtosis
}

TEST(KolmogorovSmirnov, Sanity) {
    EXPECT_DOUBLE_EQ(kolmogorov_q(0.0), 1.0);
    EXPECT_NEAR(kolmogorov_q(1.3581), 0.05, 1e-3);
    std::vector<double> a, b, c;
    for (std::size_t i = 0; i < 20000; ++i) {
        PathRng r(51, i);
        a.push_back(r.normal());
        b.push_back(r.normal());
        c.push_back(r.normal() + 0.1);
    }
    EXPECT_GT(ks_two_sample(a, b).p_value, 0.01);
    EXPECT_LT(ks_two_sample(a, c).p_value, 1e-6);
    EXPECT_THROW(ks_two_sample({}, a), domain_error);
}

TEST(Simulate, DeterministicAndFinite) {
    const auto a = simulate(kDrift, 1e-3, {0.0, 0.0, 0.3}, 0.5, 0.01, 2000, 99);
    const auto b = simulate(kDrift, 1e-3, {0.0, 0.0, 0.3}, 0.5, 0.01, 2000, 99);
    const auto c = simulate(kDrift, 1e-3, {0.0, 0.0, 0.3}, 0.5, 0.01, 2000, 100);
    EXPECT_EQ(a.positions, b.positions);
    EXPECT_NE(a.positions, c.positions);
    for (double v : a.positions) ASSERT_TRUE(std::isfinite(v));
    EXPECT_GE(a.substeps, 2000u * 50u);
    EXPECT_EQ(a.floor_hits, 0u);
    // a prefix of the paths does not depend on the ensemble size
    const auto d = simulate(kDrift, 1e-3, {0.0, 0.0, 0.3}, 0.5, 0.01, 500, 99);
    EXPECT_TRUE(std::equal(d.positions.begin(), d.positions.end(), a.positions.begin()));
}

TEST(Simulate, ZeroDriftTakesOneStep) {
    SimulationOptions opt;
    opt.zero_drift = true;
    const auto e = simulate(kDrift, 1e-3, {0.0, 0.0, 0.3}, 0.5, 0.01, 1000, 5, opt);
    EXPECT_EQ(e.substeps, 1000u);
    EXPECT_EQ(e.kappa, 0.0);
}

TEST(Simulate, Errors) {
    EXPECT_THROW(simulate(kDrift, 0.0, {0, 0, 1}, 1.0, 0.01, 10, 1), domain_error);
    EXPECT_THROW(simulate(kDrift, 1e-3, {0, 1}, 1.0, 0.01, 10, 1), domain_error);
    EXPECT_THROW(simulate(kDrift, 1e-3, {0, 0, 1}, 1.0, 0.01, 0, 1), domain_error);
    EXPECT_THROW(simulate(kDrift, 1e-3, {0, 0, 1}, -1.0, 0.01, 10, 1), domain_error);
}

TEST(Simulate, DriftPushesInward) {
    const std::size_t n = 100000;
    SimulationOptions free;
    free.zero_drift = true;
    const auto d = simulate(kDrift, 1e-3, {0.0, 0.0, 1.0}, 1.0, 0.01, n, 61);
    const auto f = simulate(kDrift, 1e-3, {0.0, 0.0, 1.0}, 1.0, 0.01, n, 61, free);
    auto inside = [&](const PathEnsemble& e) {
        std::size_t k = 0;
        for (std::size_t i = 0; i < n; ++i) k += e.radius(i) < 1.0;
        return double(k) / n;
    };
    const double pd = inside(d), pf = inside(f);
    const double se = std::sqrt(pd * (1 - pd) / n + pf * (1 - pf) / n);
    EXPECT_GT(pd - pf, 5.0 * se);
}

TEST(Simulate, KillingWeights) {
    SimulationOptions opt;
    opt.killing = true;
    const auto e = simulate(kDrift, 1e-2, {0.0, 0.0, 0.3}, 0.5, 0.01, 5000, 71, opt);
    ASSERT_EQ(e.weights.size(), 5000u);
    for (double w : e.weights) {
        ASSERT_GT(w, 0.0);
        ASSERT_LE(w, 1.0);
    }
    // same paths as the unweighted run
    EXPECT_EQ(e.positions, simulate(kDrift, 1e-2, {0.0, 0.0, 0.3}, 0.5, 0.01, 5000, 71).positions);
}

TEST(Histogram, UniformBallIsFlat) {
    const std::size_t n = 200000;
    std::vector<double> pts;
    for (std::size_t i = 0; i < n; ++i) {
        PathRng r(81, i);
        double v[3], s;
        do {
            s = 0.0;
            for (double& c : v) {
                c = 2.0 * r.uniform() - 1.0;
                s += c * c;
            }
        } while (s > 1.0);
        pts.insert(pts.end(), v, v + 3);
    }
    const auto h = histogram_points(3, pts, {0.0, 0.0, 1.0}, uniform_edges(0.0, 1.0, 5), uniform_edges(-1.0, 1.0, 4));
    const double flat = 3.0 / (4.0 * pi);
    double chi2 = 0.0;
    for (std::size_t b = 0; b < h.counts.size(); ++b) {
        const double z = (h.density[b] - flat) / h.std_error[b];
        chi2 += z * z;
        EXPECT_LT(std::abs(z), 4.0) << b;
    }
    EXPECT_LT(chi2, boost::math::quantile(boost::math::chi_squared(double(h.counts.size())), 0.999));
    EXPECT_EQ(h.escapes, 0u);
    EXPECT_NEAR(h.integrated_mass(), 1.0, 1e-12);
}

TEST(Histogram, Bookkeeping) {
    const auto e = simulate(kDrift, 1e-3, {0.0, 0.0, 0.3}, 0.5, 0.01, 20000, 91);
    const auto h = estimate_density(e, uniform_edges(0.0, 3.0, 6), uniform_edges(-1.0, 1.0, 2));
    EXPECT_NEAR(h.integrated_mass(), h.retained_fraction(), 1e-12);
    std::uint64_t total = 0;
    for (auto c : h.counts) total += c;
    EXPECT_EQ(total + h.escapes, e.n_paths);
    const auto fine = estimate_density(e, uniform_edges(0.0, 3.0, 12), uniform_edges(-1.0, 1.0, 4));
    EXPECT_NEAR(fine.integrated_mass(), h.integrated_mass(), 1e-12);
    for (double v : h.density) EXPECT_GE(v, 0.0);
    // merging two halves equals the histogram of the whole
    const auto a = simulate(kDrift, 1e-3, {0.0, 0.0, 0.3}, 0.5, 0.01, 7000, 92);
    const auto b = simulate(kDrift, 1e-3, {0.0, 0.0, 0.3}, 0.5, 0.01, 3000, 93);
    const auto edges = uniform_edges(0.0, 3.0, 6);
    const auto ab = merge(estimate_density(a, edges), estimate_density(b, edges));
    const auto ba = merge(estimate_density(b, edges), estimate_density(a, edges));
    auto all = a.positions;
    all.insert(all.end(), b.positions.begin(), b.positions.end());
    const auto whole = histogram_points(3, all, a.x0, edges, {-1.0, 1.0});
    EXPECT_EQ(ab.counts, whole.counts);
    EXPECT_EQ(ab.counts, ba.counts);
    EXPECT_EQ(ab.density, ba.density);
    EXPECT_THROW(histogram_points(3, {}, a.x0, edges, {-1.0, 1.0}), domain_error);
    EXPECT_THROW(estimate_density(a, {1.0, 0.5}), domain_error);
}

TEST(Histogram, BinVolumes) {
    for (int d : {3, 4, 5}) {
        double v = 0.0;
        for (double m : {-1.0, -0.2, 0.5})
            v += bin_volume(d, 0.0, 1.0, m, m == -1.0 ? -0.2 : (m == -0.2 ? 0.5 : 1.0));
        EXPECT_NEAR(v, std::pow(pi, 0.5 * d) / gamma_fn(0.5 * d + 1.0), 1e-10) << d;
    }
}

TEST(McChecks, ZeroDriftMatchesStableKernel) {
    const auto rep = mc_zero_drift_check(kDrift, 0.5, 1.0, quick_mc(300000));
    EXPECT_TRUE(rep.pass) << rep.summary.dump();
}

TEST(McChecks, TwoSidedBandsAndScaling) {
    auto mc = quick_mc(100000);
    mc.substep_cfl = 0.02;
    const auto rep = mc_verify_two_sided(kDrift, 1e-4, {0.0, 0.0, 0.3}, 1.0, mc);
    EXPECT_TRUE(rep.pass) << rep.summary.dump();
    // raw ratio grows toward the origin, the weighted one does not
    const auto& first = rep.rows.front();
    EXPECT_GT(first[7] / first[8], 5.0);
    const double lam = 2.0;
    const auto big = mc_verify_two_sided(kDrift, lam * lam * 1e-4, {0.0, 0.0, lam * 0.3}, std::pow(lam, 1.5), mc);
    ASSERT_EQ(big.rows.size(), rep.rows.size());
    for (std::size_t i = 0; i < rep.rows.size(); ++i) {
        if (rep.rows[i][4] < mc.min_count) continue;
        const double band = rep.rows[i][10] - rep.rows[i][8];
        EXPECT_NEAR(big.rows[i][8], rep.rows[i][8], band) << i;
    }
}

TEST(McChecks, AgreesWithEngine) {
    EngineConfig cfg;
    cfg.nodes = 512;
    const auto free = mc_vs_pde(kDrift, 1e-2, 0.3, 1.0, true, quick_mc(200000), cfg);
    EXPECT_TRUE(free.pass) << free.summary.dump();
    const auto drift = mc_vs_pde(kDrift, 1e-2, 0.3, 1.0, false, quick_mc(100000), cfg);
    EXPECT_TRUE(drift.pass) << drift.summary.dump();
    // without the killing weight the paths follow a different semigroup
    EXPECT_GT(drift.summary["max_abs_z_unweighted"].get<double>(), 5.0);
}
