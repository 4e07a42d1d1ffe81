#include "doctest.h"

#include <algorithm>
#include <cmath>
#include <vector>

#include "fusion_bounds/bounds.hpp"
#include "fusion_bounds/error.hpp"
#include "fusion_bounds/simulate.hpp"
#include "test_support.hpp"

using namespace fusion_bounds;
using fusion_bounds::testing::random_profile;
using fusion_bounds::testing::random_row;

namespace {

// Second, branch-free evaluation of the smooth bound term straight from its
// definition: softmax weights with the largest exponent subtracted.
double oracle_b(double g1, double mu1, double mu0, double e_t0, double rho, double gamma, double alpha) {
    const double v = (1.0 + gamma) * mu1;
    const double w = e_t0 * mu0 + (1.0 - e_t0) * (1.0 + rho) * mu0;
    const double top = std::max(alpha * v, alpha * w);
    const double ev = std::exp(alpha * v - top);
    const double ew = std::exp(alpha * w - top);
    return g1 * mu1 + (1.0 - g1) * (ev * v + ew * w) / (ev + ew);
}

}  // namespace

TEST_CASE("v and w") {
    CHECK(compute_v(100.0, 0.0) == 100.0);
    CHECK(compute_v(100.0, 0.2) == doctest::Approx(120.0).epsilon(1e-15));
    CHECK(compute_v(100.0, -0.2) == doctest::Approx(80.0).epsilon(1e-15));
    CHECK(compute_w(100.0, 0.5, 0.2) == doctest::Approx(110.0).epsilon(1e-15));
    for (double e : {0.1, 0.5, 0.93}) CHECK(compute_w(77.0, e, 0.0) == 77.0);
    for (double r : {-0.3, 0.0, 0.4}) CHECK(compute_w(100.0, 1.0, r) == 100.0);
}

TEST_CASE("Boltzmann weights") {
    for (double a : {-50.0, -1.0, 0.0, 3.0, 100.0}) {
        const auto w = boltzmann_weights(42.0, 42.0, a);
        CHECK(w.lambda1 == 0.5);
        CHECK(w.lambda2 == 0.5);
    }
    const auto zero = boltzmann_weights(3.0, 9.0, 0.0);
    CHECK(zero.lambda1 == 0.5);
    const auto sharp = boltzmann_weights(1.0, 0.0, 50.0);
    CHECK(std::abs(sharp.lambda1 - 1.0) < 1e-10);
    const auto huge = boltzmann_weights(1e6, 0.0, 1e3);
    CHECK(huge.lambda1 == 1.0);
    CHECK(huge.lambda2 == 0.0);
    CHECK(boltzmann_value(1e6, 0.0, huge) == 1e6);

    CounterRng rng(derive_seed(17, {1}));
    for (int i = 0; i < 10000; ++i) {
        const double v = 1.0 + 199.0 * rng.uniform_open();
        const double w = 1.0 + 199.0 * rng.uniform_open();
        const double a = -100.0 + 200.0 * rng.uniform_open();
        const auto lw = boltzmann_weights(v, w, a);
        REQUIRE(std::abs(lw.lambda1 + lw.lambda2 - 1.0) <= 1e-12);
        const double value = boltzmann_value(v, w, lw);
        REQUIRE(value >= std::min(v, w));
        REQUIRE(value <= std::max(v, w));
        if (std::abs(v - w) >= 0.5) {
            REQUIRE(std::abs(boltzmann_value(v, w, boltzmann_weights(v, w, 100.0)) - std::max(v, w)) < 1e-6);
            REQUIRE(std::abs(boltzmann_value(v, w, boltzmann_weights(v, w, -100.0)) - std::min(v, w)) < 1e-6);
        }
    }
}

TEST_CASE("smooth b") {
    const BoltzmannWeights half{0.5, 0.5};
    CHECK(smooth_b(1.0, 100.0, 80.0, 130.0, half) == 100.0);
    CHECK(smooth_b(0.0, 999.0, 42.0, 42.0, half) == 42.0);
    CHECK(smooth_b(0.5, 100.0, 100.0, 120.0, half) == doctest::Approx(105.0).epsilon(1e-15));
}

TEST_CASE("hard bounds") {
    const HardBounds c = hard_bounds(0.3, 50.0, 50.0, 50.0, 50.0, 50.0);
    CHECK(c.l == doctest::Approx(50.0).epsilon(1e-15));
    CHECK(c.u == doctest::Approx(50.0).epsilon(1e-15));

    const HardBounds mid = hard_bounds(0.5, 100.0, 130.0, 90.0, 120.0, 80.0);
    CHECK(mid.l == doctest::Approx(95.0).epsilon(1e-15));
    CHECK(mid.u == doctest::Approx(110.0).epsilon(1e-15));

    // v interval [80, 120], w interval [95, 110]: brute force over endpoints.
    const std::vector<double> lowers{80.0, 95.0};
    const std::vector<double> uppers{120.0, 110.0};
    const HardBounds eff = hard_bounds(0.0, 0.0, 120.0, 80.0, 110.0, 95.0);
    CHECK(eff.l == *std::max_element(lowers.begin(), lowers.end()));
    CHECK(eff.u == *std::min_element(uppers.begin(), uppers.end()));
    CHECK(eff.compatible());

    const HardBounds apart = hard_bounds(0.0, 0.0, 101.0, 99.0, 111.0, 109.0);
    CHECK_FALSE(apart.upper_compatible);
    CHECK(apart.lower_compatible);
}

TEST_CASE("parameter slots follow the lower/upper layout") {
    const auto s = parameter_slots({0.1, 0.2, 10.0});
    CHECK((s[0].t == 1 && s[0].rho == -0.1 && s[0].gamma == -0.2 && s[0].alpha == 10.0));
    CHECK((s[1].t == 0 && s[1].rho == 0.1 && s[1].gamma == 0.2 && s[1].alpha == -10.0));
    CHECK((s[2].t == 1 && s[2].rho == 0.1 && s[2].gamma == 0.2 && s[2].alpha == -10.0));
    CHECK((s[3].t == 0 && s[3].rho == -0.1 && s[3].gamma == -0.2 && s[3].alpha == 10.0));
}

TEST_CASE("single-unit plug-in bounds match a hand-evaluated oracle") {
    NuisanceEstimates est;
    est.resize(1);
    NuisanceRow row;
    row.g1 = 0.5;
    row.mu[1][1] = 110.0;
    row.mu[1][0] = 100.0;
    row.mu[0][1] = 112.0;
    row.mu[0][0] = 98.0;
    row.e1_obs = 0.5;
    est.set_row(0, row);
    const PluginBounds b = ate_bounds_plugin(est, {0.1, 0.1, 10.0});

    const double lb = oracle_b(0.5, 110.0, 112.0, 0.5, -0.1, -0.1, 10.0) - oracle_b(0.5, 100.0, 98.0, 0.5, 0.1, 0.1, -10.0);
    const double ub = oracle_b(0.5, 110.0, 112.0, 0.5, 0.1, 0.1, -10.0) - oracle_b(0.5, 100.0, 98.0, 0.5, -0.1, -0.1, 10.0);
    CHECK(std::abs(b.lb - lb) < 1e-9);
    CHECK(std::abs(b.ub - ub) < 1e-9);
    CHECK(b.lb <= b.ub);
}

TEST_CASE("plug-in interval collapses when rho = gamma = 0 and study means agree") {
    CounterRng rng(5);
    NuisanceEstimates est;
    est.resize(20);
    double expected = 0.0;
    for (std::size_t i = 0; i < 20; ++i) {
        NuisanceRow row = random_row(rng);
        row.mu[0][0] = row.mu[1][0];
        row.mu[0][1] = row.mu[1][1];
        est.set_row(i, row);
        expected += row.mu[1][1] - row.mu[1][0];
    }
    const PluginBounds b = ate_bounds_plugin(est, {0.0, 0.0, 10.0});
    CHECK(b.lb == doctest::Approx(expected / 20).epsilon(1e-13));
    CHECK(b.ub == doctest::Approx(expected / 20).epsilon(1e-13));
    const std::vector<std::size_t> none;
    CHECK_THROWS_AS(ate_bounds_plugin(est, {0.0, 0.0, 10.0}, none), Error);
}

TEST_CASE("hard interval sits inside the smooth interval and widens monotonically") {
    const std::vector<double> levels{0.0, 0.02, 0.05, 0.08, 0.1, 0.13, 0.17, 0.2};
    for (std::uint64_t profile = 0; profile < 20; ++profile) {
        CounterRng rng(derive_seed(profile, {2}));
        const NuisanceRow row = random_row(rng);
        for (int t = 0; t < 2; ++t) {
            for (double r : {0.05, 0.1, 0.2}) {
                for (double g : {0.05, 0.1, 0.2}) {
                    const HardBounds h = unit_hard_bounds(row, t, r, g);
                    const double lo = evaluate_slot(row, {t, -r, -g, 10.0}).b;
                    const double hi = evaluate_slot(row, {t, r, g, -10.0}).b;
                    CHECK(lo <= h.l);
                    CHECK(h.u <= hi);
                }
            }
            for (std::size_t i = 0; i + 1 < levels.size(); ++i) {
                for (double other : levels) {
                    const HardBounds a = unit_hard_bounds(row, t, levels[i], other);
                    const HardBounds b = unit_hard_bounds(row, t, levels[i + 1], other);
                    CHECK(b.u >= a.u);
                    CHECK(b.l <= a.l);
                    const HardBounds c = unit_hard_bounds(row, t, other, levels[i]);
                    const HardBounds d = unit_hard_bounds(row, t, other, levels[i + 1]);
                    CHECK(d.u >= c.u);
                    CHECK(d.l <= c.l);
                }
            }
        }
    }
}

TEST_CASE("EIF reduces to the plug-in term when corrections vanish") {
    CounterRng rng(8);
    const NuisanceRow row = random_row(rng);
    for (int t = 0; t < 2; ++t) {
        const ParameterSlot slot{t, 0.1, 0.15, -10.0};
        const Unit exp_unit{{0.0}, 1, t, row.mu[1][t]};
        CHECK(eif_value(exp_unit, row, slot) == doctest::Approx(row.mu[1][t]).epsilon(1e-14));

        const ParameterSlot no_rho{t, 0.0, 0.15, 10.0};
        const Unit obs_unit{{0.0}, 0, 1 - t, 1234.5};
        const BoundComponents c = evaluate_slot(row, no_rho);
        CHECK(eif_value(obs_unit, row, no_rho) == doctest::Approx(c.lambda1 * c.v + c.lambda2 * c.w).epsilon(1e-14));
    }
}

TEST_CASE("bias-corrected estimate is the mean of uncentered slot differences") {
    const auto p = random_profile(3, 300);
    const SensitivityPair pair{0.1, 0.05, 10.0};
    std::vector<UnitAudit> audit;
    const auto idx = all_indices(p.dataset.size());
    const BoundEstimate est = bias_corrected_bounds(p.dataset, p.nuisances, pair, idx, 0.95, &audit);
    REQUIRE(audit.size() == 300);
    double lb = 0.0;
    double ub = 0.0;
    double centered_lb = 0.0;
    double centered_ub = 0.0;
    double sq_lb = 0.0;
    for (const auto& a : audit) {
        lb += a.slots[0].phi_uncentered - a.slots[1].phi_uncentered;
        ub += a.slots[2].phi_uncentered - a.slots[3].phi_uncentered;
        centered_lb += a.phi_lb;
        centered_ub += a.phi_ub;
        sq_lb += a.phi_lb * a.phi_lb;
    }
    CHECK(est.theta_lb_bc == doctest::Approx(lb / 300).epsilon(1e-12));
    CHECK(est.theta_ub_bc == doctest::Approx(ub / 300).epsilon(1e-12));
    CHECK(std::abs(centered_lb / 300) < 1e-10);
    CHECK(std::abs(centered_ub / 300) < 1e-10);
    CHECK(est.var_lb == doctest::Approx(sq_lb / 300).epsilon(1e-10));
    CHECK(est.se_lb == doctest::Approx(std::sqrt(est.var_lb / 300)).epsilon(1e-12));
    CHECK(est.ci_lb.center() == doctest::Approx(est.theta_lb_bc).epsilon(1e-12));
    CHECK(est.ci_ub.hi - est.ci_ub.lo == doctest::Approx(2 * 1.959963984540054 * est.se_ub).epsilon(1e-12));
    CHECK(est.n_effective == 300);
    CHECK(est.var_lb >= 0.0);

    const PluginBounds plug = ate_bounds_plugin(p.nuisances, pair);
    CHECK(est.theta_lb_plugin == doctest::Approx(plug.lb).epsilon(1e-13));
}

TEST_CASE("oracle nuisances without confounding collapse the interval") {
    const SimulatedData data = simulate_dataset({2500, 0.0, 5.0, 4});
    const NuisanceEstimates oracle = oracle_nuisances(data);
    const BoundEstimate est = bias_corrected_bounds(data.dataset, oracle, {0.0, 0.0, 10.0});
    CHECK(est.theta_ub_bc - est.theta_lb_bc < 1e-9);
    CHECK(std::abs(est.theta_ub_plugin - est.theta_lb_plugin) < 1e-9);
    CHECK(est.ordering_violations == 0);
}

TEST_CASE("subgroup bounds equal bounds on the filtered rows") {
    const SimulatedData data = simulate_dataset({800, 0.4, 5.0, 6});
    CrossFitConfig config;
    const NuisanceEstimates est = cross_fit(data.dataset, config);
    std::vector<std::size_t> sub;
    for (std::size_t i = 0; i < data.dataset.size(); ++i)
        if (data.dataset[i].x[0] > 1.0) sub.push_back(i);
    const SensitivityPair pair{0.05, 0.1, 10.0};
    const BoundEstimate a = bias_corrected_bounds(data.dataset, est, pair, sub);
    const Dataset filtered = data.dataset.resample(sub);
    const BoundEstimate b = bias_corrected_bounds(filtered, est.select(sub), pair);
    CHECK(a.theta_lb_bc == b.theta_lb_bc);
    CHECK(a.theta_ub_bc == b.theta_ub_bc);
    CHECK(a.var_lb == b.var_lb);
    CHECK(a.ci_ub.hi == b.ci_ub.hi);
    CHECK(a.n_effective == sub.size());
    const std::vector<std::size_t> none;
    CHECK_THROWS_AS(bias_corrected_bounds(data.dataset, est, pair, none), Error);
}

TEST_CASE("ordering violations are counted per unit") {
    NuisanceEstimates est;
    est.resize(4);
    CounterRng rng(31);
    std::vector<Unit> units;
    for (std::size_t i = 0; i < 4; ++i) {
        NuisanceRow row = random_row(rng);
        est.set_row(i, row);
        units.push_back({{0.0}, static_cast<int>(i / 2), static_cast<int>(i % 2), 50.0});
    }
    // Unit 0: experimental and observational treated means far apart, so at
    // rho = gamma = 0 the smoothed lower term exceeds the smoothed upper one.
    NuisanceRow bad = est.row(0);
    bad.mu[1][1] = 100.0;
    bad.mu[0][1] = 140.0;
    est.set_row(0, bad);
    const Dataset ds = Dataset::from_units(units, {"x1"});
    const BoundEstimate e = bias_corrected_bounds(ds, est, {0.0, 0.0, 10.0});
    CHECK(e.ordering_violations >= 1);
}

TEST_CASE("bootstrap replicates are deterministic and agree with the EIF scale") {
    const SimulatedData data = simulate_dataset({2500, 0.4, 5.0, 3});
    CrossFitConfig config;
    config.seed = 3;
    const SensitivityPair pair{0.1, 0.1, 10.0};

    const BoundEstimate two_a = bootstrap_bounds(data.dataset, config, pair, 2, 77);
    const BoundEstimate two_b = bootstrap_bounds(data.dataset, config, pair, 2, 77);
    CHECK(two_a.var_lb == two_b.var_lb);
    CHECK(two_a.var_ub == two_b.var_ub);
    CHECK(two_a.bootstrap_replicates == 2);

    const NuisanceEstimates full = cross_fit(data.dataset, config);
    const BootstrapEnsemble e1 = build_bootstrap_ensemble(data.dataset, config, 50, 101, 1);
    const BootstrapEnsemble e4 = build_bootstrap_ensemble(data.dataset, config, 50, 101, 4);
    const auto idx = all_indices(data.dataset.size());
    const BoundEstimate boot = bootstrap_bounds(data.dataset, full, e1, pair, idx);
    const BoundEstimate boot4 = bootstrap_bounds(data.dataset, full, e4, pair, idx);
    CHECK(boot.se_lb == boot4.se_lb);
    const BoundEstimate eif = bias_corrected_bounds(data.dataset, full, pair);
    CHECK(boot.variance_method == VarianceMethod::Bootstrap);
    CHECK(boot.theta_lb_bc == eif.theta_lb_bc);
    CHECK(boot.ci_lb.center() == doctest::Approx(eif.theta_lb_bc).epsilon(1e-12));
    MESSAGE("bootstrap se " << boot.se_lb << "/" << boot.se_ub << " vs eif se " << eif.se_lb << "/" << eif.se_ub);
    CHECK(boot.se_lb < 2.0 * eif.se_lb);
    CHECK(boot.se_lb > 0.5 * eif.se_lb);
    CHECK(boot.se_ub < 2.0 * eif.se_ub);
    CHECK(boot.se_ub > 0.5 * eif.se_ub);
}
