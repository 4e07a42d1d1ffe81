#include "doctest.h"

#include <cmath>
#include <vector>

#include "fusion_bounds/bounds.hpp"
#include "fusion_bounds/compat.hpp"
#include "fusion_bounds/error.hpp"
#include "fusion_bounds/simulate.hpp"
#include "test_support.hpp"

using namespace fusion_bounds;

namespace {

NuisanceEstimates repeated(const NuisanceRow& row, std::size_t n) {
    NuisanceEstimates est;
    est.resize(n);
    for (std::size_t i = 0; i < n; ++i) est.set_row(i, row);
    return est;
}

OverlapSample sample_from(const std::vector<double>& raw) {
    OverlapSample s;
    s.n = raw.size();
    double sum = 0.0;
    for (double v : raw) sum += v;
    s.t_obs = sum / static_cast<double>(raw.size());
    for (double v : raw) s.o.push_back(v - s.t_obs);
    return s;
}

}  // namespace

TEST_CASE("constant overlaps centre to zero") {
    NuisanceRow row;
    row.mu[1][1] = 100.0;
    row.mu[0][1] = 102.0;
    row.e1_obs = 0.4;
    const auto est = repeated(row, 10);
    const auto idx = all_indices(10);
    const OverlapSample s = overlap_values(est, {0.1, 0.1, 10.0}, 1, idx);
    const double expected = std::min(110.0, 102.0 * (1 + 0.1 * 0.6)) - std::max(90.0, 102.0 * (1 - 0.1 * 0.6));
    CHECK(s.t_obs == doctest::Approx(expected).epsilon(1e-14));
    for (double o : s.o) CHECK(o == 0.0);
}

TEST_CASE("overlap of [80,120] and [95,110] is 15") {
    // w(+-rho) = mu0 (1 +- rho/2) at e = 0.5; mu0 = 102.5, rho = 15/102.5 gives [95, 110].
    NuisanceRow row;
    row.mu[1][0] = 100.0;
    row.mu[0][0] = 102.5;
    row.e1_obs = 0.5;
    const auto est = repeated(row, 1);
    const auto idx = all_indices(1);
    const OverlapSample s = overlap_values(est, {15.0 / 102.5, 0.2, 10.0}, 0, idx);
    CHECK(s.t_obs == doctest::Approx(15.0).epsilon(1e-12));
}

TEST_CASE("zero sensitivity with differing study means gives negative overlaps") {
    CounterRng rng(4);
    NuisanceEstimates est;
    est.resize(30);
    for (std::size_t i = 0; i < 30; ++i) {
        NuisanceRow row = fusion_bounds::testing::random_row(rng);
        row.mu[0][1] = row.mu[1][1] + 1.0 + rng.uniform_open();
        est.set_row(i, row);
    }
    const auto idx = all_indices(30);
    const OverlapSample s = overlap_values(est, {0.0, 0.0, 10.0}, 1, idx);
    for (double o : s.o) CHECK(o + s.t_obs < 0.0);
    double sum = 0.0;
    for (double o : s.o) sum += o;
    CHECK(std::abs(sum / 30) < 1e-12);
}

TEST_CASE("p-values follow the sign of the observed overlap") {
    CounterRng rng(12);
    std::vector<double> pos;
    std::vector<double> neg;
    for (int i = 0; i < 200; ++i) {
        const double z = rng.normal();
        pos.push_back(10.0 + z);
        neg.push_back(-10.0 + z);
    }
    const CompatResult p = compat_test(sample_from(pos), 200, 1);
    CHECK(p.p_value > 0.9);
    CHECK(p.compatible);
    const CompatResult n = compat_test(sample_from(neg), 200, 1);
    CHECK(n.p_value < 0.01);
    CHECK_FALSE(n.compatible);
    CHECK(n.decision_threshold == doctest::Approx(0.05));

    const CompatResult zero = compat_test(sample_from(std::vector<double>(50, 0.0)), 100, 3);
    CHECK(zero.p_value == 1.0);
    CHECK(zero.compatible);
}

TEST_CASE("compat_test preconditions and determinism") {
    const OverlapSample s = sample_from({1.0, -2.0, 0.5, 0.25});
    CHECK_THROWS_AS(compat_test(s, 99, 1), Error);
    try {
        compat_test(s, 10, 1);
    } catch (const Error& e) {
        CHECK(e.code() == ErrorCode::RTooSmall);
    }
    CHECK_THROWS_AS(compat_test(sample_from({1.0}), 100, 1), Error);
    const CompatResult a = compat_test(s, 150, 9);
    const CompatResult b = compat_test(s, 150, 9, 0.95, CompatMode::CorrectedLeftTail, 4);
    CHECK(a.p_value == b.p_value);
    CHECK(resample_means(s, 150, 9, 1) == resample_means(s, 150, 9, 3));
}

TEST_CASE("shifting overlaps upward never lowers the corrected p-value") {
    CounterRng rng(21);
    std::vector<double> raw;
    for (int i = 0; i < 100; ++i) raw.push_back(0.05 + rng.normal());
    double last = -1.0;
    for (double delta : {-0.3, -0.1, 0.0, 0.05, 0.2, 0.5}) {
        std::vector<double> shifted = raw;
        for (double& v : shifted) v += delta;
        const CompatResult r = compat_test(sample_from(shifted), 300, 5);
        CHECK(r.p_value >= last);
        last = r.p_value;
    }
}

TEST_CASE("left and right tails cover the resample distribution") {
    CounterRng rng(2);
    std::vector<double> raw;
    for (int i = 0; i < 40; ++i) raw.push_back(rng.normal());
    const OverlapSample s = sample_from(raw);
    const auto means = resample_means(s, 500, 8);
    const auto [left, right] = compat_p_values(s, means);
    CHECK(left + right >= 1.0);
    const CompatResult lit = compat_test(s, 500, 8, 0.95, CompatMode::PaperLiteral);
    CHECK(lit.p_value == right);
    CHECK(lit.decision_threshold == 0.95);
    CHECK(lit.compatible == (right >= 0.95));
}

TEST_CASE("compatibility endpoints on simulated data") {
    CompatConfig config;
    config.r = 200;
    int compat_no_confounding = 0;
    int incompat_strong = 0;
    for (std::uint64_t seed = 1; seed <= 5; ++seed) {
        config.seed = seed;
        CrossFitConfig cf;
        cf.seed = seed;
        const SimulatedData clean = simulate_dataset({2500, 0.0, 5.0, seed});
        const auto idx = all_indices(clean.dataset.size());
        const auto [a0, a1] = compat_both_arms(cross_fit(clean.dataset, cf), {0.2, 0.2, 10.0}, config, idx);
        compat_no_confounding += a0.compatible && a1.compatible;

        const SimulatedData strong = simulate_dataset({2500, 0.6, 5.0, seed});
        const auto [b0, b1] = compat_both_arms(cross_fit(strong.dataset, cf), {0.0, 0.0, 10.0}, config, idx);
        incompat_strong += !(b0.compatible && b1.compatible);
        CHECK(b0.t == 0);
        CHECK(b1.t == 1);
    }
    CHECK(compat_no_confounding == 5);
    CHECK(incompat_strong == 5);
}
