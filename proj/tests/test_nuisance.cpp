#include "doctest.h"

#include <cmath>
#include <numbers>
#include <vector>

#include "fusion_bounds/error.hpp"
#include "fusion_bounds/nuisance.hpp"
#include "fusion_bounds/random.hpp"
#include "fusion_bounds/simulate.hpp"
#include "fusion_bounds/stats.hpp"

using namespace fusion_bounds;

namespace {

ErrorCode code_of(const std::function<void()>& fn) {
    try {
        fn();
    } catch (const Error& e) {
        return e.code();
    }
    FAIL("expected an error");
    return ErrorCode::Precondition;
}

Matrix design(const Dataset& ds, std::initializer_list<int> columns) {
    Matrix x(static_cast<Eigen::Index>(ds.size()), static_cast<Eigen::Index>(columns.size()));
    for (std::size_t i = 0; i < ds.size(); ++i) {
        int c = 0;
        for (int j : columns) x(static_cast<Eigen::Index>(i), c++) = ds[i].x[static_cast<std::size_t>(j)];
    }
    return x;
}

bool same_arrays(const NuisanceEstimates& a, const NuisanceEstimates& b) {
    bool same = a.g1 == b.g1 && a.e1_s0 == b.e1_s0 && a.e1_s1 == b.e1_s1 && a.fold_id == b.fold_id;
    for (int s = 0; s < 2; ++s)
        for (int t = 0; t < 2; ++t) same = same && a.mu[s][t] == b.mu[s][t];
    return same;
}

}  // namespace

TEST_CASE("logistic with no features and balanced labels") {
    const Matrix x(6, 0);
    Vector y(6);
    y << 1, 0, 1, 0, 1, 0;
    const LogisticModel m = fit_logistic(x, y, 1.0);
    REQUIRE(m.coefficients.size() == 1);
    CHECK(std::abs(m.coefficients[0]) < 1e-12);
    CHECK(m.predict(std::vector<double>{}) == doctest::Approx(0.5).epsilon(1e-12));
    CHECK(m.converged);
}

TEST_CASE("logistic with all labels equal stays finite and clipped") {
    Matrix x(5, 2);
    x << 0.1, 1.0, -0.3, 2.0, 0.7, -1.0, 1.2, 0.0, -2.0, 0.5;
    const Vector y = Vector::Ones(5);
    const LogisticModel m = fit_logistic(x, y, 0.5, 0.01);
    CHECK(m.coefficients.allFinite());
    const Vector p = m.predict(x);
    for (Eigen::Index i = 0; i < p.size(); ++i) CHECK(p[i] <= 0.99);
}

TEST_CASE("logistic recovers known coefficients") {
    // Labels drawn from expit(-0.5 + 1.5 x); unpenalized fit at n = 20000.
    CounterRng rng(derive_seed(3, {1}));
    const int n = 20000;
    Matrix x(n, 1);
    Vector y(n);
    for (int i = 0; i < n; ++i) {
        x(i, 0) = rng.normal();
        y[i] = rng.uniform_open() < expit(-0.5 + 1.5 * x(i, 0)) ? 1.0 : 0.0;
    }
    const LogisticModel m = fit_logistic(x, y, 0.0, 1e-9);
    CHECK(m.converged);
    CHECK(m.coefficients[0] == doctest::Approx(-0.5).epsilon(0.1));
    CHECK(m.coefficients[1] == doctest::Approx(1.5).epsilon(0.05));
}

TEST_CASE("fitted selection score tracks the generating selection function") {
    // P(S=1 | x) = E_U[expit(-(0.6 x1 + 0.4 U))] with U ~ N(1, 1) unobserved, so
    // expit(-C) itself carries an irreducible error for any model of x alone.
    const SimulatedData train = simulate_dataset({2500, 0.4, 5.0, 1});
    const SimulatedData test = simulate_dataset({2500, 0.4, 5.0, 2});
    Vector s(static_cast<Eigen::Index>(train.dataset.size()));
    for (std::size_t i = 0; i < train.dataset.size(); ++i) s[static_cast<Eigen::Index>(i)] = train.dataset[i].s;
    const LogisticModel m = fit_logistic(design(train.dataset, {0, 1, 2}), s, 1e-2);
    const Vector p = m.predict(design(test.dataset, {0, 1, 2}));

    const auto x_only_score = [](double x1) {
        // Trapezoid rule over u in [1 - 8, 1 + 8].
        const int steps = 1600;
        const double h = 16.0 / steps;
        double acc = 0.0;
        for (int k = 0; k <= steps; ++k) {
            const double u = -7.0 + k * h;
            const double weight = (k == 0 || k == steps) ? 0.5 : 1.0;
            acc += weight * std::exp(-0.5 * (u - 1.0) * (u - 1.0)) * expit(-(0.6 * x1 + 0.4 * u));
        }
        return acc * h / std::sqrt(2.0 * std::numbers::pi);
    };

    double mae_target = 0.0;
    double mae_oracle = 0.0;
    double floor = 0.0;
    for (std::size_t i = 0; i < test.dataset.size(); ++i) {
        const double x1 = test.dataset[i].x[0];
        const double fitted = p[static_cast<Eigen::Index>(i)];
        const double truth = expit(-test.c[i]);
        mae_target += std::abs(fitted - x_only_score(x1));
        mae_oracle += std::abs(fitted - truth);
        // Conditional median of expit(-C) given x1 minimises absolute error.
        floor += std::abs(expit(-(0.6 * x1 + 0.4)) - truth);
    }
    const double n = static_cast<double>(test.dataset.size());
    mae_target /= n;
    mae_oracle /= n;
    floor /= n;
    MESSAGE("MAE vs P(S=1|x): " << mae_target << ", vs expit(-C): " << mae_oracle << ", floor: " << floor);
    CHECK(mae_target < 0.05);
    CHECK(mae_oracle < floor + 0.01);
}

TEST_CASE("ridge interpolates two points without penalty") {
    Matrix x(2, 1);
    x << 1.0, 3.0;
    Vector y(2);
    y << 2.0, 8.0;
    const RidgeModel m = fit_ridge(x, y, 0.0);
    CHECK(m.coefficients[0] == doctest::Approx(-1.0).epsilon(1e-12));
    CHECK(m.coefficients[1] == doctest::Approx(3.0).epsilon(1e-12));
    CHECK(m.predict(std::vector<double>{1.0}) == doctest::Approx(2.0).epsilon(1e-12));
}

TEST_CASE("ridge with a huge penalty predicts the mean") {
    Matrix x(4, 2);
    x << 1, 2, 3, 1, -1, 0, 5, 5;
    Vector y(4);
    y << 1, 4, 9, 16;
    const RidgeModel m = fit_ridge(x, y, 1e12);
    CHECK(std::abs(m.coefficients[1]) < 1e-9);
    CHECK(std::abs(m.coefficients[2]) < 1e-9);
    CHECK(m.predict(std::vector<double>{10.0, -10.0}) == doctest::Approx(7.5).epsilon(1e-8));
}

TEST_CASE("ridge rejects a rank-deficient unpenalized system") {
    Matrix x(3, 2);
    x << 1, 2, 2, 4, 3, 6;
    Vector y(3);
    y << 1, 2, 3;
    CHECK(code_of([&] { fit_ridge(x, y, 0.0); }) == ErrorCode::SingularSystem);
    CHECK_NOTHROW(fit_ridge(x, y, 1e-3));
}

TEST_CASE("ridge recovers the untreated outcome model") {
    const SimulatedData data = simulate_dataset({2500, 0.4, 5.0, 7});
    std::vector<std::size_t> control;
    for (std::size_t i = 0; i < data.dataset.size(); ++i)
        if (data.dataset[i].t == 0) control.push_back(i);
    const Matrix x = covariate_matrix(data.dataset, control);
    Vector y(static_cast<Eigen::Index>(control.size()));
    for (std::size_t r = 0; r < control.size(); ++r) y[static_cast<Eigen::Index>(r)] = data.dataset[control[r]].y;
    const RidgeModel m = fit_ridge(x, y, 1e-4);
    CHECK(std::abs(m.coefficients[0] - 100.0) < 0.1);
    CHECK(std::abs(m.coefficients[2] - 1.0) < 0.1);
}

TEST_CASE("select_penalty prefers no penalty on noiseless linear data") {
    CounterRng rng(9);
    const int n = 60;
    Matrix x(n, 2);
    Vector y(n);
    for (int i = 0; i < n; ++i) {
        x(i, 0) = rng.normal();
        x(i, 1) = rng.normal();
        y[i] = 3.0 + 2.0 * x(i, 0) - x(i, 1);
    }
    const std::vector<double> grid{0.0, 1e6};
    CHECK(select_penalty(x, y, grid, 3, 1, ModelKind::Ridge) == 0.0);

    // Held-out squared error computed directly for the oracle.
    const RidgeModel heavy = fit_ridge(x.topRows(40), y.head(40), 1e6);
    const RidgeModel none = fit_ridge(x.topRows(40), y.head(40), 0.0);
    CHECK((none.predict(x.bottomRows(20)) - y.tail(20)).squaredNorm() <
          (heavy.predict(x.bottomRows(20)) - y.tail(20)).squaredNorm());
}

TEST_CASE("select_penalty breaks ties toward the largest penalty") {
    const Matrix x(12, 0);
    Vector y(12);
    for (int i = 0; i < 12; ++i) y[i] = i % 3;
    const std::vector<double> grid{1e-4, 1e-2, 1.0, 1e2};
    CHECK(select_penalty(x, y, grid, 3, 5, ModelKind::Ridge) == 1e2);
    const std::vector<double> one{1.0};
    CHECK(code_of([&] { select_penalty(x, y, grid, 1, 5, ModelKind::Ridge); }) == ErrorCode::Precondition);
    CHECK(code_of([&] { select_penalty(x, y, one, 3, 5, ModelKind::Ridge); }) == ErrorCode::Precondition);
}

TEST_CASE("cross-fit plans are stratified and balanced") {
    const SimulatedData data = simulate_dataset({1001, 0.4, 5.0, 3});
    const CrossFitPlan plan = make_cross_fit_plan(data.dataset, 5, 11);
    std::vector<int> sizes(5, 0);
    std::array<std::array<std::vector<int>, 2>, 2> per_cell;
    for (auto& row : per_cell)
        for (auto& v : row) v.assign(5, 0);
    for (std::size_t i = 0; i < data.dataset.size(); ++i) {
        ++sizes[plan.fold_assignment[i]];
        ++per_cell[data.dataset[i].s][data.dataset[i].t][plan.fold_assignment[i]];
    }
    CHECK(*std::max_element(sizes.begin(), sizes.end()) - *std::min_element(sizes.begin(), sizes.end()) <= 1);
    for (auto& row : per_cell)
        for (auto& v : row) CHECK(*std::max_element(v.begin(), v.end()) - *std::min_element(v.begin(), v.end()) <= 1);
    CHECK(make_cross_fit_plan(data.dataset, 5, 11).fold_assignment == plan.fold_assignment);
    CHECK(make_cross_fit_plan(data.dataset, 5, 12).fold_assignment != plan.fold_assignment);
}

TEST_CASE("leave-one-out cross-fitting uses models that never saw the unit") {
    // Three units per cell, k = n: each unit is predicted from the other eleven.
    std::vector<Unit> units;
    CounterRng rng(21);
    for (int rep = 0; rep < 2; ++rep)
        for (int s = 0; s < 2; ++s)
            for (int t = 0; t < 2; ++t) units.push_back({{rng.normal()}, s, t, 10.0 + rng.normal()});
    // A third unit per cell keeps each leave-one-out training cell nonempty.
    for (int s = 0; s < 2; ++s)
        for (int t = 0; t < 2; ++t) units.push_back({{rng.normal()}, s, t, 10.0 + rng.normal()});
    const Dataset full = Dataset::from_units(units, {"x1"});

    CrossFitConfig config;
    config.k = static_cast<int>(full.size());
    config.l2_grid = {0.5};
    const NuisanceEstimates est = cross_fit(full, config);
    for (std::size_t i = 0; i < full.size(); ++i) {
        std::vector<std::size_t> rest;
        for (std::size_t j = 0; j < full.size(); ++j)
            if (j != i) rest.push_back(j);
        const Matrix x = covariate_matrix(full, rest);
        Vector s(x.rows());
        for (std::size_t r = 0; r < rest.size(); ++r) s[static_cast<Eigen::Index>(r)] = full[rest[r]].s;
        const LogisticModel g = fit_logistic(x, s, 0.5);
        CHECK(est.g1[i] == doctest::Approx(g.predict(full[i].x)).epsilon(1e-12));

        std::vector<std::size_t> cell11;
        for (std::size_t j : rest)
            if (full[j].s == 1 && full[j].t == 1) cell11.push_back(j);
        const Matrix xc = covariate_matrix(full, cell11);
        Vector yc(xc.rows());
        for (std::size_t r = 0; r < cell11.size(); ++r) yc[static_cast<Eigen::Index>(r)] = full[cell11[r]].y;
        CHECK(est.mu[1][1][i] == doctest::Approx(fit_ridge(xc, yc, 0.5).predict(full[i].x)).epsilon(1e-12));
    }
}

TEST_CASE("changing one outcome leaves its own fold's predictions untouched") {
    const SimulatedData data = simulate_dataset({400, 0.4, 5.0, 5});
    CrossFitConfig config;
    config.k = 4;
    config.seed = 8;
    const NuisanceEstimates base = cross_fit(data.dataset, config);

    std::vector<Unit> units(data.dataset.units().begin(), data.dataset.units().end());
    const std::size_t victim = 17;
    units[victim].y += 1e4;
    const Dataset changed = Dataset::from_units(units, data.dataset.covariate_names());
    const NuisanceEstimates after = cross_fit(changed, config);

    REQUIRE(after.fold_id == base.fold_id);
    const int fold = base.fold_id[victim];
    bool other_fold_moved = false;
    for (std::size_t i = 0; i < units.size(); ++i) {
        const bool moved = after.mu[units[victim].s][units[victim].t][i] != base.mu[units[victim].s][units[victim].t][i];
        if (base.fold_id[i] == fold) CHECK_FALSE(moved);
        else other_fold_moved = other_fold_moved || moved;
    }
    CHECK(other_fold_moved);
}

TEST_CASE("cross_fit is deterministic and thread-count independent") {
    const SimulatedData data = simulate_dataset({2500, 0.4, 5.0, 1});
    CrossFitConfig config;
    config.seed = 4;
    const NuisanceEstimates a = cross_fit(data.dataset, config);
    const NuisanceEstimates b = cross_fit(simulate_dataset({2500, 0.4, 5.0, 1}).dataset, config);
    config.threads = 2;
    const NuisanceEstimates c = cross_fit(data.dataset, config);
    CHECK(same_arrays(a, b));
    CHECK(same_arrays(a, c));
    CHECK(a.fingerprint() == c.fingerprint());
    REQUIRE(a.folds.size() == 2);
    CHECK(a.folds[0].models.size() == 7);
}

TEST_CASE("Base scenario nuisances stay inside the clipping band") {
    const SimulatedData data = simulate_dataset({2500, 0.4, 5.0, 2});
    CrossFitConfig config;
    const NuisanceEstimates est = cross_fit(data.dataset, config);
    for (std::size_t i = 0; i < est.size(); ++i) {
        for (double p : {est.g1[i], est.e1_s0[i], est.e1_s1[i]}) {
            CHECK(p >= 0.01);
            CHECK(p <= 0.99);
        }
        for (int s = 0; s < 2; ++s)
            for (int t = 0; t < 2; ++t) CHECK(std::isfinite(est.mu[s][t][i]));
    }
}

TEST_CASE("known experimental propensity overrides the fit") {
    const SimulatedData data = simulate_dataset({500, 0.4, 5.0, 2});
    CrossFitConfig config;
    config.known_exp_propensity = 0.5;
    const NuisanceEstimates est = cross_fit(data.dataset, config);
    for (double p : est.e1_s1) CHECK(p == 0.5);
}

TEST_CASE("too many folds leave a training cell empty") {
    std::vector<Unit> units{{{0.0}, 0, 0, 1.0}, {{1.0}, 0, 1, 1.0}, {{2.0}, 1, 0, 1.0}, {{3.0}, 1, 1, 1.0},
                            {{4.0}, 0, 0, 2.0}, {{5.0}, 0, 1, 2.0}, {{6.0}, 1, 1, 2.0}};
    const Dataset ds = Dataset::from_units(units, {"x1"});
    CrossFitConfig config;
    config.k = 4;
    config.l2_grid = {1.0};
    try {
        cross_fit(ds, config);
        FAIL("expected EmptyTrainingCell");
    } catch (const Error& e) {
        CHECK(e.code() == ErrorCode::EmptyTrainingCell);
        CHECK(std::string(e.what()).find("EmptyTrainingCell(") == 0);
    }
}
