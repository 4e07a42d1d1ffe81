#pragma once

// Nuisance models (penalized logistic / ridge) and k-fold cross-fitting of
// the study-selection score, treatment propensities and outcome regressions.

#include <Eigen/Dense>
#include <cstdint>
#include <optional>
#include <span>
#include <vector>

#include "fusion_bounds/model.hpp"

namespace fusion_bounds {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;

struct LogisticModel {
    Vector coefficients;  // intercept first
    double l2 = 0.0;
    bool converged = false;
    int iterations = 0;
    double clip_epsilon = 0.01;

    /// P(label = 1 | x), clipped to [clip_epsilon, 1 - clip_epsilon].
    double predict(std::span<const double> x) const;
    Vector predict(const Matrix& features) const;
};

struct RidgeModel {
    Vector coefficients;  // unpenalized intercept first
    double l2 = 0.0;

    double predict(std::span<const double> x) const;
    Vector predict(const Matrix& features) const;
};

/// L2-penalized logistic regression by iteratively reweighted least squares.
/// The intercept is not penalized. Stops when the largest coefficient change
/// falls below 1e-8 or after 100 iterations.
LogisticModel fit_logistic(const Matrix& features, const Vector& labels, double l2,
                           double clip_epsilon = 0.01);

/// Ridge regression with unpenalized intercept, solved from the centered
/// normal equations. Throws SingularSystem when the Gram matrix is rank
/// deficient and l2 == 0.
RidgeModel fit_ridge(const Matrix& features, const Vector& targets, double l2);

enum class ModelKind { Logistic, Ridge };

/// K-fold CV over `candidates`: held-out log-loss (logistic) or squared error
/// (ridge), pooled over all units. Ties go to the larger penalty.
double select_penalty(const Matrix& features, const Vector& targets,
                      std::span<const double> candidates, int folds, std::uint64_t seed,
                      ModelKind kind, double clip_epsilon = 0.01);

struct CrossFitPlan {
    int k = 2;
    std::vector<int> fold_assignment;
    std::uint64_t seed = 0;

    std::vector<std::size_t> held_out(int fold) const;
    std::vector<std::size_t> training(int fold) const;
};

/// Seeded, (s,t)-stratified fold assignment: units of each cell are shuffled,
/// cells are concatenated and dealt round-robin, so fold sizes differ by at
/// most one and each fold receives a share of every cell.
CrossFitPlan make_cross_fit_plan(const Dataset& dataset, int k, std::uint64_t seed);

struct CrossFitConfig {
    int k = 2;
    std::uint64_t seed = 0;
    std::vector<double> l2_grid{1e-4, 1e-2, 1.0, 1e2};
    int cv_folds = 3;
    double clip_epsilon = 0.01;
    /// Fixes P(T=1 | x, S=1) instead of estimating it.
    std::optional<double> known_exp_propensity;
    int threads = 1;
};

NuisanceEstimates cross_fit(const Dataset& dataset, const CrossFitConfig& config);
NuisanceEstimates cross_fit(const Dataset& dataset, const CrossFitPlan& plan,
                            const CrossFitConfig& config);

/// Design matrix of the covariates of the given units (no intercept column).
Matrix covariate_matrix(const Dataset& dataset, std::span<const std::size_t> indices);

}  // namespace fusion_bounds
