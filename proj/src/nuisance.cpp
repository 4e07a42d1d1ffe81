#include "fusion_bounds/nuisance.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <string>

#include "fusion_bounds/error.hpp"
#include "fusion_bounds/parallel.hpp"
#include "fusion_bounds/random.hpp"
#include "fusion_bounds/stats.hpp"

namespace fusion_bounds {

namespace {

constexpr int max_irls_iterations = 100;
constexpr double irls_tolerance = 1e-8;
constexpr double singular_ratio = 1e-12;

Matrix with_intercept(const Matrix& features) {
    Matrix design(features.rows(), features.cols() + 1);
    design.col(0).setOnes();
    design.rightCols(features.cols()) = features;
    return design;
}

// LDLT solve of a symmetric system; rejects (numerically) singular matrices.
Vector solve_spd(const Matrix& a, const Vector& b, const char* what) {
    Eigen::LDLT<Matrix> ldlt(a);
    if (ldlt.info() != Eigen::Success)
        throw Error(ErrorCode::SingularSystem, std::string(what) + ": factorization failed");
    const Vector d = ldlt.vectorD().cwiseAbs();
    if (d.size() > 0 && !(d.minCoeff() > singular_ratio * std::max(d.maxCoeff(), 1e-300)))
        throw Error(ErrorCode::SingularSystem,
                    std::string(what) + ": normal equations are rank deficient");
    Vector x = ldlt.solve(b);
    if (!x.allFinite())
        throw Error(ErrorCode::SingularSystem, std::string(what) + ": non-finite solution");
    return x;
}

double penalized_nll(const Matrix& design, const Vector& labels, const Vector& beta, double l2) {
    const Vector eta = design * beta;
    double nll = 0.0;
    for (Eigen::Index i = 0; i < eta.size(); ++i) {
        // log(1 + exp(eta)) - y * eta, computed stably.
        const double e = eta[i];
        const double softplus = e > 0 ? e + std::log1p(std::exp(-e)) : std::log1p(std::exp(e));
        nll += softplus - labels[i] * e;
    }
    return nll + 0.5 * l2 * beta.tail(beta.size() - 1).squaredNorm();
}

double clip(double p, double eps) { return std::clamp(p, eps, 1.0 - eps); }

}  // namespace

double LogisticModel::predict(std::span<const double> x) const {
    double eta = coefficients[0];
    for (std::size_t j = 0; j < x.size(); ++j) eta += coefficients[static_cast<Eigen::Index>(j) + 1] * x[j];
    return clip(expit(eta), clip_epsilon);
}

Vector LogisticModel::predict(const Matrix& features) const {
    Vector out(features.rows());
    const Vector eta = (features * coefficients.tail(coefficients.size() - 1)).array() + coefficients[0];
    for (Eigen::Index i = 0; i < eta.size(); ++i) out[i] = clip(expit(eta[i]), clip_epsilon);
    return out;
}

double RidgeModel::predict(std::span<const double> x) const {
    double y = coefficients[0];
    for (std::size_t j = 0; j < x.size(); ++j) y += coefficients[static_cast<Eigen::Index>(j) + 1] * x[j];
    return y;
}

Vector RidgeModel::predict(const Matrix& features) const {
    return (features * coefficients.tail(coefficients.size() - 1)).array() + coefficients[0];
}

LogisticModel fit_logistic(const Matrix& features, const Vector& labels, double l2,
                           double clip_epsilon) {
    require(features.rows() >= 1, "fit_logistic needs at least one row");
    require(features.rows() == labels.size(), "fit_logistic: feature/label row mismatch");
    require(l2 >= 0.0 && std::isfinite(l2), "fit_logistic: l2 must be finite and >= 0");
    require(clip_epsilon > 0.0 && clip_epsilon < 0.5, "clip_epsilon must lie in (0, 0.5)");

    const Eigen::Index p = features.cols() + 1;
    LogisticModel model;
    model.l2 = l2;
    model.clip_epsilon = clip_epsilon;
    model.coefficients = Vector::Zero(p);

    const double positive = labels.sum();
    const auto n = static_cast<double>(labels.size());
    if (positive <= 0.0 || positive >= n) {
        // Constant labels: the unpenalized intercept would diverge.
        model.coefficients[0] = logit(clip(positive / n, clip_epsilon));
        model.converged = true;
        return model;
    }

    const Matrix design = with_intercept(features);
    Vector penalty = Vector::Constant(p, l2);
    penalty[0] = 0.0;

    Vector beta = Vector::Zero(p);
    double objective = penalized_nll(design, labels, beta, l2);
    for (int iter = 1; iter <= max_irls_iterations; ++iter) {
        const Vector eta = design * beta;
        Vector prob(eta.size());
        Vector weight(eta.size());
        for (Eigen::Index i = 0; i < eta.size(); ++i) {
            prob[i] = expit(eta[i]);
            weight[i] = std::max(prob[i] * (1.0 - prob[i]), 1e-12);
        }
        Matrix hessian = design.transpose() * weight.asDiagonal() * design;
        hessian.diagonal() += penalty;
        const Vector gradient = design.transpose() * (labels - prob) - penalty.cwiseProduct(beta);
        Vector step = solve_spd(hessian, gradient, "fit_logistic");

        // Step halving keeps the penalized likelihood monotone near separation.
        double scale = 1.0;
        Vector candidate = beta + step;
        double candidate_objective = penalized_nll(design, labels, candidate, l2);
        for (int h = 0; h < 30 && candidate_objective > objective + 1e-12 * std::abs(objective); ++h) {
            scale *= 0.5;
            candidate = beta + scale * step;
            candidate_objective = penalized_nll(design, labels, candidate, l2);
        }
        const double change = (candidate - beta).cwiseAbs().maxCoeff();
        beta = candidate;
        objective = candidate_objective;
        model.iterations = iter;
        if (change < irls_tolerance) {
            model.converged = true;
            break;
        }
    }
    model.coefficients = beta;
    return model;
}

RidgeModel fit_ridge(const Matrix& features, const Vector& targets, double l2) {
    require(features.rows() >= 1, "fit_ridge needs at least one row");
    require(features.rows() == targets.size(), "fit_ridge: feature/target row mismatch");
    require(l2 >= 0.0 && std::isfinite(l2), "fit_ridge: l2 must be finite and >= 0");

    RidgeModel model;
    model.l2 = l2;
    model.coefficients = Vector::Zero(features.cols() + 1);
    const double y_mean = targets.mean();
    if (features.cols() == 0) {
        model.coefficients[0] = y_mean;
        return model;
    }
    const Eigen::RowVectorXd x_mean = features.colwise().mean();
    const Matrix centered = features.rowwise() - x_mean;
    Matrix gram = centered.transpose() * centered;
    gram.diagonal().array() += l2;
    const Vector rhs = centered.transpose() * (targets.array() - y_mean).matrix();
    const Vector slopes = solve_spd(gram, rhs, "fit_ridge");
    model.coefficients.tail(slopes.size()) = slopes;
    model.coefficients[0] = y_mean - x_mean.dot(slopes);
    return model;
}

double select_penalty(const Matrix& features, const Vector& targets,
                      std::span<const double> candidates, int folds, std::uint64_t seed,
                      ModelKind kind, double clip_epsilon) {
    require(candidates.size() >= 2, "select_penalty needs at least two candidates");
    require(folds >= 2, "select_penalty needs at least two folds");

    std::vector<double> order(candidates.begin(), candidates.end());
    std::sort(order.begin(), order.end(), std::greater<>());
    const auto n = static_cast<std::size_t>(features.rows());
    if (n < 2) return order.front();
    const auto k = static_cast<std::size_t>(std::min<std::size_t>(folds, n));

    // Seeded shuffle, then contiguous blocks.
    std::vector<std::size_t> perm(n);
    std::iota(perm.begin(), perm.end(), 0);
    CounterRng rng(seed);
    for (std::size_t i = n - 1; i > 0; --i) std::swap(perm[i], perm[rng.uniform_index(i + 1)]);
    std::vector<std::size_t> fold_of(n);
    for (std::size_t pos = 0; pos < n; ++pos) fold_of[perm[pos]] = pos * k / n;

    std::vector<double> losses;
    for (double l2 : order) {
        double total = 0.0;
        for (std::size_t f = 0; f < k && std::isfinite(total); ++f) {
            std::vector<Eigen::Index> train;
            std::vector<Eigen::Index> test;
            for (std::size_t i = 0; i < n; ++i)
                (fold_of[i] == f ? test : train).push_back(static_cast<Eigen::Index>(i));
            const Matrix x_train = features(train, Eigen::all);
            const Vector y_train = targets(train);
            const Matrix x_test = features(test, Eigen::all);
            try {
                if (kind == ModelKind::Logistic) {
                    const Vector p = fit_logistic(x_train, y_train, l2, clip_epsilon).predict(x_test);
                    for (std::size_t j = 0; j < test.size(); ++j) {
                        const double y = targets[test[j]];
                        total -= y * std::log(p[static_cast<Eigen::Index>(j)]) +
                                 (1.0 - y) * std::log1p(-p[static_cast<Eigen::Index>(j)]);
                    }
                } else {
                    const Vector p = fit_ridge(x_train, y_train, l2).predict(x_test);
                    for (std::size_t j = 0; j < test.size(); ++j) {
                        const double r = targets[test[j]] - p[static_cast<Eigen::Index>(j)];
                        total += r * r;
                    }
                }
            } catch (const Error& e) {
                if (e.code() != ErrorCode::SingularSystem) throw;
                total = std::numeric_limits<double>::infinity();
            }
        }
        losses.push_back(total / static_cast<double>(n));
    }

    // Candidates are in descending order: only a strictly smaller loss moves
    // the choice toward a smaller penalty.
    std::size_t best = 0;
    for (std::size_t c = 1; c < order.size(); ++c) {
        const double tol = 1e-12 * std::max(1.0, std::abs(losses[best]));
        if (losses[c] < losses[best] - tol) best = c;
    }
    return order[best];
}

std::vector<std::size_t> CrossFitPlan::held_out(int fold) const {
    std::vector<std::size_t> out;
    for (std::size_t i = 0; i < fold_assignment.size(); ++i)
        if (fold_assignment[i] == fold) out.push_back(i);
    return out;
}

std::vector<std::size_t> CrossFitPlan::training(int fold) const {
    std::vector<std::size_t> out;
    for (std::size_t i = 0; i < fold_assignment.size(); ++i)
        if (fold_assignment[i] != fold) out.push_back(i);
    return out;
}

CrossFitPlan make_cross_fit_plan(const Dataset& dataset, int k, std::uint64_t seed) {
    const std::size_t n = dataset.size();
    require(k >= 2, "cross-fitting needs k >= 2");
    require(static_cast<std::size_t>(k) <= n, "cross-fitting needs k <= n");

    CrossFitPlan plan;
    plan.k = k;
    plan.seed = seed;
    plan.fold_assignment.assign(n, 0);

    std::vector<std::size_t> order;
    order.reserve(n);
    for (int s = 0; s < 2; ++s) {
        for (int t = 0; t < 2; ++t) {
            std::vector<std::size_t> cell;
            for (std::size_t i = 0; i < n; ++i)
                if (dataset[i].s == s && dataset[i].t == t) cell.push_back(i);
            CounterRng rng(derive_seed(seed, {stream::cross_fit, static_cast<std::uint64_t>(2 * s + t)}));
            for (std::size_t i = cell.size(); i > 1; --i)
                std::swap(cell[i - 1], cell[rng.uniform_index(i)]);
            order.insert(order.end(), cell.begin(), cell.end());
        }
    }
    for (std::size_t pos = 0; pos < n; ++pos)
        plan.fold_assignment[order[pos]] = static_cast<int>(pos % static_cast<std::size_t>(k));
    return plan;
}

Matrix covariate_matrix(const Dataset& dataset, std::span<const std::size_t> indices) {
    Matrix x(static_cast<Eigen::Index>(indices.size()), static_cast<Eigen::Index>(dataset.dim()));
    for (std::size_t r = 0; r < indices.size(); ++r) {
        const auto& unit = dataset[indices[r]];
        for (std::size_t c = 0; c < unit.x.size(); ++c)
            x(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c)) = unit.x[c];
    }
    return x;
}

namespace {

ModelSummary summarize(std::string target, double l2, const Vector& coef, bool converged, int iterations) {
    ModelSummary m;
    m.target = std::move(target);
    m.l2 = l2;
    m.coefficients.assign(coef.data(), coef.data() + coef.size());
    m.converged = converged;
    m.iterations = iterations;
    return m;
}

double choose_l2(const Matrix& x, const Vector& y, const CrossFitConfig& config, std::uint64_t seed,
                 ModelKind kind) {
    if (config.l2_grid.size() == 1) return config.l2_grid.front();
    return select_penalty(x, y, config.l2_grid, config.cv_folds, seed, kind, config.clip_epsilon);
}

}  // namespace

NuisanceEstimates cross_fit(const Dataset& dataset, const CrossFitConfig& config) {
    return cross_fit(dataset, make_cross_fit_plan(dataset, config.k, config.seed), config);
}

NuisanceEstimates cross_fit(const Dataset& dataset, const CrossFitPlan& plan,
                            const CrossFitConfig& config) {
    require(plan.k >= 2, "cross-fitting needs k >= 2");
    require(plan.fold_assignment.size() == dataset.size(), "plan does not match dataset size");
    require(!config.l2_grid.empty(), "l2 grid is empty");
    require(config.clip_epsilon > 0.0 && config.clip_epsilon < 0.5, "clip_epsilon must lie in (0, 0.5)");

    NuisanceEstimates est;
    est.resize(dataset.size());
    est.clip_epsilon = config.clip_epsilon;
    est.fold_id = plan.fold_assignment;
    est.folds.resize(static_cast<std::size_t>(plan.k));

    parallel_for(static_cast<std::size_t>(plan.k), config.threads, [&](std::size_t fold_index) {
        const int j = static_cast<int>(fold_index);
        const std::vector<std::size_t> train = plan.training(j);
        const std::vector<std::size_t> held = plan.held_out(j);

        std::array<std::array<std::vector<std::size_t>, 2>, 2> cell;
        std::array<std::vector<std::size_t>, 2> study;
        for (std::size_t i : train) {
            cell[dataset[i].s][dataset[i].t].push_back(i);
            study[dataset[i].s].push_back(i);
        }
        for (int s = 0; s < 2; ++s)
            for (int t = 0; t < 2; ++t)
                if (cell[s][t].empty())
                    throw Error(ErrorCode::EmptyTrainingCell,
                                "EmptyTrainingCell(" + std::to_string(j) + "," + std::to_string(s) + "," +
                                    std::to_string(t) + "): training split of fold " + std::to_string(j) +
                                    " has no units with s=" + std::to_string(s) + ", t=" +
                                    std::to_string(t) + "; use fewer folds");

        auto seed_for = [&](std::uint64_t model) {
            return derive_seed(config.seed, {stream::penalty_cv, fold_index, model});
        };
        FoldFitSummary summary;
        summary.fold = j;
        summary.n_train = train.size();
        summary.n_held_out = held.size();
        const Matrix x_held = covariate_matrix(dataset, held);

        // Study selection score g_1(x) on the whole training split.
        {
            const Matrix x = covariate_matrix(dataset, train);
            Vector labels(x.rows());
            for (std::size_t r = 0; r < train.size(); ++r) labels[static_cast<Eigen::Index>(r)] = dataset[train[r]].s;
            const double l2 = choose_l2(x, labels, config, seed_for(0), ModelKind::Logistic);
            const LogisticModel m = fit_logistic(x, labels, l2, config.clip_epsilon);
            const Vector p = m.predict(x_held);
            for (std::size_t r = 0; r < held.size(); ++r) est.g1[held[r]] = p[static_cast<Eigen::Index>(r)];
            summary.models.push_back(summarize("g", l2, m.coefficients, m.converged, m.iterations));
        }

        // Treatment propensities e_1(x, s) within each study.
        for (int s = 0; s < 2; ++s) {
            auto& target = s == 1 ? est.e1_s1 : est.e1_s0;
            const std::string name = "e_s" + std::to_string(s);
            if (s == 1 && config.known_exp_propensity) {
                const double fixed = clip(*config.known_exp_propensity, config.clip_epsilon);
                for (std::size_t i : held) target[i] = fixed;
                summary.models.push_back(summarize(name, 0.0, Vector::Constant(1, logit(fixed)), true, 0));
                continue;
            }
            const Matrix x = covariate_matrix(dataset, study[s]);
            Vector labels(x.rows());
            for (std::size_t r = 0; r < study[s].size(); ++r)
                labels[static_cast<Eigen::Index>(r)] = dataset[study[s][r]].t;
            const double l2 = choose_l2(x, labels, config, seed_for(1 + s), ModelKind::Logistic);
            const LogisticModel m = fit_logistic(x, labels, l2, config.clip_epsilon);
            const Vector p = m.predict(x_held);
            for (std::size_t r = 0; r < held.size(); ++r) target[held[r]] = p[static_cast<Eigen::Index>(r)];
            summary.models.push_back(summarize(name, l2, m.coefficients, m.converged, m.iterations));
        }

        // Outcome regressions mu(x, s, t), predicted for every held-out unit
        // at all four (s, t) combinations.
        for (int s = 0; s < 2; ++s) {
            for (int t = 0; t < 2; ++t) {
                const auto& idx = cell[s][t];
                const Matrix x = covariate_matrix(dataset, idx);
                Vector y(x.rows());
                for (std::size_t r = 0; r < idx.size(); ++r) y[static_cast<Eigen::Index>(r)] = dataset[idx[r]].y;
                const double l2 = choose_l2(x, y, config, seed_for(3 + 2 * s + t), ModelKind::Ridge);
                const RidgeModel m = fit_ridge(x, y, l2);
                const Vector pred = m.predict(x_held);
                for (std::size_t r = 0; r < held.size(); ++r) est.mu[s][t][held[r]] = pred[static_cast<Eigen::Index>(r)];
                summary.models.push_back(summarize("mu_" + std::to_string(s) + std::to_string(t), l2,
                                                   m.coefficients, true, 0));
            }
        }
        est.folds[fold_index] = std::move(summary);
    });
    return est;
}

}  // namespace fusion_bounds
