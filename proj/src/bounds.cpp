#include "fusion_bounds/bounds.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <unordered_set>

#include "fusion_bounds/error.hpp"
#include "fusion_bounds/parallel.hpp"
#include "fusion_bounds/random.hpp"
#include "fusion_bounds/stats.hpp"

namespace fusion_bounds {

double compute_v(double mu_1t, double gamma_signed) noexcept { return (1.0 + gamma_signed) * mu_1t; }

double compute_w(double mu_0t, double e_t0, double rho_signed) noexcept {
    return mu_0t * (1.0 + rho_signed * (1.0 - e_t0));
}

BoltzmannWeights boltzmann_weights(double v, double w, double alpha_signed) noexcept {
    const double z = alpha_signed * (w - v);
    if (z == 0.0) return {0.5, 0.5};
    // Each weight is its own logistic term: exp overflow saturates to 0/1.
    return {1.0 / (1.0 + std::exp(z)), 1.0 / (1.0 + std::exp(-z))};
}

double boltzmann_value(double v, double w, const BoltzmannWeights& weights) noexcept {
    const double value = weights.lambda1 * v + weights.lambda2 * w;
    return std::clamp(value, std::min(v, w), std::max(v, w));
}

double smooth_b(double g1, double mu_1t, double v, double w, const BoltzmannWeights& weights) noexcept {
    return g1 * mu_1t + (1.0 - g1) * boltzmann_value(v, w, weights);
}

HardBounds hard_bounds(double g1, double mu_1t, double v_plus, double v_minus, double w_plus,
                       double w_minus) noexcept {
    HardBounds out;
    const double g0 = 1.0 - g1;
    out.l = g1 * mu_1t + g0 * std::max(w_minus, v_minus);
    out.u = g1 * mu_1t + g0 * std::min(w_plus, v_plus);
    out.lower_compatible = v_minus <= w_plus;
    out.upper_compatible = w_minus <= v_plus;
    return out;
}

HardBounds unit_hard_bounds(const NuisanceRow& row, int t, double rho, double gamma) noexcept {
    const double mu1 = row.outcome(1, t);
    const double mu0 = row.outcome(0, t);
    const double e_t0 = row.e(t, 0);
    return hard_bounds(row.g1, mu1, compute_v(mu1, gamma), compute_v(mu1, -gamma), compute_w(mu0, e_t0, rho),
                       compute_w(mu0, e_t0, -rho));
}

std::array<ParameterSlot, 4> parameter_slots(const SensitivityPair& pair) noexcept {
    const double r = pair.rho;
    const double g = pair.gamma;
    const double a = pair.alpha;
    return {{{1, -r, -g, a}, {0, r, g, -a}, {1, r, g, -a}, {0, -r, -g, a}}};
}

BoundComponents evaluate_slot(const NuisanceRow& row, const ParameterSlot& slot) noexcept {
    BoundComponents c;
    const int t = slot.t;
    const double mu1 = row.outcome(1, t);
    c.v = compute_v(mu1, slot.gamma);
    c.w = compute_w(row.outcome(0, t), row.e(t, 0), slot.rho);
    const BoltzmannWeights weights = boltzmann_weights(c.v, c.w, slot.alpha);
    c.lambda1 = weights.lambda1;
    c.lambda2 = weights.lambda2;
    c.b = smooth_b(row.g1, mu1, c.v, c.w, weights);
    return c;
}

BoundComponents evaluate_slot(const Unit& unit, const NuisanceRow& row, const ParameterSlot& slot) noexcept {
    BoundComponents c = evaluate_slot(row, slot);
    c.phi_uncentered = eif_value(unit, row, slot);
    return c;
}

double eif_value(const Unit& unit, const NuisanceRow& row, const ParameterSlot& slot) noexcept {
    const int t = slot.t;
    const double mu1 = row.outcome(1, t);
    const double mu0 = row.outcome(0, t);
    const double e_t1 = row.e(t, 1);
    const double e_t0 = row.e(t, 0);
    const double e_other0 = row.e(1 - t, 0);
    const double g1 = row.g1;
    const double g0 = 1.0 - g1;

    const double v = compute_v(mu1, slot.gamma);
    const double w = compute_w(mu0, e_t0, slot.rho);
    const BoltzmannWeights lw = boltzmann_weights(v, w, slot.alpha);
    const double l1 = lw.lambda1;
    const double l2 = lw.lambda2;

    const double treated_as_t = unit.t == t ? 1.0 : 0.0;
    const double treated_other = unit.t == 1 - t ? 1.0 : 0.0;

    if (unit.s == 1) {
        const double residual = unit.y - mu1;
        const double outcome_correction = treated_as_t / e_t1 * residual;
        const double v_weight = (1.0 + slot.gamma) * (l1 + slot.alpha * l1 * l2 * (v - w));
        const double v_correction = v_weight * treated_as_t / (e_t1 * g1) * residual * g0;
        return mu1 + outcome_correction + v_correction;
    }

    const double residual = unit.y - mu0;
    const double w_weight = l2 + slot.alpha * l1 * l2 * (w - v);
    const double w_correction =
        w_weight * (treated_as_t / e_t0 * residual * (1.0 + slot.rho * e_other0) +
                    slot.rho * mu0 * (treated_other - e_other0));
    return boltzmann_value(v, w, lw) + w_correction;
}

std::vector<std::size_t> all_indices(std::size_t n) {
    std::vector<std::size_t> idx(n);
    std::iota(idx.begin(), idx.end(), 0);
    return idx;
}

PluginBounds ate_bounds_plugin(const NuisanceEstimates& nuisances, const SensitivityPair& pair,
                               std::span<const std::size_t> subgroup) {
    pair.validate();
    if (subgroup.empty()) throw Error(ErrorCode::EmptySubgroup, "subgroup selects no units");
    const auto slots = parameter_slots(pair);
    double lb = 0.0;
    double ub = 0.0;
    for (std::size_t i : subgroup) {
        require(i < nuisances.size(), "subgroup index outside nuisance estimates");
        const NuisanceRow row = nuisances.row(i);
        std::array<double, 4> b{};
        for (std::size_t k = 0; k < 4; ++k) b[k] = evaluate_slot(row, slots[k]).b;
        lb += b[0] - b[1];
        ub += b[2] - b[3];
    }
    const auto n = static_cast<double>(subgroup.size());
    return {lb / n, ub / n};
}

PluginBounds ate_bounds_plugin(const NuisanceEstimates& nuisances, const SensitivityPair& pair) {
    const auto idx = all_indices(nuisances.size());
    return ate_bounds_plugin(nuisances, pair, idx);
}

PluginBounds hard_ate_bounds(const NuisanceEstimates& nuisances, double rho, double gamma,
                             std::span<const std::size_t> subgroup) {
    if (subgroup.empty()) throw Error(ErrorCode::EmptySubgroup, "subgroup selects no units");
    double lb = 0.0;
    double ub = 0.0;
    for (std::size_t i : subgroup) {
        const NuisanceRow row = nuisances.row(i);
        const HardBounds treated = unit_hard_bounds(row, 1, rho, gamma);
        const HardBounds control = unit_hard_bounds(row, 0, rho, gamma);
        lb += treated.l - control.u;
        ub += treated.u - control.l;
    }
    const auto n = static_cast<double>(subgroup.size());
    return {lb / n, ub / n};
}

namespace {

Interval normal_interval(double center, double se, double z) { return {center - z * se, center + z * se}; }

}  // namespace

BoundEstimate bias_corrected_bounds(const Dataset& dataset, const NuisanceEstimates& nuisances,
                                    const SensitivityPair& pair, std::span<const std::size_t> subgroup,
                                    double confidence, std::vector<UnitAudit>* audit) {
    pair.validate();
    require(confidence > 0.0 && confidence < 1.0, "confidence must lie in (0, 1)");
    require(nuisances.size() == dataset.size(), "nuisance estimates do not match the dataset");
    if (subgroup.empty()) throw Error(ErrorCode::EmptySubgroup, "subgroup selects no units");

    const auto slots = parameter_slots(pair);
    const std::size_t n = subgroup.size();
    std::vector<double> phi_lb(n);
    std::vector<double> phi_ub(n);
    double plugin_lb = 0.0;
    double plugin_ub = 0.0;
    std::size_t violations = 0;
    if (audit) audit->assign(n, UnitAudit{});

    for (std::size_t k = 0; k < n; ++k) {
        const std::size_t i = subgroup[k];
        require(i < dataset.size(), "subgroup index outside dataset");
        const NuisanceRow row = nuisances.row(i);
        std::array<BoundComponents, 4> c;
        for (std::size_t s = 0; s < 4; ++s) c[s] = evaluate_slot(dataset[i], row, slots[s]);
        plugin_lb += c[0].b - c[1].b;
        plugin_ub += c[2].b - c[3].b;
        phi_lb[k] = c[0].phi_uncentered - c[1].phi_uncentered;
        phi_ub[k] = c[2].phi_uncentered - c[3].phi_uncentered;
        // Ordering b(t,-rho,-gamma,alpha) <= b(t,rho,gamma,-alpha) for both arms.
        if (c[0].b > c[2].b || c[3].b > c[1].b) ++violations;
        if (audit) {
            (*audit)[k].index = i;
            (*audit)[k].slots = c;
        }
    }

    const auto nd = static_cast<double>(n);
    BoundEstimate est;
    est.theta_lb_plugin = plugin_lb / nd;
    est.theta_ub_plugin = plugin_ub / nd;

    // One-step correction: plug-in plus the mean of the plug-in-centered EIF.
    double corr_lb = 0.0;
    double corr_ub = 0.0;
    for (std::size_t k = 0; k < n; ++k) {
        corr_lb += phi_lb[k] - est.theta_lb_plugin;
        corr_ub += phi_ub[k] - est.theta_ub_plugin;
    }
    est.theta_lb_bc = est.theta_lb_plugin + corr_lb / nd;
    est.theta_ub_bc = est.theta_ub_plugin + corr_ub / nd;

    // Centered EIF: mean zero by construction; its mean square is sigma^2.
    double ss_lb = 0.0;
    double ss_ub = 0.0;
    double mean_lb = 0.0;
    double mean_ub = 0.0;
    for (std::size_t k = 0; k < n; ++k) {
        phi_lb[k] -= est.theta_lb_bc;
        phi_ub[k] -= est.theta_ub_bc;
        mean_lb += phi_lb[k];
        mean_ub += phi_ub[k];
    }
    mean_lb /= nd;
    mean_ub /= nd;
    for (std::size_t k = 0; k < n; ++k) {
        ss_lb += (phi_lb[k] - mean_lb) * (phi_lb[k] - mean_lb);
        ss_ub += (phi_ub[k] - mean_ub) * (phi_ub[k] - mean_ub);
        if (audit) {
            (*audit)[k].phi_lb = phi_lb[k];
            (*audit)[k].phi_ub = phi_ub[k];
        }
    }
    est.var_lb = ss_lb / nd;
    est.var_ub = ss_ub / nd;
    est.se_lb = std::sqrt(est.var_lb / nd);
    est.se_ub = std::sqrt(est.var_ub / nd);
    const double z = two_sided_z(confidence);
    est.ci_lb = normal_interval(est.theta_lb_bc, est.se_lb, z);
    est.ci_ub = normal_interval(est.theta_ub_bc, est.se_ub, z);
    est.confidence = confidence;
    est.n_effective = n;
    est.variance_method = VarianceMethod::EifSampleVariance;
    est.ordering_violations = violations;
    return est;
}

BoundEstimate bias_corrected_bounds(const Dataset& dataset, const NuisanceEstimates& nuisances,
                                    const SensitivityPair& pair, double confidence) {
    const auto idx = all_indices(dataset.size());
    return bias_corrected_bounds(dataset, nuisances, pair, idx, confidence);
}

BootstrapEnsemble build_bootstrap_ensemble(const Dataset& dataset, const CrossFitConfig& config, int replicates,
                                           std::uint64_t seed, int threads) {
    require(replicates >= 2, "bootstrap needs B >= 2");
    BootstrapEnsemble ensemble;
    ensemble.seed = seed;
    ensemble.replicates.resize(static_cast<std::size_t>(replicates));
    const std::size_t n = dataset.size();

    parallel_for(ensemble.replicates.size(), threads, [&](std::size_t b) {
        for (int attempt = 0;; ++attempt) {
            CounterRng rng(derive_seed(seed, {stream::bootstrap, b, static_cast<std::uint64_t>(attempt)}));
            std::vector<std::size_t> indices(n);
            for (auto& idx : indices) idx = rng.uniform_index(n);
            try {
                BootstrapReplicate rep;
                rep.data = dataset.resample(indices);
                CrossFitConfig replicate_config = config;
                replicate_config.threads = 1;
                replicate_config.seed =
                    derive_seed(seed, {stream::bootstrap, b, static_cast<std::uint64_t>(attempt), 1});
                rep.nuisances = cross_fit(rep.data, replicate_config);
                rep.indices = std::move(indices);
                rep.attempts = attempt + 1;
                ensemble.replicates[b] = std::move(rep);
                return;
            } catch (const Error& e) {
                const bool redraw = e.code() == ErrorCode::EmptyCell || e.code() == ErrorCode::EmptyTrainingCell;
                if (!redraw || attempt + 1 >= bootstrap_max_retries) throw;
            }
        }
    });
    return ensemble;
}

BoundEstimate bootstrap_bounds(const Dataset& dataset, const NuisanceEstimates& full_sample,
                               const BootstrapEnsemble& ensemble, const SensitivityPair& pair,
                               std::span<const std::size_t> subgroup, double confidence) {
    BoundEstimate est = bias_corrected_bounds(dataset, full_sample, pair, subgroup, confidence);

    const bool whole = subgroup.size() == dataset.size();
    std::unordered_set<std::size_t> members;
    if (!whole) members.insert(subgroup.begin(), subgroup.end());

    std::vector<double> lbs;
    std::vector<double> ubs;
    for (const BootstrapReplicate& rep : ensemble.replicates) {
        std::vector<std::size_t> local;
        for (std::size_t r = 0; r < rep.indices.size(); ++r)
            if (whole || members.count(rep.indices[r])) local.push_back(r);
        if (local.empty()) continue;
        const BoundEstimate r = bias_corrected_bounds(rep.data, rep.nuisances, pair, local, confidence);
        lbs.push_back(r.theta_lb_bc);
        ubs.push_back(r.theta_ub_bc);
    }
    if (lbs.size() < 2)
        throw Error(ErrorCode::BootstrapExhausted, "fewer than two bootstrap replicates contain the subgroup");

    est.var_lb = variance_unbiased(lbs);
    est.var_ub = variance_unbiased(ubs);
    est.se_lb = std::sqrt(est.var_lb);
    est.se_ub = std::sqrt(est.var_ub);
    const double z = two_sided_z(confidence);
    est.ci_lb = normal_interval(est.theta_lb_bc, est.se_lb, z);
    est.ci_ub = normal_interval(est.theta_ub_bc, est.se_ub, z);
    est.variance_method = VarianceMethod::Bootstrap;
    est.bootstrap_replicates = lbs.size();
    return est;
}

BoundEstimate bootstrap_bounds(const Dataset& dataset, const CrossFitConfig& config,
                               const SensitivityPair& pair, int replicates, std::uint64_t seed,
                               double confidence, int threads) {
    const NuisanceEstimates full = cross_fit(dataset, config);
    const BootstrapEnsemble ensemble = build_bootstrap_ensemble(dataset, config, replicates, seed, threads);
    const auto idx = all_indices(dataset.size());
    return bootstrap_bounds(dataset, full, ensemble, pair, idx, confidence);
}

}  // namespace fusion_bounds
