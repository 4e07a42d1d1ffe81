#pragma once

// Partial-identification bounds on E[Y(t) | x] and on the ATE/CATE: the
// experimental (v) and observational (w) bound functions, their hard min/max
// combination, the Boltzmann-smoothed version and its EIF-based
// bias-corrected estimator.

#include <array>
#include <cstdint>
#include <span>
#include <vector>

#include "fusion_bounds/model.hpp"
#include "fusion_bounds/nuisance.hpp"

namespace fusion_bounds {

/// v(x,t,gamma') = (1 + gamma') mu(x,1,t).
double compute_v(double mu_1t, double gamma_signed) noexcept;

/// w(x,t,rho') = mu(x,0,t) (1 + rho' e_{1-t}(x,0)), with e_{1-t} = 1 - e_t.
double compute_w(double mu_0t, double e_t0, double rho_signed) noexcept;

struct BoltzmannWeights {
    double lambda1 = 0.5;  // weight on v
    double lambda2 = 0.5;  // weight on w
};

/// lambda1 = exp(a v) / (exp(a v) + exp(a w)) in overflow-safe logistic form.
BoltzmannWeights boltzmann_weights(double v, double w, double alpha_signed) noexcept;

/// lambda1 v + lambda2 w, clamped into [min(v,w), max(v,w)].
double boltzmann_value(double v, double w, const BoltzmannWeights& weights) noexcept;

/// b = g1 mu(x,1,t) + (1 - g1)(lambda1 v + lambda2 w).
double smooth_b(double g1, double mu_1t, double v, double w, const BoltzmannWeights& weights) noexcept;

struct HardBounds {
    double l = 0.0;
    double u = 0.0;
    bool lower_compatible = true;  // v(-gamma) <= w(rho)
    bool upper_compatible = true;  // w(-rho) <= v(gamma)

    bool compatible() const noexcept { return lower_compatible && upper_compatible; }
};

/// Sharp bounds on E[Y(t) | x]: g1 mu + g0 max(lower bounds), g1 mu + g0 min(upper bounds).
HardBounds hard_bounds(double g1, double mu_1t, double v_plus, double v_minus, double w_plus,
                       double w_minus) noexcept;

/// Hard bounds for one unit's nuisances at arm t.
HardBounds unit_hard_bounds(const NuisanceRow& row, int t, double rho, double gamma) noexcept;

/// One (t', rho', gamma', alpha') evaluation point. Signs are carried in the
/// values themselves.
struct ParameterSlot {
    int t = 1;
    double rho = 0.0;
    double gamma = 0.0;
    double alpha = 0.0;
};

/// The four slots needed for one (rho, gamma, alpha), in order:
/// lower-treated (1,-rho,-gamma,alpha), upper-control (0,rho,gamma,-alpha),
/// upper-treated (1,rho,gamma,-alpha), lower-control (0,-rho,-gamma,alpha).
/// The lower bound is slot0 - slot1 and the upper bound slot2 - slot3.
std::array<ParameterSlot, 4> parameter_slots(const SensitivityPair& pair) noexcept;

struct BoundComponents {
    double v = 0.0;
    double w = 0.0;
    double lambda1 = 0.5;
    double lambda2 = 0.5;
    double b = 0.0;
    double phi_uncentered = 0.0;
};

/// v, w, weights and the plug-in term b for one unit and slot (phi left 0).
BoundComponents evaluate_slot(const NuisanceRow& row, const ParameterSlot& slot) noexcept;

/// Same, plus the uncentered influence-function value at the observed unit.
BoundComponents evaluate_slot(const Unit& unit, const NuisanceRow& row, const ParameterSlot& slot) noexcept;

/// Uncentered efficient influence function value of E[b(X, t', rho', gamma', alpha')]
/// at one observation: plug-in term plus experimental outcome correction,
/// experimental v-correction and observational w-correction.
double eif_value(const Unit& unit, const NuisanceRow& row, const ParameterSlot& slot) noexcept;

struct PluginBounds {
    double lb = 0.0;
    double ub = 0.0;
};

/// Every index 0..n-1.
std::vector<std::size_t> all_indices(std::size_t n);

/// Sample means of the smooth b differences over `subgroup`.
PluginBounds ate_bounds_plugin(const NuisanceEstimates& nuisances, const SensitivityPair& pair,
                               std::span<const std::size_t> subgroup);
PluginBounds ate_bounds_plugin(const NuisanceEstimates& nuisances, const SensitivityPair& pair);

/// Plug-in of the non-smooth bounds: mean[l(1) - u(0)], mean[u(1) - l(0)].
PluginBounds hard_ate_bounds(const NuisanceEstimates& nuisances, double rho, double gamma,
                             std::span<const std::size_t> subgroup);

struct UnitAudit {
    std::size_t index = 0;
    std::array<BoundComponents, 4> slots;
    double phi_lb = 0.0;  // centered at the bias-corrected estimate
    double phi_ub = 0.0;
};

/// Bias-corrected (one-step) bound estimates with EIF sample-variance CIs.
/// theta_bc = theta_plugin + mean(phi_diff - theta_plugin); the centered EIF
/// phi_diff - theta_bc has sample mean zero and its mean square is the
/// reported variance. `audit`, when non-null, receives per-unit components.
BoundEstimate bias_corrected_bounds(const Dataset& dataset, const NuisanceEstimates& nuisances,
                                    const SensitivityPair& pair, std::span<const std::size_t> subgroup,
                                    double confidence = 0.95, std::vector<UnitAudit>* audit = nullptr);
BoundEstimate bias_corrected_bounds(const Dataset& dataset, const NuisanceEstimates& nuisances,
                                    const SensitivityPair& pair, double confidence = 0.95);

struct BootstrapReplicate {
    std::vector<std::size_t> indices;  // into the original dataset
    Dataset data;
    NuisanceEstimates nuisances;
    int attempts = 1;
};

/// Resampled datasets with their own cross-fitted nuisances. Built once and
/// reused for every (rho, gamma).
struct BootstrapEnsemble {
    std::vector<BootstrapReplicate> replicates;
    std::uint64_t seed = 0;
};

inline constexpr int bootstrap_max_retries = 10;

/// Draws B replicates with replacement; each replicate's resampling and
/// cross-fitting seeds derive from (seed, replicate, attempt). Replicates that
/// lose an (s,t) cell are redrawn up to 10 times before the error propagates.
BootstrapEnsemble build_bootstrap_ensemble(const Dataset& dataset, const CrossFitConfig& config, int replicates,
                                           std::uint64_t seed, int threads = 1);

/// Bootstrap variant: point estimates from the full-sample nuisances, variance
/// from the replicate bias-corrected estimates, normal-approximation CIs.
BoundEstimate bootstrap_bounds(const Dataset& dataset, const NuisanceEstimates& full_sample,
                               const BootstrapEnsemble& ensemble, const SensitivityPair& pair,
                               std::span<const std::size_t> subgroup, double confidence = 0.95);

/// Convenience: cross-fit the full sample, build the ensemble and evaluate.
BoundEstimate bootstrap_bounds(const Dataset& dataset, const CrossFitConfig& config,
                               const SensitivityPair& pair, int replicates, std::uint64_t seed,
                               double confidence = 0.95, int threads = 1);

}  // namespace fusion_bounds
