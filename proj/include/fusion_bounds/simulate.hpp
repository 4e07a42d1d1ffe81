#pragma once

// Synthetic fused experimental/observational data with an unobserved
// confounder U acting on study selection, observational treatment and outcome.

#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "fusion_bounds/model.hpp"

namespace fusion_bounds {

struct SimConfig {
    std::size_t n = 2500;
    double beta = 0.4;  // weight of U in C = (1 - beta) X1 + beta U
    double tau = 5.0;   // constant part of the treatment effect
    std::uint64_t seed = 0;

    void validate() const;
};

struct Scenario {
    std::string name;
    SimConfig config;
};

/// Base (0.4, 5), LargerTau (0.4, 8), SmallerTau (0.4, 2), LargerU (0.6, 5),
/// SmallerU (0.2, 5) as (beta, tau). Lookup is case-insensitive and ignores
/// '-'/'_'. Throws UnknownScenario.
Scenario scenario(std::string_view name, std::size_t n = 2500, std::uint64_t seed = 0);
const std::vector<std::string>& scenario_names();

struct SimulatedData {
    Dataset dataset;  // covariates x1, x2, x3 only
    std::vector<double> u;
    std::vector<double> c;
    SimConfig config;
    int attempts = 1;             // whole-sample draws, including the accepted one
    int positivity_redraws = 0;   // rejected draws with some y <= 0
    int cell_redraws = 0;         // rejected draws with an empty (s,t) cell
};

inline constexpr int simulation_max_attempts = 10;

/// Draws one dataset. Each unit's seven variates (X1, X2, X3, U, S, T, eps)
/// come from the stream derive_seed(seed, simulate, attempt, i), so a dataset
/// is a pure function of the config. Throws DegenerateDraw after 10 rejected
/// draws.
SimulatedData simulate_dataset(const SimConfig& config);

/// ATE of the generating process: tau + 2.
double oracle_ate(const SimConfig& config) noexcept;

/// True nuisance values given the retained confounder C:
/// g1 = expit(-C), e1(x,0) = expit(C), e1(x,1) = 0.5,
/// mu(x,s,0) = 100 + x2, mu(x,s,1) = 100 + x2 + 12 C - 10 x3 + tau.
/// Throws InternalsUnavailable when C was not retained.
NuisanceEstimates oracle_nuisances(const SimulatedData& data, double clip_epsilon = 0.01);

}  // namespace fusion_bounds
