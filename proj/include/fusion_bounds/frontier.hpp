#pragma once

// Breakdown-frontier sweep: every (rho, gamma) cell of a grid is tested for
// compatibility and, when compatible, bounded and classified.

#include <array>
#include <cstdint>
#include <optional>
#include <span>
#include <utility>
#include <vector>

#include "fusion_bounds/compat.hpp"
#include "fusion_bounds/model.hpp"
#include "fusion_bounds/nuisance.hpp"

namespace fusion_bounds {

struct FrontierConfig {
    double rho_max = 0.2;
    double gamma_max = 0.2;
    int grid_n = 50;
    double confidence = 0.95;
    double alpha = 10.0;
    int k = 2;
    int r_compat = 100;
    VarianceMethod variance_method = VarianceMethod::EifSampleVariance;
    int bootstrap_b = 50;
    std::uint64_t seed = 0;
    CompatMode compat_mode = CompatMode::CorrectedLeftTail;
    std::vector<double> l2_grid{1e-4, 1e-2, 1.0, 1e2};
    double clip_epsilon = 0.01;
    std::optional<double> known_exp_propensity;
    int threads = 1;

    void validate() const;
    CrossFitConfig cross_fit_config() const;
};

/// grid_n evenly spaced values from 0 to `max`, both endpoints exact.
std::vector<double> axis_values(double max, int grid_n);

/// All (rho, gamma) pairs, rho-major: index = i_rho * grid_n + i_gamma.
std::vector<std::pair<double, double>> build_grid(const FrontierConfig& config);

/// Region of one cell. `bound` may be absent only when an arm rejects.
Region classify_cell(const std::optional<BoundEstimate>& bound, const CompatResult& arm0,
                     const CompatResult& arm1);

struct FrontierGrid {
    std::vector<FrontierCell> cells;
    FrontierConfig config;
    std::uint64_t dataset_fingerprint = 0;
    std::uint64_t nuisance_fingerprint = 0;
    std::vector<FoldFitSummary> nuisance_folds;
    std::size_t subgroup_size = 0;
    double significance_threshold = 0.05;

    std::array<std::size_t, 4> region_counts() const noexcept;
};

/// Fits nuisances once by cross-fitting and sweeps the grid.
FrontierGrid compute_frontier(const Dataset& dataset, const FrontierConfig& config,
                              std::span<const std::size_t> subgroup = {});

/// Sweeps the grid with nuisances fitted elsewhere. Each cell draws its
/// compatibility resamples from derive_seed(seed, frontier_cell, index), so
/// cell results do not depend on evaluation order or thread count.
FrontierGrid compute_frontier(const Dataset& dataset, const NuisanceEstimates& nuisances,
                              const FrontierConfig& config, std::span<const std::size_t> subgroup = {});

}  // namespace fusion_bounds
