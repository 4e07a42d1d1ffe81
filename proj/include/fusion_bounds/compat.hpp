#pragma once

// Compatibility of a (rho, gamma) pair with the data: the experimental and
// observational bound intervals on E[Y(t) | x, S=0] must overlap on average.
// H0: mean overlap >= 0 is tested per arm by resampling the centered overlap
// values with the nuisance predictions held fixed.

#include <cstdint>
#include <span>
#include <string_view>
#include <utility>
#include <vector>

#include "fusion_bounds/model.hpp"

namespace fusion_bounds {

struct OverlapSample {
    int t = 0;
    std::vector<double> o;  // raw overlap minus t_obs
    double t_obs = 0.0;
    std::size_t n = 0;
};

enum class CompatMode {
    /// p = P(T_r <= T_obs); rejects H0 (incompatible) when p < significance.
    CorrectedLeftTail,
    /// p = P(T_r >= T_obs); rejects when p < confidence, so large observed
    /// overlaps are the ones rejected. Kept for audits only.
    PaperLiteral,
};

std::string_view compat_mode_name(CompatMode mode) noexcept;

struct CompatResult {
    double p_value = 1.0;
    int r = 0;
    double decision_threshold = 0.05;
    bool compatible = true;
    CompatMode formula_mode = CompatMode::CorrectedLeftTail;
    double t_obs = 0.0;
    int t = 0;
};

inline constexpr int min_compat_resamples = 100;

/// Overlap min{v(gamma), w(rho)} - max{v(-gamma), w(-rho)} per unit of the
/// subgroup at arm t, centered at its mean.
OverlapSample overlap_values(const NuisanceEstimates& nuisances, const SensitivityPair& pair, int t,
                             std::span<const std::size_t> subgroup);

/// Mean of n draws with replacement from the centered sample, one per resample
/// r, each from its own stream derive_seed(seed, compat, r).
std::vector<double> resample_means(const OverlapSample& sample, int r, std::uint64_t seed, int threads = 1);

/// Runs the resampling test. `confidence` c sets the thresholds: significance
/// 1 - c in corrected mode, c in paper-literal mode. Throws RTooSmall when
/// r < 100.
CompatResult compat_test(const OverlapSample& sample, int r, std::uint64_t seed, double confidence = 0.95,
                         CompatMode mode = CompatMode::CorrectedLeftTail, int threads = 1);

/// Both p-values from one resample set, for comparing the two readings.
std::pair<double, double> compat_p_values(const OverlapSample& sample, std::span<const double> resampled);

struct CompatConfig {
    int r = min_compat_resamples;
    std::uint64_t seed = 0;
    double confidence = 0.95;
    CompatMode mode = CompatMode::CorrectedLeftTail;
    int threads = 1;
};

/// Tests t = 0 and t = 1 with arm-specific derived seeds. The pair is
/// incompatible when either arm rejects.
std::pair<CompatResult, CompatResult> compat_both_arms(const NuisanceEstimates& nuisances,
                                                       const SensitivityPair& pair, const CompatConfig& config,
                                                       std::span<const std::size_t> subgroup);

}  // namespace fusion_bounds
