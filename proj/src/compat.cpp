#include "fusion_bounds/compat.hpp"

#include <algorithm>
#include <array>
#include <cmath>

#include "fusion_bounds/bounds.hpp"
#include "fusion_bounds/error.hpp"
#include "fusion_bounds/parallel.hpp"
#include "fusion_bounds/random.hpp"

namespace fusion_bounds {

std::string_view compat_mode_name(CompatMode mode) noexcept {
    return mode == CompatMode::PaperLiteral ? "paper-literal" : "corrected-left-tail";
}

OverlapSample overlap_values(const NuisanceEstimates& nuisances, const SensitivityPair& pair, int t,
                             std::span<const std::size_t> subgroup) {
    require(t == 0 || t == 1, "arm must be 0 or 1");
    if (subgroup.empty()) throw Error(ErrorCode::EmptySubgroup, "subgroup selects no units");
    OverlapSample sample;
    sample.t = t;
    sample.n = subgroup.size();
    sample.o.reserve(sample.n);
    double sum = 0.0;
    for (std::size_t i : subgroup) {
        require(i < nuisances.size(), "subgroup index outside nuisance estimates");
        const NuisanceRow row = nuisances.row(i);
        const double mu1 = row.outcome(1, t);
        const double mu0 = row.outcome(0, t);
        const double e_t0 = row.e(t, 0);
        const double upper = std::min(compute_v(mu1, pair.gamma), compute_w(mu0, e_t0, pair.rho));
        const double lower = std::max(compute_v(mu1, -pair.gamma), compute_w(mu0, e_t0, -pair.rho));
        sample.o.push_back(upper - lower);
        sum += upper - lower;
    }
    sample.t_obs = sum / static_cast<double>(sample.n);
    for (double& v : sample.o) v -= sample.t_obs;
    return sample;
}

std::vector<double> resample_means(const OverlapSample& sample, int r, std::uint64_t seed, int threads) {
    const std::size_t n = sample.o.size();
    std::vector<double> means(static_cast<std::size_t>(std::max(r, 0)));
    parallel_for(means.size(), threads, [&](std::size_t k) {
        CounterRng rng(derive_seed(seed, {stream::compat, k}));
        double sum = 0.0;
        for (std::size_t j = 0; j < n; ++j) sum += sample.o[rng.uniform_index(n)];
        means[k] = sum / static_cast<double>(n);
    });
    return means;
}

std::pair<double, double> compat_p_values(const OverlapSample& sample, std::span<const double> resampled) {
    std::size_t left = 0;
    std::size_t right = 0;
    for (double tr : resampled) {
        if (tr <= sample.t_obs) ++left;
        if (tr >= sample.t_obs) ++right;
    }
    const auto r = static_cast<double>(resampled.size());
    return {left / r, right / r};
}

CompatResult compat_test(const OverlapSample& sample, int r, std::uint64_t seed, double confidence,
                         CompatMode mode, int threads) {
    if (r < min_compat_resamples)
        throw Error(ErrorCode::RTooSmall, "compatibility test needs r >= " + std::to_string(min_compat_resamples) +
                                              " resamples, got " + std::to_string(r));
    require(sample.o.size() >= 2, "compatibility test needs n >= 2");
    require(confidence > 0.0 && confidence < 1.0, "confidence must lie in (0, 1)");

    const std::vector<double> means = resample_means(sample, r, seed, threads);
    const auto [p_left, p_right] = compat_p_values(sample, means);

    CompatResult result;
    result.r = r;
    result.formula_mode = mode;
    result.t_obs = sample.t_obs;
    result.t = sample.t;
    if (mode == CompatMode::CorrectedLeftTail) {
        result.p_value = p_left;
        result.decision_threshold = 1.0 - confidence;
    } else {
        result.p_value = p_right;
        result.decision_threshold = confidence;
    }
    result.compatible = !(result.p_value < result.decision_threshold);
    return result;
}

std::pair<CompatResult, CompatResult> compat_both_arms(const NuisanceEstimates& nuisances,
                                                       const SensitivityPair& pair, const CompatConfig& config,
                                                       std::span<const std::size_t> subgroup) {
    std::array<CompatResult, 2> results;
    for (int t = 0; t < 2; ++t) {
        const OverlapSample sample = overlap_values(nuisances, pair, t, subgroup);
        const std::uint64_t arm_seed = derive_seed(config.seed, {stream::compat, static_cast<std::uint64_t>(t)});
        results[t] = compat_test(sample, config.r, arm_seed, config.confidence, config.mode, config.threads);
    }
    return {results[0], results[1]};
}

}  // namespace fusion_bounds
