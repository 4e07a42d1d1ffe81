#include "fusion_bounds/frontier.hpp"

#include <cmath>

#include "fusion_bounds/bounds.hpp"
#include "fusion_bounds/error.hpp"
#include "fusion_bounds/parallel.hpp"
#include "fusion_bounds/random.hpp"

namespace fusion_bounds {

void FrontierConfig::validate() const {
    require(std::isfinite(rho_max) && rho_max > 0.0, "rho_max must be positive");
    require(std::isfinite(gamma_max) && gamma_max > 0.0, "gamma_max must be positive");
    require(grid_n >= 2, "grid_n must be at least 2");
    require(confidence > 0.0 && confidence < 1.0, "confidence must lie in (0, 1)");
    require(std::isfinite(alpha) && alpha > 0.0, "alpha must be positive");
    require(k >= 2, "k must be at least 2");
    require(bootstrap_b >= 2 || variance_method != VarianceMethod::Bootstrap, "bootstrap_b must be at least 2");
    require(threads >= 1, "threads must be at least 1");
    if (r_compat < min_compat_resamples)
        throw Error(ErrorCode::RTooSmall, "compatibility test needs r >= " + std::to_string(min_compat_resamples) +
                                              " resamples, got " + std::to_string(r_compat));
}

CrossFitConfig FrontierConfig::cross_fit_config() const {
    CrossFitConfig cf;
    cf.k = k;
    cf.seed = seed;
    cf.l2_grid = l2_grid;
    cf.clip_epsilon = clip_epsilon;
    cf.known_exp_propensity = known_exp_propensity;
    cf.threads = threads;
    return cf;
}

std::vector<double> axis_values(double max, int grid_n) {
    require(grid_n >= 2, "grid_n must be at least 2");
    std::vector<double> values(static_cast<std::size_t>(grid_n));
    const double last = grid_n - 1;
    for (int i = 0; i < grid_n; ++i) values[i] = max * (i / last);
    values.back() = max;
    return values;
}

std::vector<std::pair<double, double>> build_grid(const FrontierConfig& config) {
    require(config.grid_n >= 2, "grid_n must be at least 2");
    const auto rhos = axis_values(config.rho_max, config.grid_n);
    const auto gammas = axis_values(config.gamma_max, config.grid_n);
    std::vector<std::pair<double, double>> grid;
    grid.reserve(rhos.size() * gammas.size());
    for (double r : rhos)
        for (double g : gammas) grid.emplace_back(r, g);
    return grid;
}

namespace {

int sign(double v) noexcept { return (v > 0.0) - (v < 0.0); }

}  // namespace

Region classify_cell(const std::optional<BoundEstimate>& bound, const CompatResult& arm0,
                     const CompatResult& arm1) {
    if (!arm0.compatible || !arm1.compatible) return Region::Incompatible;
    require(bound.has_value(), "compatible cell needs a bound estimate");
    const int s_lb = sign(bound->theta_lb_bc);
    const int s_ub = sign(bound->theta_ub_bc);
    if (s_lb == 0 || s_lb != s_ub) return Region::Inconclusive;
    if (bound->ci_lb.excludes_zero() && bound->ci_ub.excludes_zero()) return Region::Conclusive;
    return Region::Tentative;
}

std::array<std::size_t, 4> FrontierGrid::region_counts() const noexcept {
    std::array<std::size_t, 4> counts{};
    for (const auto& cell : cells) ++counts[static_cast<std::size_t>(cell.region)];
    return counts;
}

FrontierGrid compute_frontier(const Dataset& dataset, const FrontierConfig& config,
                              std::span<const std::size_t> subgroup) {
    config.validate();
    const NuisanceEstimates nuisances = cross_fit(dataset, config.cross_fit_config());
    return compute_frontier(dataset, nuisances, config, subgroup);
}

FrontierGrid compute_frontier(const Dataset& dataset, const NuisanceEstimates& nuisances,
                              const FrontierConfig& config, std::span<const std::size_t> subgroup) {
    config.validate();
    if (nuisances.size() != dataset.size())
        throw Error(ErrorCode::DimensionMismatch, "nuisance estimates do not match the dataset");
    const std::vector<std::size_t> everyone = subgroup.empty() ? all_indices(dataset.size())
                                                               : std::vector<std::size_t>{};
    const std::span<const std::size_t> members = subgroup.empty() ? std::span<const std::size_t>(everyone) : subgroup;

    std::optional<BootstrapEnsemble> ensemble;
    if (config.variance_method == VarianceMethod::Bootstrap)
        ensemble = build_bootstrap_ensemble(dataset, config.cross_fit_config(), config.bootstrap_b,
                                            derive_seed(config.seed, {stream::bootstrap}), config.threads);

    const auto grid = build_grid(config);
    FrontierGrid out;
    out.config = config;
    out.dataset_fingerprint = dataset.fingerprint();
    out.nuisance_fingerprint = nuisances.fingerprint();
    out.nuisance_folds = nuisances.folds;
    out.subgroup_size = members.size();
    out.significance_threshold =
        config.compat_mode == CompatMode::CorrectedLeftTail ? 1.0 - config.confidence : config.confidence;
    out.cells.resize(grid.size());

    parallel_for(grid.size(), config.threads, [&](std::size_t index) {
        FrontierCell& cell = out.cells[index];
        cell.rho = grid[index].first;
        cell.gamma = grid[index].second;
        const SensitivityPair pair{cell.rho, cell.gamma, config.alpha};

        CompatConfig cc;
        cc.r = config.r_compat;
        cc.seed = derive_seed(config.seed, {stream::frontier_cell, index});
        cc.confidence = config.confidence;
        cc.mode = config.compat_mode;
        const auto [arm0, arm1] = compat_both_arms(nuisances, pair, cc, members);
        cell.p_compat_t0 = arm0.p_value;
        cell.p_compat_t1 = arm1.p_value;
        if (arm0.compatible && arm1.compatible) {
            cell.bound = ensemble ? bootstrap_bounds(dataset, nuisances, *ensemble, pair, members, config.confidence)
                                  : bias_corrected_bounds(dataset, nuisances, pair, members, config.confidence);
        }
        cell.region = classify_cell(cell.bound, arm0, arm1);
    });
    return out;
}

}  // namespace fusion_bounds
