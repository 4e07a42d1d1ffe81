#pragma once

// Domain types shared across the estimation pipeline.

#include <array>
#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

namespace fusion_bounds {

/// One observation: covariates, study indicator (1 = experimental),
/// treatment indicator and a strictly positive outcome.
struct Unit {
    std::vector<double> x;
    int s = 0;
    int t = 0;
    double y = 0.0;

    bool operator==(const Unit&) const = default;
};

/// Maps the columns of a raw numeric table onto (x, s, t, y).
struct ColumnSchema {
    std::vector<std::string> names;
    std::string s_column = "s";
    std::string t_column = "t";
    std::string y_column = "y";
    /// Covariate columns in order; empty means every column that is not s/t/y.
    std::vector<std::string> covariates;
};

struct ValidationOptions {
    bool require_positive_outcome = true;
    /// When set, outcomes are shifted so that min(y) equals this margin.
    std::optional<double> shift_margin;
};

class Dataset {
public:
    Dataset() = default;

    /// Validates and takes ownership. Throws DimensionMismatch, EmptyCell or
    /// NonPositiveOutcome.
    static Dataset from_units(std::vector<Unit> units, std::vector<std::string> covariate_names,
                              const ValidationOptions& options = {});

    std::span<const Unit> units() const noexcept { return units_; }
    const Unit& operator[](std::size_t i) const { return units_[i]; }
    std::size_t size() const noexcept { return units_.size(); }
    std::size_t dim() const noexcept { return covariate_names_.size(); }
    const std::vector<std::string>& covariate_names() const noexcept { return covariate_names_; }

    std::size_t n_exp() const noexcept { return cells_[1][0] + cells_[1][1]; }
    std::size_t n_obs() const noexcept { return cells_[0][0] + cells_[0][1]; }
    std::size_t cell_count(int s, int t) const noexcept { return cells_[s][t]; }

    /// Amount added to every raw outcome at load time (0 when unshifted).
    double outcome_offset() const noexcept { return outcome_offset_; }

    /// Header names in (covariates..., s, t, y) order and the matching rows.
    ColumnSchema schema() const;
    std::vector<std::vector<double>> to_rows() const;

    /// New dataset made of the given unit indices (repeats allowed), validated.
    Dataset resample(std::span<const std::size_t> indices) const;

    /// 64-bit FNV-1a digest of names and the exact bit patterns of all values.
    std::uint64_t fingerprint() const noexcept;

    bool operator==(const Dataset&) const = default;

private:
    friend std::pair<Dataset, double> shift_outcomes(const Dataset& dataset, double margin);

    std::vector<Unit> units_;
    std::vector<std::string> covariate_names_;
    std::array<std::array<std::size_t, 2>, 2> cells_{};
    double outcome_offset_ = 0.0;
};

/// Builds a Dataset from raw numeric rows laid out per `schema`.
Dataset validate_dataset(std::span<const std::vector<double>> rows, const ColumnSchema& schema,
                         const ValidationOptions& options = {});

struct ShiftResult {
    std::vector<double> y;
    double offset = 0.0;  // y' = y + offset
};

/// y' = y - min(y) + margin. Requires margin > 0 and finite outcomes.
ShiftResult shift_outcomes(std::span<const double> y, double margin);

/// Dataset overload; the returned dataset records the cumulative offset.
std::pair<Dataset, double> shift_outcomes(const Dataset& dataset, double margin);

/// Per-unit nuisance predictions for one unit.
struct NuisanceRow {
    double g1 = 0.5;
    double e1_obs = 0.5;  // P(T=1 | x, S=0)
    double e1_exp = 0.5;  // P(T=1 | x, S=1)
    std::array<std::array<double, 2>, 2> mu{};  // mu[s][t] = E[Y | x, s, t]

    double g(int s) const noexcept { return s == 1 ? g1 : 1.0 - g1; }
    /// P(T = t | x, S = s); the t = 0 value is always derived as 1 - e1.
    double e(int t, int s) const noexcept {
        const double e1 = s == 1 ? e1_exp : e1_obs;
        return t == 1 ? e1 : 1.0 - e1;
    }
    double outcome(int s, int t) const noexcept { return mu[s][t]; }
};

struct ModelSummary {
    std::string target;  // "g", "e_s0", "e_s1", "mu_00", ...
    double l2 = 0.0;
    std::vector<double> coefficients;  // intercept first
    bool converged = true;
    int iterations = 0;
};

struct FoldFitSummary {
    int fold = 0;
    std::size_t n_train = 0;
    std::size_t n_held_out = 0;
    std::vector<ModelSummary> models;
};

/// Out-of-fold nuisance predictions for every unit of a dataset.
struct NuisanceEstimates {
    std::vector<double> g1;
    std::vector<double> e1_s0;
    std::vector<double> e1_s1;
    std::array<std::array<std::vector<double>, 2>, 2> mu;
    std::vector<int> fold_id;
    double clip_epsilon = 0.01;
    std::vector<FoldFitSummary> folds;

    std::size_t size() const noexcept { return g1.size(); }
    NuisanceRow row(std::size_t i) const noexcept {
        NuisanceRow r;
        r.g1 = g1[i];
        r.e1_obs = e1_s0[i];
        r.e1_exp = e1_s1[i];
        for (int s = 0; s < 2; ++s)
            for (int t = 0; t < 2; ++t) r.mu[s][t] = mu[s][t][i];
        return r;
    }
    void resize(std::size_t n);
    void set_row(std::size_t i, const NuisanceRow& r) noexcept;

    /// Rows restricted to `indices`, in that order.
    NuisanceEstimates select(std::span<const std::size_t> indices) const;

    /// Digest of every prediction array and the fold assignment.
    std::uint64_t fingerprint() const noexcept;
};

/// Sensitivity parameters plus the Boltzmann scale.
struct SensitivityPair {
    double rho = 0.0;
    double gamma = 0.0;
    double alpha = 10.0;

    /// Throws Precondition unless rho >= 0, gamma >= 0, alpha > 0, all finite.
    void validate() const;
};

struct Interval {
    double lo = 0.0;
    double hi = 0.0;

    bool contains(double v) const noexcept { return lo <= v && v <= hi; }
    bool excludes_zero() const noexcept { return lo > 0.0 || hi < 0.0; }
    double center() const noexcept { return 0.5 * (lo + hi); }
};

enum class VarianceMethod { EifSampleVariance, Bootstrap };

std::string_view variance_method_name(VarianceMethod m) noexcept;

struct BoundEstimate {
    double theta_lb_plugin = 0.0;
    double theta_ub_plugin = 0.0;
    double theta_lb_bc = 0.0;
    double theta_ub_bc = 0.0;
    /// Per-unit EIF variance (EIF method) or replicate variance (bootstrap).
    double var_lb = 0.0;
    double var_ub = 0.0;
    /// Standard errors of the bias-corrected estimates.
    double se_lb = 0.0;
    double se_ub = 0.0;
    Interval ci_lb;
    Interval ci_ub;
    double confidence = 0.95;
    std::size_t n_effective = 0;
    VarianceMethod variance_method = VarianceMethod::EifSampleVariance;
    /// Units where b(t,-rho,-gamma,alpha) > b(t,rho,gamma,-alpha) for some t.
    std::size_t ordering_violations = 0;
    std::size_t bootstrap_replicates = 0;
};

enum class Region { Conclusive, Tentative, Inconclusive, Incompatible };

std::string_view region_name(Region r) noexcept;

struct FrontierCell {
    double rho = 0.0;
    double gamma = 0.0;
    Region region = Region::Inconclusive;
    std::optional<BoundEstimate> bound;
    double p_compat_t0 = 1.0;
    double p_compat_t1 = 1.0;
};

/// Incremental FNV-1a used for dataset and grid fingerprints.
class Fnv1a {
public:
    void add_bytes(const void* data, std::size_t size) noexcept;
    void add(double v) noexcept;
    void add(std::uint64_t v) noexcept;
    void add(std::string_view s) noexcept;
    std::uint64_t value() const noexcept { return hash_; }

private:
    std::uint64_t hash_ = 0xcbf29ce484222325ULL;
};

}  // namespace fusion_bounds
