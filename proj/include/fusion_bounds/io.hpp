#pragma once

// Flat-file persistence: dataset CSVs, subgroup filters, run configuration,
// manifests and JSON/CSV renderings of estimates and frontier grids.

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "json.hpp"

#include "fusion_bounds/compat.hpp"
#include "fusion_bounds/frontier.hpp"
#include "fusion_bounds/model.hpp"
#include "fusion_bounds/simulate.hpp"

namespace fusion_bounds {

/// Shortest round-trip-safe decimal text: %.17g, with "nan"/"inf" spelled out.
std::string format_double(double v);

struct CsvTable {
    std::vector<std::string> names;
    std::vector<std::vector<double>> rows;
    std::size_t dropped_rows = 0;  // rows with empty or NaN fields
};

/// Header required. Throws InvalidCsv on ragged rows or non-numeric fields.
CsvTable parse_csv(std::istream& in);
/// Throws FileNotFound when the file cannot be opened.
CsvTable read_csv(const std::filesystem::path& path);

void write_csv(std::ostream& out, const std::vector<std::string>& names,
               const std::vector<std::vector<double>>& rows);

struct LoadedDataset {
    Dataset dataset;
    std::size_t dropped_rows = 0;
};

LoadedDataset load_dataset(const std::filesystem::path& path, const ColumnSchema& mapping = {},
                           const ValidationOptions& options = {});
/// Writes covariates, then s, t, y. Outcomes are written as stored (shifted
/// values when a shift was applied).
void save_dataset(const std::filesystem::path& path, const Dataset& dataset);

/// Writes u and c columns for oracle tests.
void save_internals(const std::filesystem::path& path, const SimulatedData& data);
/// Reattaches an internals sidecar to a loaded dataset.
SimulatedData attach_internals(Dataset dataset, const std::filesystem::path& internals, const SimConfig& config);

enum class CompareOp { Less, LessEqual, Greater, GreaterEqual, Equal };

struct Condition {
    std::string column;
    CompareOp op = CompareOp::Equal;
    double value = 0.0;
};

/// Conjunction of column comparisons such as "x1>1 && x2<=0.5". Operators:
/// <, <=, >, >=, = (also ==, ≤, ≥); joiners: &&, &, "and". Throws InvalidConfig.
struct SubgroupFilter {
    std::vector<Condition> conditions;
    std::string expression;

    static SubgroupFilter parse(std::string_view expression);
    bool matches(const Unit& unit, const std::vector<std::string>& covariate_names) const;
};

/// Indices of matching units. Columns may name covariates or s, t, y.
/// Throws InvalidConfig for unknown columns and EmptySubgroup when nothing matches.
std::vector<std::size_t> select_subgroup(const Dataset& dataset, const SubgroupFilter& filter);

/// Everything a CLI run needs; flat JSON keys mirror the long flag names with
/// '-' replaced by '_'.
struct RunConfig {
    std::optional<std::string> input;
    std::optional<std::string> output;
    std::optional<std::string> scenario;
    std::size_t n = 2500;
    double beta = 0.4;
    double tau = 5.0;
    double rho = 0.0;
    double gamma = 0.0;
    /// Seed, alpha, folds, confidence, grid, compat and variance settings.
    FrontierConfig frontier;
    std::optional<std::string> subgroup;
    std::optional<double> shift_outcomes;
    std::string s_column = "s";
    std::string t_column = "t";
    std::string y_column = "y";
    std::vector<std::string> covariates;
};

nlohmann::ordered_json run_config_to_json(const RunConfig& config);
/// Applies the keys present in `j` on top of `config`. Accepts either a flat
/// config object or a manifest whose "config" member holds one.
void apply_run_config_json(RunConfig& config, const nlohmann::json& j);
/// Throws FileNotFound or InvalidConfig.
nlohmann::json read_json_file(const std::filesystem::path& path);

nlohmann::ordered_json bound_estimate_to_json(const BoundEstimate& est);
nlohmann::ordered_json compat_result_to_json(const CompatResult& result);
nlohmann::ordered_json nuisance_summary_to_json(const NuisanceEstimates& nuisances);
nlohmann::ordered_json frontier_config_to_json(const FrontierConfig& config);
std::string fingerprint_hex(std::uint64_t fp);

/// Grid CSV: rho,gamma,region,theta_lb,theta_ub,ci_lb_lo,ci_lb_hi,ci_ub_lo,
/// ci_ub_hi,p_compat_t0,p_compat_t1 with empty fields for skipped bounds.
void write_frontier_csv(std::ostream& out, const FrontierGrid& grid);
nlohmann::ordered_json frontier_to_json(const FrontierGrid& grid);

/// Collects stage timings and seeds for the run manifest.
class RunManifest {
public:
    explicit RunManifest(std::string command);

    void set_config(nlohmann::ordered_json config) { config_ = std::move(config); }
    void set_dataset_fingerprint(std::uint64_t fp) { dataset_fp_ = fp; }
    void add_seed(const std::string& name, std::uint64_t seed) { seeds_[name] = seed; }
    void add_timing(const std::string& stage, double seconds) { timings_.emplace_back(stage, seconds); }
    void add_extra(const std::string& key, nlohmann::ordered_json value) { extra_[key] = std::move(value); }

    nlohmann::ordered_json to_json() const;
    void write(const std::filesystem::path& path) const;

private:
    std::string command_;
    std::string started_at_;
    nlohmann::ordered_json config_ = nlohmann::ordered_json::object();
    std::optional<std::uint64_t> dataset_fp_;
    std::map<std::string, std::uint64_t> seeds_;
    std::vector<std::pair<std::string, double>> timings_;
    nlohmann::ordered_json extra_ = nlohmann::ordered_json::object();
};

inline constexpr std::string_view tool_version = "0.1.0";

}  // namespace fusion_bounds
