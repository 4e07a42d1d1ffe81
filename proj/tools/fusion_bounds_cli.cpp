// Command-line front end: simulate, bounds, frontier, compat.

#include <chrono>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"

#include "fusion_bounds/bounds.hpp"
#include "fusion_bounds/compat.hpp"
#include "fusion_bounds/error.hpp"
#include "fusion_bounds/frontier.hpp"
#include "fusion_bounds/io.hpp"
#include "fusion_bounds/nuisance.hpp"
#include "fusion_bounds/random.hpp"
#include "fusion_bounds/simulate.hpp"

namespace fs = std::filesystem;
using namespace fusion_bounds;
using nlohmann::ordered_json;

namespace {

int exit_code(ErrorCode code) {
    switch (code) {
        case ErrorCode::UnknownScenario:
        case ErrorCode::FileNotFound:
        case ErrorCode::RTooSmall: return 2;
        case ErrorCode::Precondition: return 3;
        case ErrorCode::InvalidConfig: return 4;
        case ErrorCode::InvalidCsv: return 5;
        case ErrorCode::DimensionMismatch: return 6;
        case ErrorCode::NonPositiveOutcome: return 7;
        case ErrorCode::EmptyCell: return 8;
        case ErrorCode::EmptySubgroup: return 9;
        case ErrorCode::EmptyTrainingCell: return 10;
        case ErrorCode::SingularSystem: return 11;
        case ErrorCode::DegenerateDraw: return 12;
        case ErrorCode::InternalsUnavailable: return 13;
        case ErrorCode::BootstrapExhausted: return 14;
    }
    return 1;
}

int report_error(std::string_view code, const std::string& message, int status) {
    ordered_json j;
    j["error"] = code;
    j["message"] = message;
    j["exit_code"] = status;
    std::cerr << j.dump() << '\n';
    std::cout << "error: " << message << '\n';
    return status;
}

class Stopwatch {
public:
    double lap() {
        const auto now = std::chrono::steady_clock::now();
        const double s = std::chrono::duration<double>(now - last_).count();
        last_ = now;
        return s;
    }

private:
    std::chrono::steady_clock::time_point last_ = std::chrono::steady_clock::now();
};

// Raw flag values. Only flags the user actually passed override the config
// file, which in turn overrides built-in defaults.
struct Flags {
    std::string config_path;
    std::string input;
    std::string output;
    std::string scenario;
    std::string subgroup;
    std::string variance;
    std::string compat_mode;
    std::string audit_path;
    std::string nuisance_dump;
    std::string internals_path;
    double rho = 0.0;
    double gamma = 0.0;
    double alpha = 10.0;
    double confidence = 0.95;
    double rho_max = 0.2;
    double gamma_max = 0.2;
    double beta = 0.4;
    double tau = 5.0;
    double shift_margin = 1.0;
    double known_exp_propensity = 0.5;
    int k_folds = 2;
    int grid_n = 50;
    int r_compat = 100;
    int bootstrap_b = 50;
    int threads = 1;
    std::size_t n = 2500;
    std::uint64_t seed = 0;
    bool with_internals = false;
    bool both_modes = false;

    std::map<std::string, CLI::Option*> opts;

    bool given(const std::string& name) const {
        const auto it = opts.find(name);
        return it != opts.end() && it->second->count() > 0;
    }
};

void add_common(CLI::App& cmd, Flags& f) {
    f.opts["config"] = cmd.add_option("--config", f.config_path, "Flat JSON config or a previous run manifest");
    f.opts["seed"] = cmd.add_option("--seed", f.seed, "Master seed (falls back to FUSION_BOUNDS_SEED)");
    f.opts["threads"] = cmd.add_option("--threads", f.threads, "Worker threads")->check(CLI::PositiveNumber);
}

void add_data_source(CLI::App& cmd, Flags& f) {
    f.opts["input"] = cmd.add_option("-i,--input", f.input, "Dataset CSV (covariates, s, t, y)");
    f.opts["scenario"] = cmd.add_option("--scenario", f.scenario, "Simulate a named scenario instead of reading CSV");
    f.opts["n"] = cmd.add_option("--n", f.n, "Sample size for --scenario");
    f.opts["shift"] = cmd.add_option("--shift-outcomes", f.shift_margin, "Shift outcomes so that min(y) equals MARGIN")
                          ->expected(0, 1)
                          ->default_str("1.0");
    f.opts["subgroup"] = cmd.add_option("--subgroup", f.subgroup, "Conjunction filter, e.g. \"x1>1 && x2<=0\"");
}

void add_estimation(CLI::App& cmd, Flags& f) {
    f.opts["alpha"] = cmd.add_option("--alpha", f.alpha, "Boltzmann smoothing scale");
    f.opts["k"] = cmd.add_option("--k-folds", f.k_folds, "Cross-fitting folds");
    f.opts["confidence"] = cmd.add_option("--confidence", f.confidence, "Confidence level c");
    f.opts["known_e"] = cmd.add_option("--known-exp-propensity", f.known_exp_propensity,
                                       "Fix P(T=1 | x, S=1) instead of estimating it");
    f.opts["nuisance_dump"] = cmd.add_option("--nuisance-dump", f.nuisance_dump, "Write per-fold model diagnostics JSON");
}

void add_variance(CLI::App& cmd, Flags& f) {
    f.opts["variance"] =
        cmd.add_option("--variance", f.variance, "CI variance method")->check(CLI::IsMember({"eif", "bootstrap"}));
    f.opts["bootstrap_b"] = cmd.add_option("--bootstrap-b", f.bootstrap_b, "Bootstrap replicates");
}

void add_compat(CLI::App& cmd, Flags& f) {
    f.opts["r_compat"] = cmd.add_option("--r-compat,--r", f.r_compat, "Compatibility-test resamples (>= 100)");
    f.opts["compat_mode"] = cmd.add_option("--compat-mode", f.compat_mode, "p-value formula")
                                ->check(CLI::IsMember({"corrected", "paper"}));
}

void add_pair(CLI::App& cmd, Flags& f) {
    f.opts["rho"] = cmd.add_option("--rho", f.rho, "Observational confounding level rho >= 0");
    f.opts["gamma"] = cmd.add_option("--gamma", f.gamma, "Experimental non-exchangeability level gamma >= 0");
}

std::uint64_t env_seed() {
    const char* raw = std::getenv("FUSION_BOUNDS_SEED");
    if (!raw || !*raw) return 0;
    try {
        std::size_t used = 0;
        const auto v = std::stoull(raw, &used);
        if (used != std::string(raw).size()) throw std::invalid_argument("trailing characters");
        return v;
    } catch (const std::exception&) {
        throw Error(ErrorCode::InvalidConfig, std::string("FUSION_BOUNDS_SEED is not an unsigned integer: ") + raw);
    }
}

// Defaults, then environment seed, then config file, then explicit flags.
RunConfig resolve_config(const Flags& f) {
    RunConfig c;
    c.frontier.seed = env_seed();
    if (f.given("config")) apply_run_config_json(c, read_json_file(f.config_path));
    if (f.given("input")) c.input = f.input;
    if (f.given("scenario")) c.scenario = f.scenario;
    if (f.given("n")) c.n = f.n;
    if (f.given("shift")) c.shift_outcomes = f.shift_margin;
    if (f.given("subgroup")) c.subgroup = f.subgroup;
    if (f.given("rho")) c.rho = f.rho;
    if (f.given("gamma")) c.gamma = f.gamma;
    if (f.given("beta")) c.beta = f.beta;
    if (f.given("tau")) c.tau = f.tau;
    if (f.given("seed")) c.frontier.seed = f.seed;
    if (f.given("threads")) c.frontier.threads = f.threads;
    if (f.given("alpha")) c.frontier.alpha = f.alpha;
    if (f.given("k")) c.frontier.k = f.k_folds;
    if (f.given("confidence")) c.frontier.confidence = f.confidence;
    if (f.given("known_e")) c.frontier.known_exp_propensity = f.known_exp_propensity;
    if (f.given("grid_n")) c.frontier.grid_n = f.grid_n;
    if (f.given("rho_max")) c.frontier.rho_max = f.rho_max;
    if (f.given("gamma_max")) c.frontier.gamma_max = f.gamma_max;
    if (f.given("r_compat")) c.frontier.r_compat = f.r_compat;
    if (f.given("bootstrap_b")) c.frontier.bootstrap_b = f.bootstrap_b;
    if (f.given("variance"))
        c.frontier.variance_method = f.variance == "bootstrap" ? VarianceMethod::Bootstrap : VarianceMethod::EifSampleVariance;
    if (f.given("compat_mode"))
        c.frontier.compat_mode = f.compat_mode == "paper" ? CompatMode::PaperLiteral : CompatMode::CorrectedLeftTail;
    if (f.given("output")) c.output = f.output;
    return c;
}

SimConfig sim_config(const RunConfig& c, const Flags& f) {
    SimConfig sim;
    sim.n = c.n;
    sim.beta = c.beta;
    sim.tau = c.tau;
    sim.seed = c.frontier.seed;
    if (c.scenario) {
        // A scenario fixes (beta, tau) unless those were passed explicitly.
        const Scenario sc = scenario(*c.scenario, c.n, c.frontier.seed);
        if (!f.given("beta")) sim.beta = sc.config.beta;
        if (!f.given("tau")) sim.tau = sc.config.tau;
    }
    return sim;
}

struct LoadedInput {
    Dataset dataset;
    std::vector<std::size_t> subgroup;
    std::size_t dropped_rows = 0;
    std::optional<SimConfig> simulated;
};

LoadedInput load_input(RunConfig& c, const Flags& f) {
    if (c.input.has_value() == c.scenario.has_value())
        throw Error(ErrorCode::InvalidConfig, "give exactly one of --input or --scenario");
    ValidationOptions options;
    options.shift_margin = c.shift_outcomes;
    LoadedInput out;
    if (c.input) {
        ColumnSchema mapping;
        mapping.s_column = c.s_column;
        mapping.t_column = c.t_column;
        mapping.y_column = c.y_column;
        mapping.covariates = c.covariates;
        LoadedDataset loaded = load_dataset(*c.input, mapping, options);
        out.dataset = std::move(loaded.dataset);
        out.dropped_rows = loaded.dropped_rows;
    } else {
        const SimConfig sim = sim_config(c, f);
        c.beta = sim.beta;
        c.tau = sim.tau;
        SimulatedData data = simulate_dataset(sim);
        out.dataset = c.shift_outcomes ? shift_outcomes(data.dataset, *c.shift_outcomes).first : std::move(data.dataset);
        out.simulated = sim;
    }
    out.subgroup = c.subgroup ? select_subgroup(out.dataset, SubgroupFilter::parse(*c.subgroup))
                              : all_indices(out.dataset.size());
    return out;
}

void note_input(RunManifest& manifest, const LoadedInput& in) {
    manifest.set_dataset_fingerprint(in.dataset.fingerprint());
    ordered_json d;
    d["n"] = in.dataset.size();
    d["n_exp"] = in.dataset.n_exp();
    d["n_obs"] = in.dataset.n_obs();
    d["cells"] = {{"s0_t0", in.dataset.cell_count(0, 0)}, {"s0_t1", in.dataset.cell_count(0, 1)},
                  {"s1_t0", in.dataset.cell_count(1, 0)}, {"s1_t1", in.dataset.cell_count(1, 1)}};
    d["outcome_offset"] = in.dataset.outcome_offset();
    d["dropped_rows"] = in.dropped_rows;
    d["subgroup_size"] = in.subgroup.size();
    manifest.add_extra("dataset", std::move(d));
}

void write_text(const fs::path& path, const std::string& text) {
    if (path.has_parent_path()) fs::create_directories(path.parent_path());
    std::ofstream out(path, std::ios::binary);
    if (!out) throw Error(ErrorCode::InvalidConfig, "cannot write '" + path.string() + "'");
    out << text;
}

void write_audit(const fs::path& path, const std::vector<UnitAudit>& audit) {
    std::vector<std::string> names{"index"};
    const char* slots[] = {"lb_t1", "lb_t0", "ub_t1", "ub_t0"};
    for (const char* s : slots)
        for (const char* field : {"v", "w", "lambda1", "lambda2", "b", "phi"}) names.push_back(std::string(s) + "_" + field);
    names.push_back("phi_lb");
    names.push_back("phi_ub");
    std::vector<std::vector<double>> rows;
    rows.reserve(audit.size());
    for (const auto& a : audit) {
        std::vector<double> row{static_cast<double>(a.index)};
        for (const auto& c : a.slots) row.insert(row.end(), {c.v, c.w, c.lambda1, c.lambda2, c.b, c.phi_uncentered});
        row.push_back(a.phi_lb);
        row.push_back(a.phi_ub);
        rows.push_back(std::move(row));
    }
    if (path.has_parent_path()) fs::create_directories(path.parent_path());
    std::ofstream out(path, std::ios::binary);
    if (!out) throw Error(ErrorCode::InvalidConfig, "cannot write '" + path.string() + "'");
    write_csv(out, names, rows);
}

int run_simulate(const Flags& f) {
    Stopwatch clock;
    RunConfig c = resolve_config(f);
    if (!c.output) throw Error(ErrorCode::InvalidConfig, "simulate needs -o/--output");
    const SimConfig sim = sim_config(c, f);
    c.beta = sim.beta;
    c.tau = sim.tau;
    SimulatedData data = simulate_dataset(sim);
    const double t_sim = clock.lap();

    const fs::path out_path = *c.output;
    save_dataset(out_path, data.dataset);
    if (f.with_internals) save_internals(f.given("internals") ? fs::path(f.internals_path) : fs::path(out_path.string() + ".internals.csv"), data);
    const double t_write = clock.lap();

    RunManifest manifest("simulate");
    manifest.set_config(run_config_to_json(c));
    manifest.set_dataset_fingerprint(data.dataset.fingerprint());
    manifest.add_seed("simulate", sim.seed);
    manifest.add_timing("simulate", t_sim);
    manifest.add_timing("write", t_write);
    ordered_json meta;
    meta["scenario"] = c.scenario ? ordered_json(*c.scenario) : ordered_json(nullptr);
    meta["beta"] = sim.beta;
    meta["tau"] = sim.tau;
    meta["oracle_ate"] = oracle_ate(sim);
    meta["attempts"] = data.attempts;
    meta["positivity_redraws"] = data.positivity_redraws;
    meta["cell_redraws"] = data.cell_redraws;
    meta["n_exp"] = data.dataset.n_exp();
    meta["n_obs"] = data.dataset.n_obs();
    manifest.add_extra("simulation", std::move(meta));
    manifest.write(out_path.string() + ".manifest.json");

    std::cout << "wrote " << data.dataset.size() << " rows to " << out_path.string() << " (beta=" << sim.beta
              << ", tau=" << sim.tau << ", n_exp=" << data.dataset.n_exp() << ", n_obs=" << data.dataset.n_obs()
              << ")\n";
    return 0;
}

int run_bounds(const Flags& f) {
    Stopwatch clock;
    RunConfig c = resolve_config(f);
    c.frontier.validate();
    LoadedInput in = load_input(c, f);
    const SensitivityPair pair{c.rho, c.gamma, c.frontier.alpha};
    pair.validate();
    const double t_load = clock.lap();

    const CrossFitConfig cf = c.frontier.cross_fit_config();
    const NuisanceEstimates nuisances = cross_fit(in.dataset, cf);
    const double t_fit = clock.lap();

    std::vector<UnitAudit> audit;
    BoundEstimate est;
    if (c.frontier.variance_method == VarianceMethod::Bootstrap) {
        const BootstrapEnsemble ensemble = build_bootstrap_ensemble(
            in.dataset, cf, c.frontier.bootstrap_b, derive_seed(c.frontier.seed, {stream::bootstrap}), c.frontier.threads);
        est = bootstrap_bounds(in.dataset, nuisances, ensemble, pair, in.subgroup, c.frontier.confidence);
    } else {
        est = bias_corrected_bounds(in.dataset, nuisances, pair, in.subgroup, c.frontier.confidence,
                                    f.given("audit") ? &audit : nullptr);
    }
    if (f.given("audit") && audit.empty())
        bias_corrected_bounds(in.dataset, nuisances, pair, in.subgroup, c.frontier.confidence, &audit);
    const PluginBounds hard = hard_ate_bounds(nuisances, pair.rho, pair.gamma, in.subgroup);
    const double t_bounds = clock.lap();

    RunManifest manifest("bounds");
    manifest.set_config(run_config_to_json(c));
    note_input(manifest, in);
    manifest.add_seed("master", c.frontier.seed);
    manifest.add_seed("cross_fit", cf.seed);
    if (c.frontier.variance_method == VarianceMethod::Bootstrap)
        manifest.add_seed("bootstrap", derive_seed(c.frontier.seed, {stream::bootstrap}));
    manifest.add_timing("load", t_load);
    manifest.add_timing("cross_fit", t_fit);
    manifest.add_timing("bounds", t_bounds);
    manifest.add_extra("nuisance_fingerprint", fingerprint_hex(nuisances.fingerprint()));

    ordered_json out;
    out["rho"] = pair.rho;
    out["gamma"] = pair.gamma;
    out["alpha"] = pair.alpha;
    out["estimate"] = bound_estimate_to_json(est);
    out["hard_plugin"] = {{"lb", hard.lb}, {"ub", hard.ub}};
    out["manifest"] = manifest.to_json();

    if (f.given("audit")) write_audit(f.audit_path, audit);
    if (f.given("nuisance_dump")) write_text(f.nuisance_dump, nuisance_summary_to_json(nuisances).dump(2) + "\n");
    if (c.output) {
        write_text(*c.output, out.dump(2) + "\n");
        manifest.write(*c.output + ".manifest.json");
    }
    std::cout << out.dump(2) << '\n';
    return 0;
}

int run_compat(const Flags& f) {
    Stopwatch clock;
    RunConfig c = resolve_config(f);
    c.frontier.validate();
    LoadedInput in = load_input(c, f);
    const SensitivityPair pair{c.rho, c.gamma, c.frontier.alpha};
    pair.validate();
    const NuisanceEstimates nuisances = cross_fit(in.dataset, c.frontier.cross_fit_config());
    const double t_fit = clock.lap();

    CompatConfig cc;
    cc.r = c.frontier.r_compat;
    cc.seed = c.frontier.seed;
    cc.confidence = c.frontier.confidence;
    cc.threads = c.frontier.threads;

    ordered_json out;
    out["rho"] = pair.rho;
    out["gamma"] = pair.gamma;
    const auto run_mode = [&](CompatMode mode) {
        cc.mode = mode;
        const auto [arm0, arm1] = compat_both_arms(nuisances, pair, cc, in.subgroup);
        ordered_json j;
        j["formula_mode"] = compat_mode_name(mode);
        j["arms"] = {compat_result_to_json(arm0), compat_result_to_json(arm1)};
        j["decision"] = arm0.compatible && arm1.compatible ? "compatible" : "incompatible";
        return j;
    };
    if (f.both_modes) {
        out["modes"] = {run_mode(CompatMode::CorrectedLeftTail), run_mode(CompatMode::PaperLiteral)};
    } else {
        const ordered_json j = run_mode(c.frontier.compat_mode);
        for (const auto& [k, v] : j.items()) out[k] = v;
    }
    const double t_test = clock.lap();

    RunManifest manifest("compat");
    manifest.set_config(run_config_to_json(c));
    note_input(manifest, in);
    manifest.add_seed("master", c.frontier.seed);
    manifest.add_seed("compat_t0", derive_seed(cc.seed, {stream::compat, 0}));
    manifest.add_seed("compat_t1", derive_seed(cc.seed, {stream::compat, 1}));
    manifest.add_timing("cross_fit", t_fit);
    manifest.add_timing("compat", t_test);
    out["manifest"] = manifest.to_json();
    if (c.output) {
        write_text(*c.output, out.dump(2) + "\n");
        manifest.write(*c.output + ".manifest.json");
    }
    std::cout << out.dump(2) << '\n';
    return 0;
}

int run_frontier(const Flags& f) {
    Stopwatch clock;
    RunConfig c = resolve_config(f);
    if (!c.output) throw Error(ErrorCode::InvalidConfig, "frontier needs -o/--output (a directory)");
    c.frontier.validate();
    LoadedInput in = load_input(c, f);
    const double t_load = clock.lap();

    const NuisanceEstimates nuisances = cross_fit(in.dataset, c.frontier.cross_fit_config());
    const double t_fit = clock.lap();
    const FrontierGrid grid = compute_frontier(in.dataset, nuisances, c.frontier, in.subgroup);
    const double t_grid = clock.lap();

    const fs::path dir = *c.output;
    fs::create_directories(dir);
    {
        std::ofstream csv(dir / "frontier.csv", std::ios::binary);
        if (!csv) throw Error(ErrorCode::InvalidConfig, "cannot write into '" + dir.string() + "'");
        write_frontier_csv(csv, grid);
    }
    ordered_json gj = frontier_to_json(grid);
    gj["nuisances"] = nuisance_summary_to_json(nuisances);
    write_text(dir / "frontier.json", gj.dump(2) + "\n");

    RunManifest manifest("frontier");
    manifest.set_config(run_config_to_json(c));
    note_input(manifest, in);
    manifest.add_seed("master", c.frontier.seed);
    manifest.add_seed("cross_fit", c.frontier.seed);
    if (c.frontier.variance_method == VarianceMethod::Bootstrap)
        manifest.add_seed("bootstrap", derive_seed(c.frontier.seed, {stream::bootstrap}));
    manifest.add_timing("load", t_load);
    manifest.add_timing("cross_fit", t_fit);
    manifest.add_timing("grid", t_grid);
    manifest.add_extra("nuisance_fingerprint", fingerprint_hex(grid.nuisance_fingerprint));
    manifest.write(dir / "manifest.json");

    const auto counts = grid.region_counts();
    std::cout << "frontier " << c.frontier.grid_n << "x" << c.frontier.grid_n << " (rho<=" << c.frontier.rho_max
              << ", gamma<=" << c.frontier.gamma_max << ") written to " << dir.string() << "\n";
    std::cout << "region        cells  share\n";
    for (int r = 0; r < 4; ++r) {
        char line[64];
        std::snprintf(line, sizeof line, "%-12s %6zu  %5.1f%%\n", std::string(region_name(static_cast<Region>(r))).c_str(),
                      counts[r], 100.0 * counts[r] / grid.cells.size());
        std::cout << line;
    }
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Partial-identification bounds on treatment effects from fused experimental and observational data"};
    app.require_subcommand(1);
    app.set_version_flag("--version", std::string(tool_version));

    Flags f;

    CLI::App* sim = app.add_subcommand("simulate", "Draw a synthetic fused dataset");
    add_common(*sim, f);
    f.opts["scenario"] = sim->add_option("--scenario", f.scenario, "Base, LargerTau, SmallerTau, LargerU or SmallerU");
    f.opts["n"] = sim->add_option("--n", f.n, "Sample size");
    f.opts["beta"] = sim->add_option("--beta", f.beta, "Weight of the unobserved confounder");
    f.opts["tau"] = sim->add_option("--tau", f.tau, "Constant part of the treatment effect");
    f.opts["output"] = sim->add_option("-o,--output", f.output, "Output CSV");
    sim->add_flag("--with-internals", f.with_internals, "Also write the confounder U and C columns");
    f.opts["internals"] = sim->add_option("--internals-output", f.internals_path, "Path for the internals sidecar");

    CLI::App* bounds = app.add_subcommand("bounds", "Bias-corrected ATE/CATE bounds at one (rho, gamma)");
    Flags fb;
    add_common(*bounds, fb);
    add_data_source(*bounds, fb);
    add_estimation(*bounds, fb);
    add_variance(*bounds, fb);
    add_pair(*bounds, fb);
    fb.opts["output"] = bounds->add_option("-o,--output", fb.output, "Also write the JSON result here");
    fb.opts["audit"] = bounds->add_option("--audit", fb.audit_path, "Per-unit slot components CSV");
    fb.opts["beta"] = bounds->add_option("--beta", fb.beta, "Scenario override");
    fb.opts["tau"] = bounds->add_option("--tau", fb.tau, "Scenario override");

    CLI::App* frontier = app.add_subcommand("frontier", "Classify a (rho, gamma) grid into frontier regions");
    Flags ff;
    add_common(*frontier, ff);
    add_data_source(*frontier, ff);
    add_estimation(*frontier, ff);
    add_variance(*frontier, ff);
    add_compat(*frontier, ff);
    ff.opts["output"] = frontier->add_option("-o,--output", ff.output, "Output directory");
    ff.opts["grid_n"] = frontier->add_option("--grid-n", ff.grid_n, "Points per axis");
    ff.opts["rho_max"] = frontier->add_option("--rho-max", ff.rho_max, "Largest rho");
    ff.opts["gamma_max"] = frontier->add_option("--gamma-max", ff.gamma_max, "Largest gamma");
    ff.opts["beta"] = frontier->add_option("--beta", ff.beta, "Scenario override");
    ff.opts["tau"] = frontier->add_option("--tau", ff.tau, "Scenario override");

    CLI::App* compat = app.add_subcommand("compat", "Test whether (rho, gamma) is compatible with the data");
    Flags fc;
    add_common(*compat, fc);
    add_data_source(*compat, fc);
    add_estimation(*compat, fc);
    add_compat(*compat, fc);
    add_pair(*compat, fc);
    fc.opts["output"] = compat->add_option("-o,--output", fc.output, "Also write the JSON result here");
    compat->add_flag("--both-modes", fc.both_modes, "Report corrected and paper-literal p-values");
    fc.opts["beta"] = compat->add_option("--beta", fc.beta, "Scenario override");
    fc.opts["tau"] = compat->add_option("--tau", fc.tau, "Scenario override");

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::CallForAllHelp& e) {
        return app.exit(e);
    } catch (const CLI::CallForVersion& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        return report_error("Usage", e.what(), 2);
    }

    try {
        if (sim->parsed()) return run_simulate(f);
        if (bounds->parsed()) return run_bounds(fb);
        if (frontier->parsed()) return run_frontier(ff);
        if (compat->parsed()) return run_compat(fc);
    } catch (const Error& e) {
        return report_error(error_code_name(e.code()), e.what(), exit_code(e.code()));
    } catch (const std::exception& e) {
        return report_error("Internal", e.what(), 1);
    }
    return 0;
}
