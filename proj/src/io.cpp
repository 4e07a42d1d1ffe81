#include "fusion_bounds/io.hpp"

#include <algorithm>
#include <cctype>
#include <charconv>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <ctime>
#include <fstream>
#include <sstream>

#include "fusion_bounds/error.hpp"

namespace fusion_bounds {

using nlohmann::json;
using nlohmann::ordered_json;

std::string format_double(double v) {
    if (std::isnan(v)) return "nan";
    if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

namespace {

std::string_view trim(std::string_view s) {
    while (!s.empty() && std::isspace(static_cast<unsigned char>(s.front()))) s.remove_prefix(1);
    while (!s.empty() && std::isspace(static_cast<unsigned char>(s.back()))) s.remove_suffix(1);
    return s;
}

std::vector<std::string_view> split(std::string_view line, char sep) {
    std::vector<std::string_view> out;
    std::size_t start = 0;
    while (true) {
        const std::size_t pos = line.find(sep, start);
        if (pos == std::string_view::npos) {
            out.push_back(line.substr(start));
            return out;
        }
        out.push_back(line.substr(start, pos - start));
        start = pos + 1;
    }
}

std::string lower(std::string_view s) {
    std::string out(s);
    for (char& c : out) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
    return out;
}

bool is_missing(std::string_view field) {
    if (field.empty()) return true;
    const std::string l = lower(field);
    return l == "na" || l == "nan" || l == "null";
}

std::optional<double> parse_number(std::string_view field) {
    if (!field.empty() && field.front() == '+') field.remove_prefix(1);
    double v = 0.0;
    const auto [ptr, ec] = std::from_chars(field.data(), field.data() + field.size(), v);
    if (ec != std::errc() || ptr != field.data() + field.size()) return std::nullopt;
    return v;
}

}  // namespace

CsvTable parse_csv(std::istream& in) {
    CsvTable table;
    std::string line;
    std::size_t line_no = 0;
    bool have_header = false;
    while (std::getline(in, line)) {
        ++line_no;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (trim(line).empty()) continue;
        const auto fields = split(line, ',');
        if (!have_header) {
            for (auto f : fields) {
                const auto name = trim(f);
                if (name.empty()) throw Error(ErrorCode::InvalidCsv, "empty column name in header");
                table.names.emplace_back(name);
            }
            have_header = true;
            continue;
        }
        if (fields.size() != table.names.size())
            throw Error(ErrorCode::InvalidCsv, "line " + std::to_string(line_no) + " has " +
                                                   std::to_string(fields.size()) + " fields, header has " +
                                                   std::to_string(table.names.size()));
        std::vector<double> row;
        row.reserve(fields.size());
        bool missing = false;
        for (auto f : fields) {
            const auto field = trim(f);
            if (is_missing(field)) {
                missing = true;
                break;
            }
            const auto v = parse_number(field);
            if (!v) throw Error(ErrorCode::InvalidCsv, "line " + std::to_string(line_no) + ": non-numeric field '" +
                                                           std::string(field) + "'");
            row.push_back(*v);
        }
        if (missing) {
            ++table.dropped_rows;
            continue;
        }
        table.rows.push_back(std::move(row));
    }
    if (!have_header) throw Error(ErrorCode::InvalidCsv, "CSV has no header");
    return table;
}

CsvTable read_csv(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw Error(ErrorCode::FileNotFound, "cannot open '" + path.string() + "'");
    return parse_csv(in);
}

void write_csv(std::ostream& out, const std::vector<std::string>& names,
               const std::vector<std::vector<double>>& rows) {
    for (std::size_t j = 0; j < names.size(); ++j) out << (j ? "," : "") << names[j];
    out << '\n';
    for (const auto& row : rows) {
        for (std::size_t j = 0; j < row.size(); ++j) out << (j ? "," : "") << format_double(row[j]);
        out << '\n';
    }
}

namespace {

std::ofstream open_output(const std::filesystem::path& path) {
    if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
    std::ofstream out(path, std::ios::binary);
    if (!out) throw Error(ErrorCode::InvalidConfig, "cannot write '" + path.string() + "'");
    return out;
}

}  // namespace

LoadedDataset load_dataset(const std::filesystem::path& path, const ColumnSchema& mapping,
                           const ValidationOptions& options) {
    CsvTable table = read_csv(path);
    if (table.rows.empty()) throw Error(ErrorCode::InvalidCsv, "'" + path.string() + "' has no complete rows");
    ColumnSchema schema = mapping;
    schema.names = table.names;
    LoadedDataset out;
    out.dataset = validate_dataset(table.rows, schema, options);
    out.dropped_rows = table.dropped_rows;
    return out;
}

void save_dataset(const std::filesystem::path& path, const Dataset& dataset) {
    auto out = open_output(path);
    write_csv(out, dataset.schema().names, dataset.to_rows());
}

void save_internals(const std::filesystem::path& path, const SimulatedData& data) {
    std::vector<std::vector<double>> rows(data.u.size());
    for (std::size_t i = 0; i < rows.size(); ++i) rows[i] = {data.u[i], data.c[i]};
    auto out = open_output(path);
    write_csv(out, {"u", "c"}, rows);
}

SimulatedData attach_internals(Dataset dataset, const std::filesystem::path& internals, const SimConfig& config) {
    const CsvTable table = read_csv(internals);
    const auto col = [&](const std::string& name) {
        const auto it = std::find(table.names.begin(), table.names.end(), name);
        if (it == table.names.end()) throw Error(ErrorCode::InternalsUnavailable, "internals file lacks column " + name);
        return static_cast<std::size_t>(it - table.names.begin());
    };
    const std::size_t ju = col("u");
    const std::size_t jc = col("c");
    if (table.rows.size() != dataset.size())
        throw Error(ErrorCode::InternalsUnavailable, "internals file does not match the dataset size");
    SimulatedData data;
    data.config = config;
    data.config.n = dataset.size();
    for (const auto& row : table.rows) {
        data.u.push_back(row[ju]);
        data.c.push_back(row[jc]);
    }
    data.dataset = std::move(dataset);
    return data;
}

SubgroupFilter SubgroupFilter::parse(std::string_view expression) {
    std::string text(expression);
    const auto replace_all = [&](const std::string& from, const std::string& to) {
        for (std::size_t pos = text.find(from); pos != std::string::npos; pos = text.find(from, pos + to.size()))
            text.replace(pos, from.size(), to);
    };
    replace_all("≤", "<=");
    replace_all("≥", ">=");
    replace_all("&&", "&");

    // Split on '&' and on the standalone word "and".
    std::vector<std::string> parts;
    std::string current;
    for (std::size_t i = 0; i < text.size(); ++i) {
        if (text[i] == '&') {
            parts.push_back(current);
            current.clear();
            continue;
        }
        const bool boundary_before = i == 0 || std::isspace(static_cast<unsigned char>(text[i - 1]));
        if (boundary_before && i + 3 <= text.size() && lower(text.substr(i, 3)) == "and" &&
            (i + 3 == text.size() || std::isspace(static_cast<unsigned char>(text[i + 3])))) {
            parts.push_back(current);
            current.clear();
            i += 2;
            continue;
        }
        current.push_back(text[i]);
    }
    parts.push_back(current);

    SubgroupFilter filter;
    filter.expression = std::string(expression);
    for (const auto& raw : parts) {
        const std::string_view part = trim(raw);
        const auto bad = [&](const std::string& why) {
            return Error(ErrorCode::InvalidConfig, "subgroup filter '" + std::string(expression) + "': " + why);
        };
        if (part.empty()) throw bad("empty condition");
        const std::size_t pos = part.find_first_of("<>=");
        if (pos == std::string_view::npos) throw bad("no comparison operator in '" + std::string(part) + "'");
        std::size_t len = 1;
        Condition cond;
        const char c0 = part[pos];
        const bool eq_next = pos + 1 < part.size() && part[pos + 1] == '=';
        if (c0 == '<') {
            cond.op = eq_next ? CompareOp::LessEqual : CompareOp::Less;
            len += eq_next;
        } else if (c0 == '>') {
            cond.op = eq_next ? CompareOp::GreaterEqual : CompareOp::Greater;
            len += eq_next;
        } else {
            cond.op = CompareOp::Equal;
            len += eq_next;
        }
        cond.column = std::string(trim(part.substr(0, pos)));
        const auto value = parse_number(trim(part.substr(pos + len)));
        if (cond.column.empty()) throw bad("missing column name");
        if (!value) throw bad("constant in '" + std::string(part) + "' is not a number");
        cond.value = *value;
        filter.conditions.push_back(std::move(cond));
    }
    return filter;
}

namespace {

double column_value(const Unit& unit, const std::string& column, const std::vector<std::string>& names) {
    const auto it = std::find(names.begin(), names.end(), column);
    if (it != names.end()) return unit.x[static_cast<std::size_t>(it - names.begin())];
    if (column == "s") return unit.s;
    if (column == "t") return unit.t;
    if (column == "y") return unit.y;
    throw Error(ErrorCode::InvalidConfig, "subgroup filter references unknown column '" + column + "'");
}

bool compare(double lhs, CompareOp op, double rhs) {
    switch (op) {
        case CompareOp::Less: return lhs < rhs;
        case CompareOp::LessEqual: return lhs <= rhs;
        case CompareOp::Greater: return lhs > rhs;
        case CompareOp::GreaterEqual: return lhs >= rhs;
        case CompareOp::Equal: return lhs == rhs;
    }
    return false;
}

}  // namespace

bool SubgroupFilter::matches(const Unit& unit, const std::vector<std::string>& covariate_names) const {
    for (const auto& cond : conditions)
        if (!compare(column_value(unit, cond.column, covariate_names), cond.op, cond.value)) return false;
    return true;
}

std::vector<std::size_t> select_subgroup(const Dataset& dataset, const SubgroupFilter& filter) {
    std::vector<std::size_t> out;
    for (std::size_t i = 0; i < dataset.size(); ++i)
        if (filter.matches(dataset[i], dataset.covariate_names())) out.push_back(i);
    if (out.empty()) throw Error(ErrorCode::EmptySubgroup, "subgroup '" + filter.expression + "' selects no units");
    return out;
}

namespace {

std::string variance_flag(VarianceMethod m) { return m == VarianceMethod::Bootstrap ? "bootstrap" : "eif"; }
std::string compat_flag(CompatMode m) { return m == CompatMode::PaperLiteral ? "paper" : "corrected"; }

template <class T>
T get_as(const json& j, const char* key) {
    try {
        return j.get<T>();
    } catch (const json::exception&) {
        throw Error(ErrorCode::InvalidConfig, std::string("config key '") + key + "' has the wrong type");
    }
}

}  // namespace

ordered_json frontier_config_to_json(const FrontierConfig& c) {
    ordered_json j;
    j["seed"] = c.seed;
    j["alpha"] = c.alpha;
    j["k_folds"] = c.k;
    j["confidence"] = c.confidence;
    j["grid_n"] = c.grid_n;
    j["rho_max"] = c.rho_max;
    j["gamma_max"] = c.gamma_max;
    j["r_compat"] = c.r_compat;
    j["variance"] = variance_flag(c.variance_method);
    j["bootstrap_b"] = c.bootstrap_b;
    j["compat_mode"] = compat_flag(c.compat_mode);
    j["l2_grid"] = c.l2_grid;
    j["clip_epsilon"] = c.clip_epsilon;
    j["known_exp_propensity"] = c.known_exp_propensity ? json(*c.known_exp_propensity) : json(nullptr);
    j["threads"] = c.threads;
    return j;
}

ordered_json run_config_to_json(const RunConfig& c) {
    const auto opt_str = [](const std::optional<std::string>& s) { return s ? json(*s) : json(nullptr); };
    ordered_json j;
    j["input"] = opt_str(c.input);
    j["output"] = opt_str(c.output);
    j["scenario"] = opt_str(c.scenario);
    j["n"] = c.n;
    j["beta"] = c.beta;
    j["tau"] = c.tau;
    j["rho"] = c.rho;
    j["gamma"] = c.gamma;
    const ordered_json fj = frontier_config_to_json(c.frontier);
    for (const auto& [key, value] : fj.items()) j[key] = value;
    j["subgroup"] = opt_str(c.subgroup);
    j["shift_outcomes"] = c.shift_outcomes ? json(*c.shift_outcomes) : json(nullptr);
    j["s_column"] = c.s_column;
    j["t_column"] = c.t_column;
    j["y_column"] = c.y_column;
    j["covariates"] = c.covariates;
    return j;
}

void apply_run_config_json(RunConfig& c, const json& input) {
    if (!input.is_object()) throw Error(ErrorCode::InvalidConfig, "config must be a JSON object");
    const json& j = input.contains("config") && input["config"].is_object() ? input["config"] : input;
    for (const auto& [key, v] : j.items()) {
        const char* k = key.c_str();
        const auto opt_string = [&](std::optional<std::string>& field) {
            if (v.is_null()) field.reset();
            else field = get_as<std::string>(v, k);
        };
        if (key == "input") opt_string(c.input);
        else if (key == "output") opt_string(c.output);
        else if (key == "scenario") opt_string(c.scenario);
        else if (key == "subgroup") opt_string(c.subgroup);
        else if (key == "n") c.n = get_as<std::size_t>(v, k);
        else if (key == "beta") c.beta = get_as<double>(v, k);
        else if (key == "tau") c.tau = get_as<double>(v, k);
        else if (key == "rho") c.rho = get_as<double>(v, k);
        else if (key == "gamma") c.gamma = get_as<double>(v, k);
        else if (key == "seed") c.frontier.seed = get_as<std::uint64_t>(v, k);
        else if (key == "alpha") c.frontier.alpha = get_as<double>(v, k);
        else if (key == "k_folds") c.frontier.k = get_as<int>(v, k);
        else if (key == "confidence") c.frontier.confidence = get_as<double>(v, k);
        else if (key == "grid_n") c.frontier.grid_n = get_as<int>(v, k);
        else if (key == "rho_max") c.frontier.rho_max = get_as<double>(v, k);
        else if (key == "gamma_max") c.frontier.gamma_max = get_as<double>(v, k);
        else if (key == "r_compat") c.frontier.r_compat = get_as<int>(v, k);
        else if (key == "bootstrap_b") c.frontier.bootstrap_b = get_as<int>(v, k);
        else if (key == "clip_epsilon") c.frontier.clip_epsilon = get_as<double>(v, k);
        else if (key == "threads") c.frontier.threads = get_as<int>(v, k);
        else if (key == "l2_grid") c.frontier.l2_grid = get_as<std::vector<double>>(v, k);
        else if (key == "covariates") c.covariates = get_as<std::vector<std::string>>(v, k);
        else if (key == "s_column") c.s_column = get_as<std::string>(v, k);
        else if (key == "t_column") c.t_column = get_as<std::string>(v, k);
        else if (key == "y_column") c.y_column = get_as<std::string>(v, k);
        else if (key == "shift_outcomes") {
            if (v.is_null()) c.shift_outcomes.reset();
            else c.shift_outcomes = get_as<double>(v, k);
        } else if (key == "known_exp_propensity") {
            if (v.is_null()) c.frontier.known_exp_propensity.reset();
            else c.frontier.known_exp_propensity = get_as<double>(v, k);
        } else if (key == "variance") {
            const auto s = get_as<std::string>(v, k);
            if (s == "eif") c.frontier.variance_method = VarianceMethod::EifSampleVariance;
            else if (s == "bootstrap") c.frontier.variance_method = VarianceMethod::Bootstrap;
            else throw Error(ErrorCode::InvalidConfig, "variance must be 'eif' or 'bootstrap'");
        } else if (key == "compat_mode") {
            const auto s = get_as<std::string>(v, k);
            if (s == "corrected") c.frontier.compat_mode = CompatMode::CorrectedLeftTail;
            else if (s == "paper") c.frontier.compat_mode = CompatMode::PaperLiteral;
            else throw Error(ErrorCode::InvalidConfig, "compat_mode must be 'corrected' or 'paper'");
        } else {
            throw Error(ErrorCode::InvalidConfig, "unknown config key '" + key + "'");
        }
    }
}

json read_json_file(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw Error(ErrorCode::FileNotFound, "cannot open '" + path.string() + "'");
    try {
        return json::parse(in);
    } catch (const json::exception& e) {
        throw Error(ErrorCode::InvalidConfig, "'" + path.string() + "' is not valid JSON: " + e.what());
    }
}

std::string fingerprint_hex(std::uint64_t fp) {
    char buf[19];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(fp));
    return buf;
}

namespace {

ordered_json interval_json(const Interval& iv) { return ordered_json::array({iv.lo, iv.hi}); }

}  // namespace

ordered_json bound_estimate_to_json(const BoundEstimate& e) {
    ordered_json j;
    j["theta_lb_plugin"] = e.theta_lb_plugin;
    j["theta_ub_plugin"] = e.theta_ub_plugin;
    j["theta_lb_bc"] = e.theta_lb_bc;
    j["theta_ub_bc"] = e.theta_ub_bc;
    j["var_lb"] = e.var_lb;
    j["var_ub"] = e.var_ub;
    j["se_lb"] = e.se_lb;
    j["se_ub"] = e.se_ub;
    j["ci_lb"] = interval_json(e.ci_lb);
    j["ci_ub"] = interval_json(e.ci_ub);
    j["confidence"] = e.confidence;
    j["n_effective"] = e.n_effective;
    j["variance_method"] = variance_method_name(e.variance_method);
    j["ordering_violations"] = e.ordering_violations;
    if (e.variance_method == VarianceMethod::Bootstrap) j["bootstrap_replicates"] = e.bootstrap_replicates;
    return j;
}

ordered_json compat_result_to_json(const CompatResult& r) {
    ordered_json j;
    j["t"] = r.t;
    j["p_value"] = r.p_value;
    j["t_obs"] = r.t_obs;
    j["r"] = r.r;
    j["decision_threshold"] = r.decision_threshold;
    j["compatible"] = r.compatible;
    j["formula_mode"] = compat_mode_name(r.formula_mode);
    return j;
}

ordered_json nuisance_summary_to_json(const NuisanceEstimates& nuisances) {
    ordered_json j;
    j["fingerprint"] = fingerprint_hex(nuisances.fingerprint());
    j["clip_epsilon"] = nuisances.clip_epsilon;
    ordered_json folds = ordered_json::array();
    for (const auto& f : nuisances.folds) {
        ordered_json fj;
        fj["fold"] = f.fold;
        fj["n_train"] = f.n_train;
        fj["n_held_out"] = f.n_held_out;
        ordered_json models = ordered_json::array();
        for (const auto& m : f.models) {
            ordered_json mj;
            mj["target"] = m.target;
            mj["l2"] = m.l2;
            mj["coefficients"] = m.coefficients;
            mj["converged"] = m.converged;
            mj["iterations"] = m.iterations;
            models.push_back(std::move(mj));
        }
        fj["models"] = std::move(models);
        folds.push_back(std::move(fj));
    }
    j["folds"] = std::move(folds);
    return j;
}

void write_frontier_csv(std::ostream& out, const FrontierGrid& grid) {
    out << "rho,gamma,region,theta_lb,theta_ub,ci_lb_lo,ci_lb_hi,ci_ub_lo,ci_ub_hi,p_compat_t0,p_compat_t1\n";
    for (const auto& cell : grid.cells) {
        out << format_double(cell.rho) << ',' << format_double(cell.gamma) << ',' << region_name(cell.region);
        if (cell.bound) {
            const auto& b = *cell.bound;
            for (double v : {b.theta_lb_bc, b.theta_ub_bc, b.ci_lb.lo, b.ci_lb.hi, b.ci_ub.lo, b.ci_ub.hi})
                out << ',' << format_double(v);
        } else {
            out << ",,,,,,";
        }
        out << ',' << format_double(cell.p_compat_t0) << ',' << format_double(cell.p_compat_t1) << '\n';
    }
}

ordered_json frontier_to_json(const FrontierGrid& grid) {
    ordered_json j;
    j["config"] = frontier_config_to_json(grid.config);
    j["dataset_fingerprint"] = fingerprint_hex(grid.dataset_fingerprint);
    j["nuisance_fingerprint"] = fingerprint_hex(grid.nuisance_fingerprint);
    j["subgroup_size"] = grid.subgroup_size;
    j["significance_threshold"] = grid.significance_threshold;
    const auto counts = grid.region_counts();
    ordered_json cj;
    for (int r = 0; r < 4; ++r) cj[std::string(region_name(static_cast<Region>(r)))] = counts[r];
    j["region_counts"] = std::move(cj);
    ordered_json cells = ordered_json::array();
    for (const auto& cell : grid.cells) {
        ordered_json c;
        c["rho"] = cell.rho;
        c["gamma"] = cell.gamma;
        c["region"] = region_name(cell.region);
        if (cell.bound) {
            c["theta_lb"] = cell.bound->theta_lb_bc;
            c["theta_ub"] = cell.bound->theta_ub_bc;
            c["ci_lb"] = interval_json(cell.bound->ci_lb);
            c["ci_ub"] = interval_json(cell.bound->ci_ub);
        } else {
            c["theta_lb"] = nullptr;
            c["theta_ub"] = nullptr;
            c["ci_lb"] = nullptr;
            c["ci_ub"] = nullptr;
        }
        c["p_compat_t0"] = cell.p_compat_t0;
        c["p_compat_t1"] = cell.p_compat_t1;
        cells.push_back(std::move(c));
    }
    j["cells"] = std::move(cells);
    return j;
}

RunManifest::RunManifest(std::string command) : command_(std::move(command)) {
    const std::time_t now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
    std::tm utc{};
    gmtime_r(&now, &utc);
    char buf[32];
    std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &utc);
    started_at_ = buf;
}

ordered_json RunManifest::to_json() const {
    ordered_json j;
    j["tool"] = "fusion-bounds";
    j["version"] = tool_version;
    j["command"] = command_;
    j["started_at"] = started_at_;
    j["config"] = config_;
    j["dataset_fingerprint"] = dataset_fp_ ? json(fingerprint_hex(*dataset_fp_)) : json(nullptr);
    ordered_json seeds = ordered_json::object();
    for (const auto& [name, seed] : seeds_) seeds[name] = seed;
    j["seeds"] = std::move(seeds);
    ordered_json timings = ordered_json::object();
    double total = 0.0;
    for (const auto& [stage, secs] : timings_) {
        timings[stage] = secs;
        total += secs;
    }
    timings["total"] = total;
    j["timings_seconds"] = std::move(timings);
    for (const auto& [key, value] : extra_.items()) j[key] = value;
    return j;
}

void RunManifest::write(const std::filesystem::path& path) const {
    auto out = open_output(path);
    out << to_json().dump(2) << '\n';
}

}  // namespace fusion_bounds
