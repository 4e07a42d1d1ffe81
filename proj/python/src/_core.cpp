#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "fusion_bounds/bounds.hpp"
#include "fusion_bounds/compat.hpp"
#include "fusion_bounds/error.hpp"
#include "fusion_bounds/frontier.hpp"
#include "fusion_bounds/io.hpp"
#include "fusion_bounds/nuisance.hpp"
#include "fusion_bounds/random.hpp"
#include "fusion_bounds/simulate.hpp"

namespace py = pybind11;
using namespace fusion_bounds;

namespace {

using Array = py::array_t<double, py::array::c_style | py::array::forcecast>;

Dataset to_dataset(const Array& x, const Array& s, const Array& t, const Array& y,
                   std::optional<std::vector<std::string>> names, std::optional<double> shift) {
    if (x.ndim() != 2) throw Error(ErrorCode::DimensionMismatch, "x must be a 2-D array");
    const auto n = static_cast<std::size_t>(x.shape(0));
    const auto d = static_cast<std::size_t>(x.shape(1));
    if (static_cast<std::size_t>(s.size()) != n || static_cast<std::size_t>(t.size()) != n ||
        static_cast<std::size_t>(y.size()) != n)
        throw Error(ErrorCode::DimensionMismatch, "x, s, t and y must have the same number of rows");
    std::vector<std::string> cov = names.value_or(std::vector<std::string>{});
    if (cov.empty())
        for (std::size_t j = 0; j < d; ++j) cov.push_back("x" + std::to_string(j + 1));
    if (cov.size() != d) throw Error(ErrorCode::DimensionMismatch, "covariate_names must match x columns");
    const auto xv = x.unchecked<2>();
    const double* sp = s.data();
    const double* tp = t.data();
    const double* yp = y.data();
    std::vector<std::vector<double>> rows(n);
    for (std::size_t i = 0; i < n; ++i) {
        auto& row = rows[i];
        for (std::size_t j = 0; j < d; ++j) row.push_back(xv(static_cast<py::ssize_t>(i), static_cast<py::ssize_t>(j)));
        row.push_back(sp[i]);
        row.push_back(tp[i]);
        row.push_back(yp[i]);
    }
    ColumnSchema schema;
    schema.names = cov;
    schema.names.insert(schema.names.end(), {"s", "t", "y"});
    ValidationOptions options;
    options.shift_margin = shift;
    return validate_dataset(rows, schema, options);
}

Array to_array(const std::vector<double>& v) {
    Array out(std::vector<py::ssize_t>{static_cast<py::ssize_t>(v.size())});
    auto view = out.mutable_unchecked<1>();
    for (std::size_t i = 0; i < v.size(); ++i) view(static_cast<py::ssize_t>(i)) = v[i];
    return out;
}

py::dict dataset_dict(const Dataset& data) {
    const std::size_t n = data.size();
    const std::size_t d = data.dim();
    Array x({static_cast<py::ssize_t>(n), static_cast<py::ssize_t>(d)});
    auto xm = x.mutable_unchecked<2>();
    std::vector<double> s(n), t(n), y(n);
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = 0; j < d; ++j) xm(static_cast<py::ssize_t>(i), static_cast<py::ssize_t>(j)) = data[i].x[j];
        s[i] = data[i].s;
        t[i] = data[i].t;
        y[i] = data[i].y;
    }
    py::dict out;
    out["x"] = x;
    out["s"] = to_array(s);
    out["t"] = to_array(t);
    out["y"] = to_array(y);
    out["covariate_names"] = data.covariate_names();
    return out;
}

py::object parse_json(const nlohmann::ordered_json& j) {
    return py::module_::import("json").attr("loads")(j.dump());
}

FrontierConfig make_config(double alpha, int k, std::uint64_t seed, double confidence, const std::string& variance,
                           int bootstrap_b, int r_compat, const std::string& compat_mode, int threads) {
    FrontierConfig c;
    c.alpha = alpha;
    c.k = k;
    c.seed = seed;
    c.confidence = confidence;
    if (variance == "eif") c.variance_method = VarianceMethod::EifSampleVariance;
    else if (variance == "bootstrap") c.variance_method = VarianceMethod::Bootstrap;
    else throw Error(ErrorCode::InvalidConfig, "variance must be 'eif' or 'bootstrap'");
    if (compat_mode == "corrected") c.compat_mode = CompatMode::CorrectedLeftTail;
    else if (compat_mode == "paper") c.compat_mode = CompatMode::PaperLiteral;
    else throw Error(ErrorCode::InvalidConfig, "compat_mode must be 'corrected' or 'paper'");
    c.bootstrap_b = bootstrap_b;
    c.r_compat = r_compat;
    c.threads = threads;
    return c;
}

std::vector<std::size_t> subgroup_indices(const Dataset& data, const std::optional<std::string>& subgroup) {
    if (!subgroup) return all_indices(data.size());
    return select_subgroup(data, SubgroupFilter::parse(*subgroup));
}

}  // namespace

PYBIND11_MODULE(_core, m) {
    m.doc() = "Partial-identification bounds on treatment effects from fused trial and observational data";

    py::register_exception<Error>(m, "FusionBoundsError", PyExc_RuntimeError);

    m.attr("__version__") = std::string(tool_version);
    m.def("scenario_names", &scenario_names);
    m.def(
        "oracle_ate", [](double tau) { return oracle_ate({2500, 0.4, tau, 0}); }, py::arg("tau") = 5.0);

    m.def(
        "simulate",
        [](const std::optional<std::string>& scenario_name, std::size_t n, std::optional<double> beta,
           std::optional<double> tau, std::uint64_t seed, bool with_internals) {
            SimConfig config{n, 0.4, 5.0, seed};
            if (scenario_name) config = scenario(*scenario_name, n, seed).config;
            if (beta) config.beta = *beta;
            if (tau) config.tau = *tau;
            const SimulatedData data = simulate_dataset(config);
            py::dict out = dataset_dict(data.dataset);
            out["beta"] = config.beta;
            out["tau"] = config.tau;
            out["seed"] = config.seed;
            out["attempts"] = data.attempts;
            if (with_internals) {
                out["u"] = to_array(data.u);
                out["c"] = to_array(data.c);
            }
            return out;
        },
        py::arg("scenario") = py::none(), py::arg("n") = 2500, py::arg("beta") = py::none(),
        py::arg("tau") = py::none(), py::arg("seed") = 0, py::arg("with_internals") = false);

    m.def(
        "bounds",
        [](const Array& x, const Array& s, const Array& t, const Array& y, double rho, double gamma, double alpha,
           int k, std::uint64_t seed, double confidence, const std::string& variance, int bootstrap_b,
           const std::optional<std::string>& subgroup, std::optional<std::vector<std::string>> names,
           std::optional<double> shift, int threads) {
            const Dataset data = to_dataset(x, s, t, y, std::move(names), shift);
            const FrontierConfig c = make_config(alpha, k, seed, confidence, variance, bootstrap_b, 100, "corrected",
                                                 threads);
            const SensitivityPair pair{rho, gamma, alpha};
            const auto idx = subgroup_indices(data, subgroup);
            py::gil_scoped_release release;
            const NuisanceEstimates nuis = cross_fit(data, c.cross_fit_config());
            BoundEstimate est;
            if (c.variance_method == VarianceMethod::Bootstrap) {
                const BootstrapEnsemble ensemble = build_bootstrap_ensemble(
                    data, c.cross_fit_config(), c.bootstrap_b, derive_seed(seed, {stream::bootstrap}), threads);
                est = bootstrap_bounds(data, nuis, ensemble, pair, idx, confidence);
            } else {
                est = bias_corrected_bounds(data, nuis, pair, idx, confidence);
            }
            py::gil_scoped_acquire acquire;
            return parse_json(bound_estimate_to_json(est));
        },
        py::arg("x"), py::arg("s"), py::arg("t"), py::arg("y"), py::arg("rho") = 0.0, py::arg("gamma") = 0.0,
        py::arg("alpha") = 10.0, py::arg("k") = 2, py::arg("seed") = 0, py::arg("confidence") = 0.95,
        py::arg("variance") = "eif", py::arg("bootstrap_b") = 50, py::arg("subgroup") = py::none(),
        py::arg("covariate_names") = py::none(), py::arg("shift_outcomes") = py::none(), py::arg("threads") = 1);

    m.def(
        "compat",
        [](const Array& x, const Array& s, const Array& t, const Array& y, double rho, double gamma, double alpha,
           int k, std::uint64_t seed, int r, double confidence, const std::string& mode,
           const std::optional<std::string>& subgroup, std::optional<std::vector<std::string>> names) {
            const Dataset data = to_dataset(x, s, t, y, std::move(names), std::nullopt);
            const FrontierConfig c = make_config(alpha, k, seed, confidence, "eif", 50, r, mode, 1);
            const auto idx = subgroup_indices(data, subgroup);
            const NuisanceEstimates nuis = cross_fit(data, c.cross_fit_config());
            CompatConfig cc;
            cc.r = r;
            cc.seed = seed;
            cc.confidence = confidence;
            cc.mode = c.compat_mode;
            const auto [a0, a1] = compat_both_arms(nuis, {rho, gamma, alpha}, cc, idx);
            py::dict out;
            out["t0"] = parse_json(compat_result_to_json(a0));
            out["t1"] = parse_json(compat_result_to_json(a1));
            out["compatible"] = a0.compatible && a1.compatible;
            return out;
        },
        py::arg("x"), py::arg("s"), py::arg("t"), py::arg("y"), py::arg("rho") = 0.0, py::arg("gamma") = 0.0,
        py::arg("alpha") = 10.0, py::arg("k") = 2, py::arg("seed") = 0, py::arg("r") = 100,
        py::arg("confidence") = 0.95, py::arg("compat_mode") = "corrected", py::arg("subgroup") = py::none(),
        py::arg("covariate_names") = py::none());

    m.def(
        "frontier",
        [](const Array& x, const Array& s, const Array& t, const Array& y, int grid_n, double rho_max,
           double gamma_max, double alpha, int k, std::uint64_t seed, double confidence, const std::string& variance,
           int bootstrap_b, int r_compat, const std::string& compat_mode, const std::optional<std::string>& subgroup,
           std::optional<std::vector<std::string>> names, int threads) {
            const Dataset data = to_dataset(x, s, t, y, std::move(names), std::nullopt);
            FrontierConfig c =
                make_config(alpha, k, seed, confidence, variance, bootstrap_b, r_compat, compat_mode, threads);
            c.grid_n = grid_n;
            c.rho_max = rho_max;
            c.gamma_max = gamma_max;
            const auto idx = subgroup_indices(data, subgroup);
            std::ostringstream csv;
            nlohmann::ordered_json j;
            {
                py::gil_scoped_release release;
                const FrontierGrid grid = compute_frontier(data, c, subgroup ? std::span<const std::size_t>(idx)
                                                                              : std::span<const std::size_t>{});
                write_frontier_csv(csv, grid);
                j = frontier_to_json(grid);
            }
            py::dict out = parse_json(j);
            out["csv"] = csv.str();
            return out;
        },
        py::arg("x"), py::arg("s"), py::arg("t"), py::arg("y"), py::arg("grid_n") = 50, py::arg("rho_max") = 0.2,
        py::arg("gamma_max") = 0.2, py::arg("alpha") = 10.0, py::arg("k") = 2, py::arg("seed") = 0,
        py::arg("confidence") = 0.95, py::arg("variance") = "eif", py::arg("bootstrap_b") = 50,
        py::arg("r_compat") = 100, py::arg("compat_mode") = "corrected", py::arg("subgroup") = py::none(),
        py::arg("covariate_names") = py::none(), py::arg("threads") = 1);
}
