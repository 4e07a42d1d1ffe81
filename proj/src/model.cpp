#include "fusion_bounds/model.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>

#include "fusion_bounds/error.hpp"

namespace fusion_bounds {

std::string_view error_code_name(ErrorCode code) noexcept {
    switch (code) {
        case ErrorCode::Precondition: return "Precondition";
        case ErrorCode::NonPositiveOutcome: return "NonPositiveOutcome";
        case ErrorCode::EmptyCell: return "EmptyCell";
        case ErrorCode::DimensionMismatch: return "DimensionMismatch";
        case ErrorCode::InvalidCsv: return "InvalidCsv";
        case ErrorCode::FileNotFound: return "FileNotFound";
        case ErrorCode::SingularSystem: return "SingularSystem";
        case ErrorCode::EmptyTrainingCell: return "EmptyTrainingCell";
        case ErrorCode::EmptySubgroup: return "EmptySubgroup";
        case ErrorCode::DegenerateDraw: return "DegenerateDraw";
        case ErrorCode::InternalsUnavailable: return "InternalsUnavailable";
        case ErrorCode::UnknownScenario: return "UnknownScenario";
        case ErrorCode::RTooSmall: return "RTooSmall";
        case ErrorCode::InvalidConfig: return "InvalidConfig";
        case ErrorCode::BootstrapExhausted: return "BootstrapExhausted";
    }
    return "Unknown";
}

std::string_view variance_method_name(VarianceMethod m) noexcept {
    return m == VarianceMethod::Bootstrap ? "bootstrap" : "eif-sample-variance";
}

std::string_view region_name(Region r) noexcept {
    switch (r) {
        case Region::Conclusive: return "Conclusive";
        case Region::Tentative: return "Tentative";
        case Region::Inconclusive: return "Inconclusive";
        case Region::Incompatible: return "Incompatible";
    }
    return "Unknown";
}

void Fnv1a::add_bytes(const void* data, std::size_t size) noexcept {
    const auto* p = static_cast<const unsigned char*>(data);
    for (std::size_t i = 0; i < size; ++i) {
        hash_ ^= p[i];
        hash_ *= 0x100000001b3ULL;
    }
}

void Fnv1a::add(double v) noexcept {
    std::uint64_t bits;
    std::memcpy(&bits, &v, sizeof bits);
    add(bits);
}

void Fnv1a::add(std::uint64_t v) noexcept {
    unsigned char bytes[8];
    for (int i = 0; i < 8; ++i) bytes[i] = static_cast<unsigned char>(v >> (8 * i));
    add_bytes(bytes, 8);
}

void Fnv1a::add(std::string_view s) noexcept {
    add(static_cast<std::uint64_t>(s.size()));
    add_bytes(s.data(), s.size());
}

Dataset Dataset::from_units(std::vector<Unit> units, std::vector<std::string> covariate_names,
                            const ValidationOptions& options) {
    require(!units.empty(), "dataset has no rows");
    const std::size_t dim = covariate_names.size();
    require(dim >= 1, "dataset needs at least one covariate");

    for (std::size_t i = 0; i < units.size(); ++i) {
        const Unit& u = units[i];
        if (u.x.size() != dim)
            throw Error(ErrorCode::DimensionMismatch,
                        "row " + std::to_string(i) + " has " + std::to_string(u.x.size()) +
                            " covariates, expected " + std::to_string(dim));
        if ((u.s != 0 && u.s != 1) || (u.t != 0 && u.t != 1))
            throw Error(ErrorCode::Precondition,
                        "row " + std::to_string(i) + ": s and t must be 0 or 1");
        if (!std::isfinite(u.y) ||
            std::any_of(u.x.begin(), u.x.end(), [](double v) { return !std::isfinite(v); }))
            throw Error(ErrorCode::Precondition, "row " + std::to_string(i) + " has non-finite values");
    }

    Dataset ds;
    if (options.shift_margin) {
        std::vector<double> y(units.size());
        std::transform(units.begin(), units.end(), y.begin(), [](const Unit& u) { return u.y; });
        const ShiftResult shifted = shift_outcomes(y, *options.shift_margin);
        for (std::size_t i = 0; i < units.size(); ++i) units[i].y = shifted.y[i];
        ds.outcome_offset_ = shifted.offset;
    }
    if (options.require_positive_outcome) {
        for (std::size_t i = 0; i < units.size(); ++i)
            if (!(units[i].y > 0.0))
                throw Error(ErrorCode::NonPositiveOutcome,
                            "row " + std::to_string(i) + " has outcome " + std::to_string(units[i].y) +
                                " <= 0; enable outcome shifting to rescale");
    }

    for (const Unit& u : units) ++ds.cells_[u.s][u.t];
    for (int s = 0; s < 2; ++s)
        for (int t = 0; t < 2; ++t)
            if (ds.cells_[s][t] == 0)
                throw Error(ErrorCode::EmptyCell, "EmptyCell(" + std::to_string(s) + "," +
                                                      std::to_string(t) + "): no units with s=" +
                                                      std::to_string(s) + ", t=" + std::to_string(t));

    ds.units_ = std::move(units);
    ds.covariate_names_ = std::move(covariate_names);
    return ds;
}

ColumnSchema Dataset::schema() const {
    ColumnSchema schema;
    schema.names = covariate_names_;
    schema.names.insert(schema.names.end(), {"s", "t", "y"});
    schema.covariates = covariate_names_;
    return schema;
}

std::vector<std::vector<double>> Dataset::to_rows() const {
    std::vector<std::vector<double>> rows;
    rows.reserve(units_.size());
    for (const Unit& u : units_) {
        std::vector<double> row = u.x;
        row.push_back(u.s);
        row.push_back(u.t);
        row.push_back(u.y);
        rows.push_back(std::move(row));
    }
    return rows;
}

Dataset Dataset::resample(std::span<const std::size_t> indices) const {
    std::vector<Unit> units;
    units.reserve(indices.size());
    for (std::size_t i : indices) units.push_back(units_.at(i));
    ValidationOptions options;
    options.require_positive_outcome = false;
    Dataset out = from_units(std::move(units), covariate_names_, options);
    out.outcome_offset_ = outcome_offset_;
    return out;
}

std::uint64_t Dataset::fingerprint() const noexcept {
    Fnv1a h;
    for (const auto& name : covariate_names_) h.add(name);
    h.add(static_cast<std::uint64_t>(units_.size()));
    for (const Unit& u : units_) {
        for (double v : u.x) h.add(v);
        h.add(static_cast<std::uint64_t>(u.s));
        h.add(static_cast<std::uint64_t>(u.t));
        h.add(u.y);
    }
    h.add(outcome_offset_);
    return h.value();
}

namespace {

std::size_t column_index(const ColumnSchema& schema, const std::string& name) {
    auto it = std::find(schema.names.begin(), schema.names.end(), name);
    if (it == schema.names.end())
        throw Error(ErrorCode::InvalidConfig, "column '" + name + "' not found in header");
    return static_cast<std::size_t>(it - schema.names.begin());
}

int indicator(double v, const char* what, std::size_t row) {
    if (v == 0.0) return 0;
    if (v == 1.0) return 1;
    throw Error(ErrorCode::Precondition,
                "row " + std::to_string(row) + ": " + what + " must be 0 or 1");
}

}  // namespace

Dataset validate_dataset(std::span<const std::vector<double>> rows, const ColumnSchema& schema,
                         const ValidationOptions& options) {
    require(!rows.empty(), "dataset has no rows");
    const std::size_t s_col = column_index(schema, schema.s_column);
    const std::size_t t_col = column_index(schema, schema.t_column);
    const std::size_t y_col = column_index(schema, schema.y_column);

    std::vector<std::string> covariates = schema.covariates;
    if (covariates.empty()) {
        for (const auto& name : schema.names)
            if (name != schema.s_column && name != schema.t_column && name != schema.y_column)
                covariates.push_back(name);
    }
    require(!covariates.empty(), "schema names no covariate columns");
    std::vector<std::size_t> x_cols;
    for (const auto& name : covariates) x_cols.push_back(column_index(schema, name));

    std::vector<Unit> units;
    units.reserve(rows.size());
    for (std::size_t i = 0; i < rows.size(); ++i) {
        const auto& row = rows[i];
        if (row.size() != schema.names.size())
            throw Error(ErrorCode::DimensionMismatch,
                        "row " + std::to_string(i) + " has " + std::to_string(row.size()) +
                            " fields, header has " + std::to_string(schema.names.size()));
        Unit u;
        u.x.reserve(x_cols.size());
        for (std::size_t c : x_cols) u.x.push_back(row[c]);
        u.s = indicator(row[s_col], "s", i);
        u.t = indicator(row[t_col], "t", i);
        u.y = row[y_col];
        units.push_back(std::move(u));
    }
    return Dataset::from_units(std::move(units), std::move(covariates), options);
}

ShiftResult shift_outcomes(std::span<const double> y, double margin) {
    require(std::isfinite(margin) && margin > 0.0, "shift margin must be > 0");
    require(!y.empty(), "no outcomes to shift");
    for (double v : y) require(std::isfinite(v), "outcomes must be finite (bounded) to shift");
    const double lowest = *std::min_element(y.begin(), y.end());
    ShiftResult out;
    out.offset = margin - lowest;
    out.y.reserve(y.size());
    for (double v : y) out.y.push_back((v - lowest) + margin);
    return out;
}

std::pair<Dataset, double> shift_outcomes(const Dataset& dataset, double margin) {
    std::vector<Unit> units(dataset.units().begin(), dataset.units().end());
    ValidationOptions options;
    options.shift_margin = margin;
    Dataset out = Dataset::from_units(std::move(units), dataset.covariate_names(), options);
    const double step = out.outcome_offset_;
    // Offsets compose: y'' = (y + previous) + step.
    out.outcome_offset_ += dataset.outcome_offset();
    return {std::move(out), step};
}

void NuisanceEstimates::resize(std::size_t n) {
    g1.assign(n, 0.5);
    e1_s0.assign(n, 0.5);
    e1_s1.assign(n, 0.5);
    for (auto& row : mu)
        for (auto& col : row) col.assign(n, 0.0);
    fold_id.assign(n, 0);
}

void NuisanceEstimates::set_row(std::size_t i, const NuisanceRow& r) noexcept {
    g1[i] = r.g1;
    e1_s0[i] = r.e1_obs;
    e1_s1[i] = r.e1_exp;
    for (int s = 0; s < 2; ++s)
        for (int t = 0; t < 2; ++t) mu[s][t][i] = r.mu[s][t];
}

NuisanceEstimates NuisanceEstimates::select(std::span<const std::size_t> indices) const {
    NuisanceEstimates out;
    out.resize(indices.size());
    out.clip_epsilon = clip_epsilon;
    out.folds = folds;
    for (std::size_t k = 0; k < indices.size(); ++k) {
        out.set_row(k, row(indices[k]));
        out.fold_id[k] = fold_id[indices[k]];
    }
    return out;
}

std::uint64_t NuisanceEstimates::fingerprint() const noexcept {
    Fnv1a h;
    auto add_all = [&h](const std::vector<double>& v) {
        h.add(static_cast<std::uint64_t>(v.size()));
        for (double x : v) h.add(x);
    };
    add_all(g1);
    add_all(e1_s0);
    add_all(e1_s1);
    for (const auto& row : mu)
        for (const auto& col : row) add_all(col);
    for (int f : fold_id) h.add(static_cast<std::uint64_t>(f));
    h.add(clip_epsilon);
    return h.value();
}

void SensitivityPair::validate() const {
    require(std::isfinite(rho) && rho >= 0.0, "rho must be finite and >= 0");
    require(std::isfinite(gamma) && gamma >= 0.0, "gamma must be finite and >= 0");
    require(std::isfinite(alpha) && alpha > 0.0, "alpha must be finite and > 0");
}

}  // namespace fusion_bounds
