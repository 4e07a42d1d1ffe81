#include "fusion_bounds/simulate.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>

#include "fusion_bounds/error.hpp"
#include "fusion_bounds/random.hpp"
#include "fusion_bounds/stats.hpp"

namespace fusion_bounds {

void SimConfig::validate() const {
    require(n >= 4, "simulation needs n >= 4");
    require(beta >= 0.0 && beta <= 1.0, "beta must lie in [0, 1]");
    require(std::isfinite(tau), "tau must be finite");
}

namespace {

std::string normalize(std::string_view name) {
    std::string out;
    for (char ch : name)
        if (ch != '-' && ch != '_' && ch != ' ') out.push_back(static_cast<char>(std::tolower(static_cast<unsigned char>(ch))));
    return out;
}

struct ScenarioSpec {
    const char* name;
    double beta;
    double tau;
};

constexpr ScenarioSpec scenario_table[] = {
    {"Base", 0.4, 5.0},      {"LargerTau", 0.4, 8.0}, {"SmallerTau", 0.4, 2.0},
    {"LargerU", 0.6, 5.0},   {"SmallerU", 0.2, 5.0},
};

}  // namespace

const std::vector<std::string>& scenario_names() {
    static const std::vector<std::string> names = [] {
        std::vector<std::string> v;
        for (const auto& s : scenario_table) v.emplace_back(s.name);
        return v;
    }();
    return names;
}

Scenario scenario(std::string_view name, std::size_t n, std::uint64_t seed) {
    const std::string key = normalize(name);
    for (const auto& s : scenario_table) {
        if (normalize(s.name) == key) {
            Scenario out;
            out.name = s.name;
            out.config.n = n;
            out.config.beta = s.beta;
            out.config.tau = s.tau;
            out.config.seed = seed;
            return out;
        }
    }
    throw Error(ErrorCode::UnknownScenario, "unknown scenario '" + std::string(name) +
                                                "'; expected one of Base, LargerTau, SmallerTau, LargerU, SmallerU");
}

SimulatedData simulate_dataset(const SimConfig& config) {
    config.validate();
    SimulatedData out;
    out.config = config;
    const std::vector<std::string> names{"x1", "x2", "x3"};

    for (int attempt = 0; attempt < simulation_max_attempts; ++attempt) {
        std::vector<Unit> units(config.n);
        std::vector<double> u(config.n);
        std::vector<double> c(config.n);
        bool positive = true;
        for (std::size_t i = 0; i < config.n; ++i) {
            CounterRng rng(derive_seed(config.seed, {stream::simulate, static_cast<std::uint64_t>(attempt), i}));
            const double x1 = rng.normal(1.0, 1.0);
            const double x2 = rng.normal(1.0, 1.0);
            const double x3 = rng.normal(1.0, 1.0);
            u[i] = rng.normal(1.0, 1.0);
            c[i] = (1.0 - config.beta) * x1 + config.beta * u[i];
            const int s = rng.uniform_open() < expit(-c[i]) ? 1 : 0;
            const double p_treat = s == 1 ? 0.5 : expit(c[i]);
            const int t = rng.uniform_open() < p_treat ? 1 : 0;
            const double eps = rng.normal();
            const double y0 = 100.0 + x2;
            const double y1 = y0 + 12.0 * c[i] - 10.0 * x3 + config.tau;
            const double y = (t == 1 ? y1 : y0) + eps;
            positive = positive && y > 0.0;
            units[i] = Unit{{x1, x2, x3}, s, t, y};
        }
        out.attempts = attempt + 1;
        if (!positive) {
            ++out.positivity_redraws;
            continue;
        }
        try {
            out.dataset = Dataset::from_units(std::move(units), names);
        } catch (const Error& e) {
            if (e.code() != ErrorCode::EmptyCell) throw;
            ++out.cell_redraws;
            continue;
        }
        out.u = std::move(u);
        out.c = std::move(c);
        return out;
    }
    throw Error(ErrorCode::DegenerateDraw, "simulation produced no valid dataset after " +
                                               std::to_string(simulation_max_attempts) + " draws (n=" +
                                               std::to_string(config.n) + ")");
}

double oracle_ate(const SimConfig& config) noexcept {
    // E[12 C - 10 X3 + tau] with E[C] = (1 - beta) + beta = 1 and E[X3] = 1.
    return 12.0 - 10.0 + config.tau;
}

NuisanceEstimates oracle_nuisances(const SimulatedData& data, double clip_epsilon) {
    const std::size_t n = data.dataset.size();
    if (data.c.size() != n || n == 0)
        throw Error(ErrorCode::InternalsUnavailable, "oracle nuisances need the retained confounder C");
    NuisanceEstimates est;
    est.resize(n);
    est.clip_epsilon = clip_epsilon;
    for (std::size_t i = 0; i < n; ++i) {
        const Unit& unit = data.dataset[i];
        const double c = data.c[i];
        NuisanceRow row;
        row.g1 = expit(-c);
        row.e1_obs = expit(c);
        row.e1_exp = 0.5;
        const double y0 = 100.0 + unit.x[1];
        const double y1 = y0 + 12.0 * c - 10.0 * unit.x[2] + data.config.tau;
        for (int s = 0; s < 2; ++s) {
            row.mu[s][0] = y0;
            row.mu[s][1] = y1;
        }
        est.set_row(i, row);
    }
    return est;
}

}  // namespace fusion_bounds
