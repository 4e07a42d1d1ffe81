#pragma once

#include <cmath>
#include <vector>

#include "fusion_bounds/model.hpp"
#include "fusion_bounds/random.hpp"
#include "fusion_bounds/stats.hpp"

namespace fusion_bounds::testing {

/// Random but sane nuisance row: probabilities inside (0.05, 0.95), outcomes
/// in [50, 150].
inline NuisanceRow random_row(CounterRng& rng) {
    NuisanceRow row;
    row.g1 = 0.05 + 0.9 * rng.uniform_open();
    row.e1_obs = 0.05 + 0.9 * rng.uniform_open();
    row.e1_exp = 0.05 + 0.9 * rng.uniform_open();
    for (int s = 0; s < 2; ++s)
        for (int t = 0; t < 2; ++t) row.mu[s][t] = 50.0 + 100.0 * rng.uniform_open();
    return row;
}

inline Unit random_unit(CounterRng& rng, const NuisanceRow& row) {
    Unit u;
    u.x = {rng.normal(), rng.normal()};
    u.s = rng.uniform_open() < 0.5 ? 1 : 0;
    u.t = rng.uniform_open() < 0.5 ? 1 : 0;
    u.y = row.mu[u.s][u.t] + 5.0 * rng.normal();
    return u;
}

/// Units covering all four (s, t) cells, plus matching random nuisances.
struct Profile {
    Dataset dataset;
    NuisanceEstimates nuisances;
};

inline Profile random_profile(std::uint64_t seed, std::size_t n) {
    CounterRng rng(derive_seed(seed, {0xfeed}));
    std::vector<Unit> units;
    NuisanceEstimates est;
    est.resize(n);
    for (std::size_t i = 0; i < n; ++i) {
        const NuisanceRow row = random_row(rng);
        Unit u = random_unit(rng, row);
        if (i < 4) {
            u.s = static_cast<int>(i / 2);
            u.t = static_cast<int>(i % 2);
        }
        u.y = std::max(u.y, 1.0);
        est.set_row(i, row);
        units.push_back(std::move(u));
    }
    return {Dataset::from_units(std::move(units), {"x1", "x2"}), est};
}

}  // namespace fusion_bounds::testing
