#include "fusion_bounds/random.hpp"

#include "fusion_bounds/stats.hpp"

namespace fusion_bounds {

std::uint64_t CounterRng::uniform_index(std::uint64_t n) noexcept {
    if (n <= 1) return 0;
    std::uint64_t x = next_u64();
    auto m = static_cast<unsigned __int128>(x) * n;
    auto low = static_cast<std::uint64_t>(m);
    if (low < n) {
        const std::uint64_t threshold = (0 - n) % n;
        while (low < threshold) {
            x = next_u64();
            m = static_cast<unsigned __int128>(x) * n;
            low = static_cast<std::uint64_t>(m);
        }
    }
    return static_cast<std::uint64_t>(m >> 64);
}

double CounterRng::normal() noexcept { return normal_quantile(uniform_open()); }

}  // namespace fusion_bounds
