#pragma once

#include <cstdint>
#include <initializer_list>

namespace fusion_bounds {

// SplitMix64 finalizer. Bijective on 64-bit words.
constexpr std::uint64_t mix64(std::uint64_t z) noexcept {
    z += 0x9e3779b97f4a7c15ULL;
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}

/// Derives an independent stream key from a root seed and a sequence of
/// integer tags (purpose, replicate index, cell index, ...). The result only
/// depends on the values, never on evaluation order or thread layout.
constexpr std::uint64_t derive_seed(std::uint64_t seed,
                                    std::initializer_list<std::uint64_t> tags) noexcept {
    std::uint64_t key = mix64(seed);
    for (std::uint64_t tag : tags) key = mix64(key ^ mix64(tag + 0x632be59bd9b4e019ULL));
    return key;
}

/// Stream purposes. Values are part of the reproducibility contract; do not
/// renumber.
namespace stream {
inline constexpr std::uint64_t simulate = 1;
inline constexpr std::uint64_t cross_fit = 2;
inline constexpr std::uint64_t penalty_cv = 3;
inline constexpr std::uint64_t compat = 4;
inline constexpr std::uint64_t bootstrap = 5;
inline constexpr std::uint64_t frontier_cell = 6;
inline constexpr std::uint64_t perturbation = 7;
}  // namespace stream

/// Counter-based generator: the i-th output is mix64(key + i * golden), so a
/// stream is fully described by (key, position) and is bit-identical on every
/// platform.
class CounterRng {
public:
    explicit constexpr CounterRng(std::uint64_t key) noexcept : key_(key) {}

    constexpr std::uint64_t next_u64() noexcept {
        return mix64(key_ + 0x9e3779b97f4a7c15ULL * counter_++);
    }

    /// Uniform on the open interval (0, 1) with 53 bits of resolution.
    double uniform_open() noexcept {
        return (static_cast<double>(next_u64() >> 11) + 0.5) * 0x1.0p-53;
    }

    /// Unbiased integer in [0, n) (Lemire's multiply-and-reject).
    std::uint64_t uniform_index(std::uint64_t n) noexcept;

    /// Standard normal via inverse CDF of one uniform draw.
    double normal() noexcept;

    double normal(double mean, double sd) noexcept { return mean + sd * normal(); }

    std::uint64_t position() const noexcept { return counter_; }

private:
    std::uint64_t key_;
    std::uint64_t counter_ = 0;
};

}  // namespace fusion_bounds
