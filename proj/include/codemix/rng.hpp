#pragma once

#include <cstdint>
#include <initializer_list>

namespace codemix {

/// SplitMix64 finalizer.
[[nodiscard]] constexpr std::uint64_t splitmix64(std::uint64_t x) noexcept {
    x += 0x9E3779B97F4A7C15ULL;
    x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
    x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
    return x ^ (x >> 31);
}

/// Counter-based seed splitter: the derived seed depends only on the master seed and
/// the counters, never on scheduling, so parallel trials reproduce serial ones.
[[nodiscard]] constexpr std::uint64_t derive_seed(std::uint64_t master, std::uint64_t a, std::uint64_t b = 0,
                                                  std::uint64_t c = 0) noexcept {
    std::uint64_t h = splitmix64(master);
    h = splitmix64(h ^ splitmix64(a + 0x1000193ULL));
    h = splitmix64(h ^ splitmix64(b + 0x2000377ULL));
    h = splitmix64(h ^ splitmix64(c + 0x30004C1ULL));
    return h;
}

}  // namespace codemix
