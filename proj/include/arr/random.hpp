#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <numeric>
#include <random>
#include <vector>

namespace arr {

using Rng = std::mt19937_64;

/// Uniform index in [0, n). Implemented directly so the drawn sequence does
/// not depend on the standard library's distribution internals.
inline std::size_t uniform_index(Rng& rng, std::size_t n) {
    // Lemire-style rejection keeps the draw unbiased.
    const std::uint64_t bound = n;
    const std::uint64_t limit = std::numeric_limits<std::uint64_t>::max() -
                                std::numeric_limits<std::uint64_t>::max() % bound;
    std::uint64_t x = rng();
    while (x >= limit) x = rng();
    return static_cast<std::size_t>(x % bound);
}

template <typename T>
void shuffle_in_place(std::vector<T>& items, Rng& rng) {
    for (std::size_t i = items.size(); i > 1; --i) {
        std::swap(items[i - 1], items[uniform_index(rng, i)]);
    }
}

inline std::vector<std::size_t> permutation(std::size_t n, Rng& rng) {
    std::vector<std::size_t> idx(n);
    std::iota(idx.begin(), idx.end(), std::size_t{0});
    shuffle_in_place(idx, rng);
    return idx;
}

/// k distinct indices from [0, n), uniformly, in draw order (partial Fisher-Yates).
inline std::vector<std::size_t> sample_without_replacement(std::size_t n, std::size_t k, Rng& rng) {
    k = std::min(k, n);
    std::vector<std::size_t> idx(n);
    std::iota(idx.begin(), idx.end(), std::size_t{0});
    for (std::size_t i = 0; i < k; ++i) {
        std::swap(idx[i], idx[i + uniform_index(rng, n - i)]);
    }
    idx.resize(k);
    return idx;
}

/// Standard normal draw via Box-Muller on the raw engine output.
inline double standard_normal(Rng& rng) {
    constexpr double two_pi = 6.283185307179586476925286766559;
    const double to_unit = 1.0 / 9007199254740992.0;  // 2^-53
    double u1 = 0.0;
    while (u1 == 0.0) u1 = static_cast<double>(rng() >> 11) * to_unit;
    const double u2 = static_cast<double>(rng() >> 11) * to_unit;
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(two_pi * u2);
}

}  // namespace arr
