#pragma once

#include <concepts>
#include <cstddef>
#include <cstdint>
#include <limits>
#include <optional>
#include <random>
#include <vector>

namespace poolaudit {

// Unbiased integer in [0, bound) from a 64-bit engine. Implemented here rather than
// via std::uniform_int_distribution, whose output differs between standard libraries.
inline std::uint64_t uniform_below(std::mt19937_64& rng, std::uint64_t bound) {
    if (bound <= 1) {
        return 0;
    }
    const std::uint64_t limit = std::numeric_limits<std::uint64_t>::max() -
                                std::numeric_limits<std::uint64_t>::max() % bound;
    std::uint64_t x = rng();
    while (x >= limit) {
        x = rng();
    }
    return x % bound;
}

// Uniform double in [0, 1) with 53 random bits.
inline double uniform_unit(std::mt19937_64& rng) {
    return static_cast<double>(rng() >> 11) * 0x1.0p-53;
}

// Seeded Fisher-Yates shuffle with a portable index sequence.
template <typename T>
void portable_shuffle(std::vector<T>& items, std::mt19937_64& rng) {
    for (std::size_t i = items.size(); i > 1; --i) {
        const auto j = static_cast<std::size_t>(uniform_below(rng, i));
        std::swap(items[i - 1], items[j]);
    }
}

// Algorithm R over a pull source: `next()` returns std::optional<T>, nullopt at end.
// The result is a pure function of (sequence, k, seed).
template <typename Source>
    requires std::invocable<Source&>
auto reservoir_sample(Source&& next, std::size_t k, std::uint64_t seed) {
    using Item = typename std::decay_t<decltype(*next())>;
    std::vector<Item> reservoir;
    if (k == 0) {
        return reservoir;
    }
    reservoir.reserve(k);
    std::mt19937_64 rng(seed);
    std::uint64_t seen = 0;
    while (auto item = next()) {
        if (seen < k) {
            reservoir.push_back(std::move(*item));
        } else {
            const std::uint64_t j = uniform_below(rng, seen + 1);
            if (j < k) {
                reservoir[static_cast<std::size_t>(j)] = std::move(*item);
            }
        }
        ++seen;
    }
    return reservoir;
}

template <typename T>
std::vector<T> reservoir_sample(const std::vector<T>& items, std::size_t k, std::uint64_t seed) {
    std::size_t i = 0;
    return reservoir_sample([&]() -> std::optional<T> {
        if (i == items.size()) {
            return std::nullopt;
        }
        return items[i++];
    }, k, seed);
}

} // namespace poolaudit
