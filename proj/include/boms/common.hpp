#pragma once

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdint>
#include <limits>
#include <random>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace boms {

/// Raised for invalid user-facing configuration (bad ranges, unknown keys).
class ConfigError : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

/// Raised when a numerical routine cannot produce a trustworthy result.
class NumericalError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

using Rng = std::mt19937_64;

/// SplitMix64 finalizer. Used to derive independent sub-seeds from a master seed.
constexpr std::uint64_t mix64(std::uint64_t z) noexcept {
    z += 0x9e3779b97f4a7c15ULL;
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}

/// Derive a child seed from a parent seed and a path of integer tags.
/// Distinct tag paths give (practically) disjoint streams.
template <typename... Tags>
constexpr std::uint64_t derive_seed(std::uint64_t seed, Tags... tags) noexcept {
    std::uint64_t s = mix64(seed);
    ((s = mix64(s ^ mix64(static_cast<std::uint64_t>(tags) + 0x632be59bd9b4e019ULL))), ...);
    return s;
}

namespace tag {
inline constexpr std::uint64_t dataset = 1;
inline constexpr std::uint64_t candidates = 2;
inline constexpr std::uint64_t probes = 3;
inline constexpr std::uint64_t trial = 4;
inline constexpr std::uint64_t first_pick = 5;
inline constexpr std::uint64_t evaluation = 6;
inline constexpr std::uint64_t permutation = 7;
inline constexpr std::uint64_t acquisition = 8;
inline constexpr std::uint64_t distance = 9;
inline constexpr std::uint64_t episode = 10;
inline constexpr std::uint64_t split = 11;
inline constexpr std::uint64_t instance = 12;
}  // namespace tag

/// Uniform double in [0, 1) from 53 random bits. Unlike
/// std::uniform_real_distribution the result does not depend on the
/// standard library implementation.
inline double uniform01(Rng& rng) {
    return static_cast<double>(rng() >> 11) * 0x1.0p-53;
}

/// Uniform integer in [0, n) by rejection (library-independent).
inline std::size_t uniform_index(Rng& rng, std::size_t n) {
    if (n == 0) throw std::invalid_argument("uniform_index: empty range");
    const std::uint64_t bound = static_cast<std::uint64_t>(n);
    const std::uint64_t limit = std::numeric_limits<std::uint64_t>::max() -
                                std::numeric_limits<std::uint64_t>::max() % bound;
    std::uint64_t x = rng();
    while (x >= limit) x = rng();
    return static_cast<std::size_t>(x % bound);
}

/// Standard normal via Box-Muller on uniform01 draws.
inline double standard_normal(Rng& rng) {
    double u1 = uniform01(rng);
    while (u1 <= 0.0) u1 = uniform01(rng);
    const double u2 = uniform01(rng);
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(6.283185307179586 * u2);
}

/// Gamma(shape, 1) by Marsaglia-Tsang; shape < 1 uses the U^(1/shape) boost.
inline double gamma_sample(Rng& rng, double shape) {
    if (!(shape > 0.0)) throw std::invalid_argument("gamma_sample: shape must be positive");
    if (shape < 1.0) {
        double u = uniform01(rng);
        while (u <= 0.0) u = uniform01(rng);
        return gamma_sample(rng, shape + 1.0) * std::pow(u, 1.0 / shape);
    }
    const double d = shape - 1.0 / 3.0;
    const double c = 1.0 / std::sqrt(9.0 * d);
    for (;;) {
        double x = 0.0;
        double v = 0.0;
        do {
            x = standard_normal(rng);
            v = 1.0 + c * x;
        } while (v <= 0.0);
        v = v * v * v;
        const double u = uniform01(rng);
        if (u < 1.0 - 0.0331 * x * x * x * x) return d * v;
        if (u > 0.0 && std::log(u) < 0.5 * x * x + d * (1.0 - v + std::log(v))) return d * v;
    }
}

/// Inverse-CDF draw from a probability vector. Falls back to the last
/// index with positive mass when round-off leaves the cumulative sum short.
template <typename Vec>
int sample_categorical(const Vec& probs, double u) {
    double acc = 0.0;
    int last_positive = 0;
    const auto n = static_cast<int>(probs.size());
    for (int i = 0; i < n; ++i) {
        const double p = probs[i];
        if (p <= 0.0) continue;
        last_positive = i;
        acc += p;
        if (u < acc) return i;
    }
    return last_positive;
}

/// Fisher-Yates shuffle driven by uniform_index.
template <typename T>
void shuffle_in_place(std::vector<T>& v, Rng& rng) {
    for (std::size_t i = v.size(); i > 1; --i) {
        std::swap(v[i - 1], v[uniform_index(rng, i)]);
    }
}

/// Shortest decimal text that parses back to exactly the same double.
inline std::string format_double(double x) {
    if (std::isnan(x)) return "nan";
    if (std::isinf(x)) return x > 0 ? "inf" : "-inf";
    char buf[64];
    const auto res = std::to_chars(buf, buf + sizeof(buf), x);
    return std::string(buf, res.ptr);
}

inline double parse_double(std::string_view text) {
    if (text == "nan") return std::numeric_limits<double>::quiet_NaN();
    if (text == "inf") return std::numeric_limits<double>::infinity();
    if (text == "-inf") return -std::numeric_limits<double>::infinity();
    double x = 0.0;
    const auto res = std::from_chars(text.data(), text.data() + text.size(), x);
    if (res.ec != std::errc{} || res.ptr != text.data() + text.size())
        throw std::invalid_argument("not a number: '" + std::string(text) + "'");
    return x;
}

template <typename Int>
Int parse_integer(std::string_view text) {
    Int x{};
    const auto res = std::from_chars(text.data(), text.data() + text.size(), x);
    if (res.ec != std::errc{} || res.ptr != text.data() + text.size())
        throw std::invalid_argument("not an integer: '" + std::string(text) + "'");
    return x;
}

inline double median_of(std::vector<double> v) {
    if (v.empty()) throw std::invalid_argument("median_of: empty input");
    const auto mid = v.begin() + static_cast<std::ptrdiff_t>(v.size() / 2);
    std::nth_element(v.begin(), mid, v.end());
    double hi = *mid;
    if (v.size() % 2 == 1) return hi;
    const double lo = *std::max_element(v.begin(), mid);
    return 0.5 * (lo + hi);
}

}  // namespace boms
