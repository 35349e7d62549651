#pragma once

#include <cmath>
#include <cstdint>
#include <string_view>

namespace aligntf {

/// Counter-based random stream.
///
/// Every draw is a pure function of (key, counter): the n-th value of a stream
/// is splitmix64(key + n * golden). Streams are split by name, so consumers
/// (parameter init, dropout masks, corpus sampling) never perturb each other
/// and a stream can be restored exactly from its (key, counter) pair.
class Rng {
public:
    Rng() = default;
    explicit Rng(std::uint64_t seed) : key_(mix(seed ^ 0x5851F42D4C957F2DULL)) {}
    Rng(std::uint64_t key, std::uint64_t counter) : key_(key), counter_(counter) {}

    [[nodiscard]] Rng split(std::string_view name) const {
        return Rng(mix(key_ ^ fnv1a(name)), 0);
    }
    [[nodiscard]] Rng split(std::uint64_t index) const {
        return Rng(mix(key_ ^ mix(index + 0x9E3779B97F4A7C15ULL)), 0);
    }

    std::uint64_t next_u64() { return mix(key_ + (counter_++) * 0x9E3779B97F4A7C15ULL); }

    /// Uniform in [0, 1) with 53 bits of resolution.
    double uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    /// Uniform integer in [0, n).
    std::uint64_t below(std::uint64_t n) {
        return static_cast<std::uint64_t>(uniform() * static_cast<double>(n)) % n;
    }

    /// Standard normal via Box-Muller (one value per pair of draws).
    double normal() {
        const double u1 = 1.0 - uniform();
        const double u2 = uniform();
        return std::sqrt(-2.0 * std::log(u1)) * std::cos(6.283185307179586 * u2);
    }

    [[nodiscard]] std::uint64_t key() const { return key_; }
    [[nodiscard]] std::uint64_t counter() const { return counter_; }
    void set_counter(std::uint64_t c) { counter_ = c; }

    static constexpr std::uint64_t mix(std::uint64_t z) {
        z += 0x9E3779B97F4A7C15ULL;
        z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
        z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
        return z ^ (z >> 31);
    }

    static constexpr std::uint64_t fnv1a(std::string_view s) {
        std::uint64_t h = 0xCBF29CE484222325ULL;
        for (char c : s) {
            h ^= static_cast<unsigned char>(c);
            h *= 0x100000001B3ULL;
        }
        return h;
    }

private:
    std::uint64_t key_ = mix(0);
    std::uint64_t counter_ = 0;
};

}  // namespace aligntf
