#pragma once
// Seeded random streams.
//
// Every stochastic routine takes either an Rng& or a seed from which it
// derives one independent stream per work item (sample index, draw index).
// The engine is std::mt19937_64, whose output sequence is fixed by the
// standard; the conversions to doubles are done here rather than through
// <random> distributions, whose algorithms are implementation-defined.

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <initializer_list>
#include <numbers>
#include <random>

namespace fans {

inline std::uint64_t splitmix64(std::uint64_t x) {
    x += 0x9E3779B97F4A7C15ULL;
    x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
    x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
    return x ^ (x >> 31);
}

/// Stream identifiers so that unrelated consumers of one seed never share draws.
enum class StreamTag : std::uint64_t {
    baseline = 1,
    mask = 2,
    weight_sufficiency = 3,
    weight_necessity = 4,
    resample_sufficiency = 5,
    resample_necessity = 6,
    perturb_sufficiency = 7,
    perturb_necessity = 8,
    threshold_noise = 9,
    epoch = 10,
    evaluation = 11,
    metric = 12,
    dataset = 13,
    training = 14,
};

class Rng {
public:
    using result_type = std::uint64_t;

    explicit Rng(std::uint64_t seed = 0) : engine_(splitmix64(seed)) {}

    /// Independent stream for (seed, tag, indices...).
    static Rng stream(std::uint64_t seed, StreamTag tag, std::initializer_list<std::uint64_t> indices = {}) {
        std::uint64_t h = splitmix64(seed ^ splitmix64(static_cast<std::uint64_t>(tag)));
        for (std::uint64_t i : indices) h = splitmix64(h ^ splitmix64(i + 0x632BE59BD9B4E019ULL));
        return Rng(h);
    }

    static constexpr result_type min() { return std::mt19937_64::min(); }
    static constexpr result_type max() { return std::mt19937_64::max(); }
    result_type operator()() { return engine_(); }

    /// Uniform on [0, 1) with 53 random bits.
    double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    /// True with probability p; p = 0 never fires, p = 1 always fires.
    bool bernoulli(double p) { return uniform() < p; }

    /// Standard normal via Box-Muller (one value per call).
    double normal() {
        const double u1 = 1.0 - uniform();  // (0, 1]
        const double u2 = uniform();
        return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
    }

    /// Uniform index in [0, n).
    std::size_t index(std::size_t n) {
        auto i = static_cast<std::size_t>(uniform() * static_cast<double>(n));
        return i < n ? i : n - 1;
    }

private:
    std::mt19937_64 engine_;
};

}  // namespace fans
