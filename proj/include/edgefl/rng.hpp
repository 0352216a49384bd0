#pragma once

#include <cmath>
#include <cstdint>
#include <utility>
#include <vector>

namespace edgefl {

// Deterministic RNG helpers. Everything seeded in this codebase goes through
// these so that runs are reproducible bit-for-bit regardless of the standard
// library's distribution implementations.

inline uint64_t splitmix64(uint64_t x) {
    x += 0x9E3779B97F4A7C15ULL;
    uint64_t z = x;
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
    return z ^ (z >> 31);
}

// xoshiro-free, minimal splitmix-based stream generator.
class Rng {
public:
    explicit Rng(uint64_t seed) : state_(seed) {}

    uint64_t next_u64() {
        state_ += 0x9E3779B97F4A7C15ULL;
        uint64_t z = state_;
        z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
        z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
        return z ^ (z >> 31);
    }

    // Uniform in [0, 1) with 53 bits of entropy.
    double next_unit() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

    // Uniform in [lo, hi).
    double next_uniform(double lo, double hi) { return lo + (hi - lo) * next_unit(); }

    // Uniform integer in [0, n). n must be > 0. Modulo bias is irrelevant at
    // the scales used here (n << 2^64).
    uint64_t next_below(uint64_t n) { return next_u64() % n; }

    // Standard normal via Box-Muller (one value per call; simple and portable).
    double next_gaussian() {
        double u1 = next_unit();
        double u2 = next_unit();
        while (u1 <= 0.0) u1 = next_unit();
        const double two_pi = 6.283185307179586476925286766559;
        return std::sqrt(-2.0 * std::log(u1)) * std::cos(two_pi * u2);
    }

private:
    uint64_t state_;
};

// In-place Fisher-Yates shuffle.
template <typename T>
void shuffle(std::vector<T>& v, Rng& rng) {
    for (std::size_t i = v.size(); i > 1; --i) {
        std::size_t j = static_cast<std::size_t>(rng.next_below(i));
        std::swap(v[i - 1], v[j]);
    }
}

// Seeds derived from one experiment seed. Shuffle and split seeds are shared
// by every node (Alg.-style single train config); both the EdgeFL peers and
// the FedAvg baseline must use these so their trajectories line up exactly.
struct ExperimentSeeds {
    uint64_t shuffle_seed;
    uint64_t split_seed;
};

inline ExperimentSeeds derive_experiment_seeds(uint64_t experiment_seed) {
    return ExperimentSeeds{splitmix64(experiment_seed ^ 0x5348554646ULL),
                           splitmix64(experiment_seed ^ 0x53504C4954ULL)};
}

// Peer-selection stream, per node so peers do not draw identical subsets.
inline uint64_t derive_peer_rng_seed(uint64_t experiment_seed, int node_id) {
    return splitmix64(experiment_seed ^ (0xA5A5A5A5ULL + static_cast<uint64_t>(node_id) * 0x9E3779B9ULL));
}

} // namespace edgefl
