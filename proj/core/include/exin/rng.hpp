#pragma once

#include <cmath>
#include <cstdint>
#include <random>
#include <span>

namespace exin {

// Deterministic random stream. The mersenne engine's raw output is pinned by
// the standard, and all variate transforms are implemented here rather than
// through std:: distributions, so sequences are bit-identical across standard
// library implementations. Streams for chains/replicates are derived from a
// base seed via splitmix64 so they are statistically independent.
class Rng {
public:
    explicit Rng(std::uint64_t seed) : engine_(seed) {}

    static std::uint64_t mix(std::uint64_t seed, std::uint64_t stream) {
        std::uint64_t z = seed + 0x9e3779b97f4a7c15ULL * (stream + 1);
        z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
        z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
        return z ^ (z >> 31);
    }

    static Rng derive(std::uint64_t seed, std::uint64_t stream) { return Rng(mix(seed, stream)); }

    // Uniform on [0, 1) with 53-bit resolution.
    double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }

    // Uniform on (0, 1]; safe as a log() argument.
    double uniform_pos() { return 1.0 - uniform(); }

    double exponential(double rate) { return -std::log(uniform_pos()) / rate; }

    double normal() {
        const double u1 = uniform_pos();
        const double u2 = uniform();
        return std::sqrt(-2.0 * std::log(u1)) * std::cos(6.283185307179586 * u2);
    }

    double normal(double mean, double sd) { return mean + sd * normal(); }

    // Index sampled with probability weights[i] / total. Caller supplies the
    // precomputed total to keep the draw O(chosen index).
    std::size_t categorical(std::span<const double> weights, double total) {
        double u = uniform() * total;
        for (std::size_t i = 0; i + 1 < weights.size(); ++i) {
            u -= weights[i];
            if (u < 0.0) return i;
        }
        return weights.empty() ? 0 : weights.size() - 1;
    }

    std::uint64_t raw() { return engine_(); }

private:
    std::mt19937_64 engine_;
};

} // namespace exin
