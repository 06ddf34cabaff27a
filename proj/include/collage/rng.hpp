#pragma once

#include <cmath>
#include <cstdint>
#include <random>

namespace collage {

// Seeded standard-normal stream. Box-Muller over mt19937_64 so the sequence
// does not depend on the standard library's distribution implementation.
class NormalRng {
public:
    explicit NormalRng(std::uint64_t seed) : engine_(seed) {}

    double uniform() {
        // 53 random bits -> [0, 1)
        return static_cast<double>(engine_() >> 11) * (1.0 / 9007199254740992.0);
    }

    double normal() {
        if (has_spare_) {
            has_spare_ = false;
            return spare_;
        }
        double u1 = uniform();
        while (u1 <= 0.0) {
            u1 = uniform();
        }
        const double u2 = uniform();
        const double radius = std::sqrt(-2.0 * std::log(u1));
        const double angle = 2.0 * 3.14159265358979323846 * u2;
        spare_ = radius * std::sin(angle);
        has_spare_ = true;
        return radius * std::cos(angle);
    }

private:
    std::mt19937_64 engine_;
    double spare_ = 0.0;
    bool has_spare_ = false;
};

// SplitMix64 finalizer; derives independent stream seeds from a job seed.
inline std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t stream) {
    std::uint64_t z = seed + 0x9E3779B97F4A7C15ull * (stream + 1);
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
    return z ^ (z >> 31);
}

enum class RngStream : std::uint64_t {
    Sampler = 0,
    LayerNoise = 1,
    Inversion = 2,
    InversionEval = 3,
};

inline NormalRng make_rng(std::uint64_t seed, RngStream stream) {
    return NormalRng(derive_seed(seed, static_cast<std::uint64_t>(stream)));
}

}  // namespace collage
