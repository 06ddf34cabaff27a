#pragma once

#include <vector>

#include "collage/rng.hpp"
#include "collage/tensor.hpp"

namespace collage {

// Normalized times s * (M - k) / M for k = 0..M with M = ceil(steps * s).
// A partial SDEdit run over [0, s] takes as many steps as that portion of a
// full `steps`-step schedule. s == 0 gives the single time {0}.
std::vector<double> time_grid(int steps, double start_noise);

struct AncestralSigmas {
    double down = 0.0;
    double up = 0.0;
};

AncestralSigmas ancestral_sigmas(double sigma, double sigma_next);

// One Euler ancestral step from sigma to sigma_next given the denoised
// estimate. Noise is drawn only when sigma_next > 0.
Latent euler_ancestral_step(const Latent& x, const Latent& denoised, double sigma, double sigma_next, NormalRng& rng);

Latent gaussian_like(const Latent& shape, NormalRng& rng);

}  // namespace collage
