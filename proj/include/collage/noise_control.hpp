#pragma once

#include <cstdint>
#include <span>

#include "collage/collage.hpp"
#include "collage/rng.hpp"
#include "collage/tensor.hpp"

namespace collage {

// Per-cell noise level h at latent resolution, after blurring.
struct NoiseImage {
    GridD h;
    double blur_sigma = 0.0;
};

struct BlendMask {
    Grid<std::uint8_t> m;
    double time = 0.0;
};

// h = noise_level of the visible layer per latent cell (`uncovered` where no
// layer is visible), then Gaussian-blurred with `blur_sigma` latent cells and
// clamped to the range of the unblurred values.
NoiseImage build_noise_image(const Collage& collage, Dims latent, double blur_sigma, double uncovered);
NoiseImage build_noise_image(std::span<const ImageF> placed, std::span<const double> levels, Dims latent,
                             double blur_sigma, double uncovered);

// m = 1 iff t <= h: the cell is released for free denoising at time t.
BlendMask blend_mask(const NoiseImage& noise, double t);

// x' = m * x + (1 - m) * (x_c + sigma_next * n), n ~ N(0, 1) drawn for every
// element from `rng`. The mask broadcasts over channels.
Latent blended_step(const Latent& solver_out, const BlendMask& mask, const Latent& composite, double sigma_next,
                    NormalRng& rng);

}  // namespace collage
