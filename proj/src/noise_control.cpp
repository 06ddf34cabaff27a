#include "collage/noise_control.hpp"

#include <algorithm>
#include <stdexcept>

namespace collage {

NoiseImage build_noise_image(std::span<const ImageF> placed, std::span<const double> levels, Dims latent,
                             double blur_sigma, double uncovered) {
    if (levels.size() != placed.size()) {
        throw std::invalid_argument("build_noise_image: one noise level per layer required");
    }
    const auto vis = compute_visibility(placed, latent);
    GridD raw = layer_value_map(vis, levels, uncovered);
    const auto [lo, hi] = std::minmax_element(raw.data().begin(), raw.data().end());
    const double min_v = *lo;
    const double max_v = *hi;
    NoiseImage out;
    out.blur_sigma = blur_sigma;
    out.h = gaussian_blur(raw, blur_sigma);
    for (double& v : out.h.data()) {
        v = std::clamp(v, min_v, max_v);
    }
    return out;
}

NoiseImage build_noise_image(const Collage& collage, Dims latent, double blur_sigma, double uncovered) {
    std::vector<double> levels;
    for (const auto& layer : collage.layers) {
        levels.push_back(layer.noise_level);
    }
    const auto placed = rasterize_layers(collage);
    return build_noise_image(placed, levels, latent, blur_sigma, uncovered);
}

BlendMask blend_mask(const NoiseImage& noise, double t) {
    if (!(t >= 0.0 && t <= 1.0)) {
        throw std::invalid_argument("blend_mask: t must lie in [0, 1]");
    }
    BlendMask mask;
    mask.time = t;
    mask.m = Grid<std::uint8_t>(noise.h.dims(), 0);
    for (std::size_t i = 0; i < noise.h.size(); ++i) {
        mask.m[i] = t <= noise.h[i] ? 1 : 0;
    }
    return mask;
}

Latent blended_step(const Latent& solver_out, const BlendMask& mask, const Latent& composite, double sigma_next,
                    NormalRng& rng) {
    if (sigma_next < 0.0) {
        throw std::invalid_argument("blended_step: sigma must be >= 0");
    }
    require_same_shape(solver_out, composite, "blended_step");
    if (mask.m.dims() != solver_out.dims()) {
        throw std::invalid_argument("blended_step: mask resolution differs from the latent");
    }
    Latent out = solver_out;
    const std::size_t plane = solver_out.plane();
    for (int c = 0; c < solver_out.channels; ++c) {
        for (std::size_t i = 0; i < plane; ++i) {
            const double n = rng.normal();
            const std::size_t idx = c * plane + i;
            if (mask.m[i] == 0) {
                out.data[idx] = composite.data[idx] + sigma_next * n;
            }
        }
    }
    return out;
}

}  // namespace collage
