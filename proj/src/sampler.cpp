#include "collage/sampler.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace collage {

std::vector<double> time_grid(int steps, double start_noise) {
    if (steps < 1) {
        throw std::invalid_argument("time_grid: steps must be >= 1");
    }
    if (!(start_noise >= 0.0 && start_noise <= 1.0)) {
        throw std::invalid_argument("time_grid: start noise must lie in [0, 1]");
    }
    const int m = static_cast<int>(std::ceil(steps * start_noise - 1e-9));
    std::vector<double> grid;
    if (m <= 0) {
        grid.push_back(0.0);
        return grid;
    }
    for (int k = 0; k <= m; ++k) {
        grid.push_back(start_noise * static_cast<double>(m - k) / m);
    }
    return grid;
}

AncestralSigmas ancestral_sigmas(double sigma, double sigma_next) {
    if (sigma_next <= 0.0 || sigma <= 0.0) {
        return {0.0, 0.0};
    }
    const double up = std::min(sigma_next, std::sqrt(sigma_next * sigma_next * (sigma * sigma - sigma_next * sigma_next) /
                                                     (sigma * sigma)));
    return {std::sqrt(sigma_next * sigma_next - up * up), up};
}

Latent euler_ancestral_step(const Latent& x, const Latent& denoised, double sigma, double sigma_next, NormalRng& rng) {
    require_same_shape(x, denoised, "euler_ancestral_step");
    if (sigma <= 0.0 || sigma_next < 0.0) {
        throw std::invalid_argument("euler_ancestral_step: need sigma > 0 and sigma_next >= 0");
    }
    const auto s = ancestral_sigmas(sigma, sigma_next);
    const double dt = s.down - sigma;
    Latent out = x;
    for (std::size_t i = 0; i < out.data.size(); ++i) {
        const double d = (x.data[i] - denoised.data[i]) / sigma;
        out.data[i] = x.data[i] + d * dt;
    }
    if (sigma_next > 0.0) {
        for (double& v : out.data) {
            v += rng.normal() * s.up;
        }
    }
    return out;
}

Latent gaussian_like(const Latent& shape, NormalRng& rng) {
    Latent out(shape.channels, shape.height, shape.width);
    for (double& v : out.data) {
        v = rng.normal();
    }
    return out;
}

}  // namespace collage
