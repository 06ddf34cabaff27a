#include "collage/autoparams.hpp"

#include "collage/errors.hpp"

namespace collage {

std::vector<LayerParams> auto_params(const Collage& collage, const AutoParamsConfig& config) {
    const std::size_t n = collage.layers.size();
    if (n == 0) {
        throw ValidationError("auto parameters need at least one layer");
    }
    if (config.noise.lo > config.noise.hi || config.controlnet.lo > config.controlnet.hi) {
        throw ValidationError("auto parameter ranges must have lo <= hi");
    }
    const VisibilityMap vis = compute_visibility(collage, collage.canvas);
    const double cells = static_cast<double>(collage.canvas.cells());
    std::vector<LayerParams> out(n);
    for (std::size_t k = 0; k < n; ++k) {
        const double frac = n == 1 ? 0.5 : static_cast<double>(k) / static_cast<double>(n - 1);
        LayerParams& p = out[k];
        p.noise_level = config.noise.hi - frac * (config.noise.hi - config.noise.lo);
        p.controlnet_weight = config.controlnet.lo + frac * (config.controlnet.hi - config.controlnet.lo);
        p.visible_fraction = static_cast<double>(vis.count(static_cast<int>(k) + 1)) / cells;
        p.boosted = (n > 1 && frac > 0.5) || p.visible_fraction < config.small_threshold;
        const double strength = config.attention_base * (p.boosted ? config.attention_boost : 1.0);
        p.attn_pos = strength;
        p.attn_neg = strength;
    }
    return out;
}

Collage apply_auto_params(const Collage& collage, const AutoParamsConfig& config) {
    Collage out = collage;
    const auto params = auto_params(collage, config);
    for (std::size_t k = 0; k < params.size(); ++k) {
        out.layers[k].noise_level = params[k].noise_level;
        out.layers[k].controlnet_weight = params[k].controlnet_weight;
        out.layers[k].attn_pos = params[k].attn_pos;
        out.layers[k].attn_neg = params[k].attn_neg;
    }
    return out;
}

}  // namespace collage
