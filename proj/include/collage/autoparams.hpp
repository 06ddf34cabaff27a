#pragma once

#include <vector>

#include "collage/collage.hpp"

namespace collage {

struct Range {
    double lo = 0.0;
    double hi = 1.0;
};

struct AutoParamsConfig {
    // Back layers get `noise.hi`, front layers `noise.lo`.
    Range noise{0.55, 0.85};
    // Back layers get `controlnet.lo`, front layers `controlnet.hi`.
    Range controlnet{0.2, 1.0};
    double attention_base = 1.0;
    double attention_boost = 1.5;
    // Visible-area fraction below which a layer counts as small.
    double small_threshold = 0.10;
};

struct LayerParams {
    double noise_level = 0.0;
    double controlnet_weight = 0.0;
    double attn_pos = 0.0;
    double attn_neg = 0.0;
    double visible_fraction = 0.0;
    bool boosted = false;
};

// Depth rank is the index in the layer list. With n layers, layer k (0-based)
// sits at frac = k / (n - 1), or 0.5 for a single layer. Attention strengths
// are boosted for front-half layers (frac > 0.5) and for layers whose visible
// area at canvas resolution is below the small threshold.
std::vector<LayerParams> auto_params(const Collage& collage, const AutoParamsConfig& config = {});

// Returns a copy of the collage with the parameters written into its layers.
Collage apply_auto_params(const Collage& collage, const AutoParamsConfig& config = {});

}  // namespace collage
