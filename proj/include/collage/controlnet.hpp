#pragma once

#include <map>
#include <span>
#include <vector>

#include "collage/attention_hooks.hpp"
#include "collage/collage.hpp"
#include "collage/tensor.hpp"

namespace collage {

// Per-pixel ControlNet weight at canvas resolution: the controlnet_weight of
// the visible layer, 0 where no layer is visible. Bilinear resizes are cached
// per feature resolution, so an instance belongs to one job.
class ControlWeightMap {
public:
    ControlWeightMap() = default;
    explicit ControlWeightMap(GridD w) : w_(std::move(w)) {}

    const GridD& weights() const { return w_; }
    const GridD& resized(Dims dims) const;

private:
    GridD w_;
    mutable std::map<Dims, GridD, DimsLess> cache_;
};

ControlWeightMap build_weight_map(const Collage& collage);
ControlWeightMap build_weight_map(std::span<const ImageF> placed, std::span<const double> weights, Dims canvas);

// Multiplies every channel of each feature map by the map resized to its
// spatial dims.
std::vector<Tensor3> apply_weights(std::vector<Tensor3> features, const ControlWeightMap& map);

// Standard ControlNet conditioning scale.
std::vector<Tensor3> apply_scalar_weight(std::vector<Tensor3> features, double scale);

// Binary Canny edge map (1 = edge) of the image luminance, alpha-premultiplied
// over black. Thresholds apply to the Sobel gradient magnitude.
GridD canny_edges(const ImageF& image, double low = 0.1, double high = 0.25, double blur_sigma = 1.0);

}  // namespace collage
