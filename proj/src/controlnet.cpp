#include "collage/controlnet.hpp"

#include <algorithm>
#include <cmath>
#include <deque>
#include <stdexcept>

namespace collage {

const GridD& ControlWeightMap::resized(Dims dims) const {
    auto it = cache_.find(dims);
    if (it == cache_.end()) {
        it = cache_.emplace(dims, bilinear_resize(w_, dims)).first;
    }
    return it->second;
}

ControlWeightMap build_weight_map(std::span<const ImageF> placed, std::span<const double> weights, Dims canvas) {
    if (weights.size() != placed.size()) {
        throw std::invalid_argument("build_weight_map: one weight per layer required");
    }
    return ControlWeightMap(layer_value_map(compute_visibility(placed, canvas), weights, 0.0));
}

ControlWeightMap build_weight_map(const Collage& collage) {
    std::vector<double> weights;
    for (const auto& layer : collage.layers) {
        weights.push_back(layer.controlnet_weight);
    }
    const auto placed = rasterize_layers(collage);
    return build_weight_map(placed, weights, collage.canvas);
}

std::vector<Tensor3> apply_weights(std::vector<Tensor3> features, const ControlWeightMap& map) {
    for (Tensor3& f : features) {
        const GridD& w = map.resized(f.dims());
        const std::size_t plane = f.plane();
        for (int c = 0; c < f.channels; ++c) {
            for (std::size_t i = 0; i < plane; ++i) {
                f.data[c * plane + i] *= w[i];
            }
        }
    }
    return features;
}

std::vector<Tensor3> apply_scalar_weight(std::vector<Tensor3> features, double scale) {
    for (Tensor3& f : features) {
        for (double& v : f.data) {
            v *= scale;
        }
    }
    return features;
}

GridD canny_edges(const ImageF& image, double low, double high, double blur_sigma) {
    const int h = image.height;
    const int w = image.width;
    GridD lum(Dims{w, h});
    for (int r = 0; r < h; ++r) {
        for (int c = 0; c < w; ++c) {
            const float* px = image.pixel(r, c);
            lum.at(r, c) = (0.299 * px[0] + 0.587 * px[1] + 0.114 * px[2]) * px[3];
        }
    }
    const GridD smooth = gaussian_blur(lum, blur_sigma);
    auto px = [&](int r, int c) {
        r = std::clamp(r, 0, h - 1);
        c = std::clamp(c, 0, w - 1);
        return smooth.at(r, c);
    };
    GridD mag(Dims{w, h});
    Grid<int> dir(Dims{w, h});
    for (int r = 0; r < h; ++r) {
        for (int c = 0; c < w; ++c) {
            const double gx = (px(r - 1, c + 1) + 2 * px(r, c + 1) + px(r + 1, c + 1)) -
                              (px(r - 1, c - 1) + 2 * px(r, c - 1) + px(r + 1, c - 1));
            const double gy = (px(r + 1, c - 1) + 2 * px(r + 1, c) + px(r + 1, c + 1)) -
                              (px(r - 1, c - 1) + 2 * px(r - 1, c) + px(r - 1, c + 1));
            mag.at(r, c) = std::hypot(gx, gy);
            double angle = std::atan2(gy, gx) * 180.0 / 3.14159265358979323846;
            if (angle < 0) angle += 180.0;
            dir.at(r, c) = angle < 22.5 || angle >= 157.5 ? 0 : angle < 67.5 ? 1 : angle < 112.5 ? 2 : 3;
        }
    }
    // non-maximum suppression along the gradient direction
    static const int offsets[4][2] = {{0, 1}, {1, 1}, {1, 0}, {1, -1}};
    GridD thin(Dims{w, h});
    for (int r = 0; r < h; ++r) {
        for (int c = 0; c < w; ++c) {
            const double m = mag.at(r, c);
            const int dr = offsets[dir.at(r, c)][0];
            const int dc = offsets[dir.at(r, c)][1];
            auto at = [&](int rr, int cc) {
                return rr < 0 || cc < 0 || rr >= h || cc >= w ? 0.0 : mag.at(rr, cc);
            };
            if (m >= at(r + dr, c + dc) && m >= at(r - dr, c - dc)) {
                thin.at(r, c) = m;
            }
        }
    }
    // hysteresis
    GridD edges(Dims{w, h}, 0.0);
    std::deque<std::pair<int, int>> queue;
    for (int r = 0; r < h; ++r) {
        for (int c = 0; c < w; ++c) {
            if (thin.at(r, c) >= high) {
                edges.at(r, c) = 1.0;
                queue.emplace_back(r, c);
            }
        }
    }
    while (!queue.empty()) {
        const auto [r, c] = queue.front();
        queue.pop_front();
        for (int dr = -1; dr <= 1; ++dr) {
            for (int dc = -1; dc <= 1; ++dc) {
                const int rr = r + dr;
                const int cc = c + dc;
                if (rr < 0 || cc < 0 || rr >= h || cc >= w || edges.at(rr, cc) != 0.0) continue;
                if (thin.at(rr, cc) >= low) {
                    edges.at(rr, cc) = 1.0;
                    queue.emplace_back(rr, cc);
                }
            }
        }
    }
    return edges;
}

}  // namespace collage
