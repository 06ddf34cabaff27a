#include "collage/collage.hpp"

#include <algorithm>
#include <cmath>

#include "collage/errors.hpp"
#include "collage/text.hpp"

namespace collage {

namespace {

bool in_unit_range(double v) { return std::isfinite(v) && v >= 0.0 && v <= 1.0; }

std::string layer_label(const Layer& layer, std::size_t index) {
    return "layer " + std::to_string(index + 1) + " ('" + layer.name + "')";
}

// Binary coverage grid (alpha > 0) of a placed raster.
GridD coverage_of(const ImageF& placed) {
    GridD cov(placed.width, placed.height);
    for (int r = 0; r < placed.height; ++r) {
        for (int c = 0; c < placed.width; ++c) {
            cov.at(r, c) = placed.alpha(r, c) > 0.0f ? 1.0 : 0.0;
        }
    }
    return cov;
}

}  // namespace

bool Layer::operator==(const Layer& other) const {
    return name == other.name && image == other.image && placement == other.placement && text == other.text &&
           span == other.span && noise_level == other.noise_level &&
           controlnet_weight == other.controlnet_weight && attn_pos == other.attn_pos &&
           attn_neg == other.attn_neg && inverted_token == other.inverted_token;
}

std::size_t VisibilityMap::count(int layer_index) const {
    return static_cast<std::size_t>(std::count(indices.data().begin(), indices.data().end(), layer_index));
}

std::string span_substring(const std::string& text, TextSpan span) {
    if (span.begin > span.end) {
        throw ValidationError("text span begin exceeds end");
    }
    const auto b = utf8_byte_offset(text, span.begin);
    const auto e = utf8_byte_offset(text, span.end);
    return text.substr(b, e - b);
}

void validate_collage(const Collage& collage) {
    if (collage.canvas.width <= 0 || collage.canvas.height <= 0) {
        throw ValidationError("canvas dimensions must be positive");
    }
    const auto prompt_len = utf8_length(collage.prompt);
    for (std::size_t i = 0; i < collage.layers.size(); ++i) {
        const Layer& layer = collage.layers[i];
        const auto label = layer_label(layer, i);
        if (layer.image.width <= 0 || layer.image.height <= 0 ||
            layer.image.rgba.size() != static_cast<std::size_t>(layer.image.width) * layer.image.height * 4) {
            throw ValidationError(label + ": image raster is empty or malformed");
        }
        if (!std::isfinite(layer.placement.x) || !std::isfinite(layer.placement.y) ||
            !std::isfinite(layer.placement.scale) || layer.placement.scale <= 0.0) {
            throw ValidationError(label + ": placement must be finite with positive scale");
        }
        if (layer.span.begin > layer.span.end || layer.span.end > prompt_len) {
            throw ValidationError(label + ": text span [" + std::to_string(layer.span.begin) + ", " +
                                  std::to_string(layer.span.end) + ") is outside the prompt");
        }
        const auto addressed = span_substring(collage.prompt, layer.span);
        if (addressed != layer.text) {
            throw ValidationError(label + ": text span addresses '" + addressed + "' but layer text is '" +
                                  layer.text + "'");
        }
        if (!in_unit_range(layer.noise_level)) {
            throw ValidationError(label + ": noise_level must lie in [0, 1]");
        }
        if (!in_unit_range(layer.controlnet_weight)) {
            throw ValidationError(label + ": controlnet_weight must lie in [0, 1]");
        }
        if (!std::isfinite(layer.attn_pos) || layer.attn_pos < 0.0 || !std::isfinite(layer.attn_neg) ||
            layer.attn_neg < 0.0) {
            throw ValidationError(label + ": attention strengths must be finite and >= 0");
        }
    }
}

ImageF rasterize_layer(const Layer& layer, Dims canvas) {
    if (canvas.width <= 0 || canvas.height <= 0) {
        throw ValidationError("canvas dimensions must be positive");
    }
    const Placement& p = layer.placement;
    if (!std::isfinite(p.x) || !std::isfinite(p.y) || !std::isfinite(p.scale) || p.scale <= 0.0) {
        throw ValidationError("layer '" + layer.name + "': invalid placement");
    }
    const int sw = layer.image.width;
    const int sh = layer.image.height;
    if (sw <= 0 || sh <= 0) {
        throw ValidationError("layer '" + layer.name + "': empty image");
    }

    ImageF out(canvas.width, canvas.height, 0.0f);
    bool any_inside = false;
    for (int r = 0; r < canvas.height; ++r) {
        const double v = (r + 0.5 - p.y) / p.scale;
        if (v < 0.0 || v >= sh) {
            continue;
        }
        const double sv = std::clamp(v - 0.5, 0.0, static_cast<double>(sh - 1));
        const int y0 = static_cast<int>(std::floor(sv));
        const int y1 = std::min(y0 + 1, sh - 1);
        const double fy = sv - y0;
        for (int c = 0; c < canvas.width; ++c) {
            const double u = (c + 0.5 - p.x) / p.scale;
            if (u < 0.0 || u >= sw) {
                continue;
            }
            any_inside = true;
            const double su = std::clamp(u - 0.5, 0.0, static_cast<double>(sw - 1));
            const int x0 = static_cast<int>(std::floor(su));
            const int x1 = std::min(x0 + 1, sw - 1);
            const double fx = su - x0;
            float* dst = out.pixel(r, c);

            if (fx == 0.0 && fy == 0.0) {
                const std::uint8_t* src = layer.image.pixel(y0, x0);
                for (int ch = 0; ch < 4; ++ch) {
                    dst[ch] = static_cast<float>(src[ch]) / 255.0f;
                }
                continue;
            }

            // Interpolate premultiplied colour so transparent texels do not bleed.
            double acc[4] = {0.0, 0.0, 0.0, 0.0};
            const int ys[2] = {y0, y1};
            const int xs[2] = {x0, x1};
            const double wy[2] = {1.0 - fy, fy};
            const double wx[2] = {1.0 - fx, fx};
            for (int a = 0; a < 2; ++a) {
                for (int b = 0; b < 2; ++b) {
                    const double w = wy[a] * wx[b];
                    if (w == 0.0) {
                        continue;
                    }
                    const std::uint8_t* src = layer.image.pixel(ys[a], xs[b]);
                    const double alpha = src[3] / 255.0;
                    for (int ch = 0; ch < 3; ++ch) {
                        acc[ch] += w * alpha * (src[ch] / 255.0);
                    }
                    acc[3] += w * alpha;
                }
            }
            dst[3] = static_cast<float>(acc[3]);
            for (int ch = 0; ch < 3; ++ch) {
                dst[ch] = acc[3] > 0.0 ? static_cast<float>(std::clamp(acc[ch] / acc[3], 0.0, 1.0)) : 0.0f;
            }
        }
    }
    if (!any_inside) {
        throw ValidationError("layer '" + layer.name + "': placement is entirely off-canvas");
    }
    return out;
}

std::vector<ImageF> rasterize_layers(const Collage& collage) {
    std::vector<ImageF> placed;
    placed.reserve(collage.layers.size());
    for (const auto& layer : collage.layers) {
        placed.push_back(rasterize_layer(layer, collage.canvas));
    }
    return placed;
}

ImageF composite_layers(std::span<const ImageF> placed, std::size_t count) {
    if (placed.empty()) {
        throw ValidationError("compositing requires at least one layer");
    }
    count = std::min(count, placed.size());
    ImageF out(placed.front().width, placed.front().height, 0.0f);
    for (std::size_t k = 0; k < count; ++k) {
        const ImageF& src = placed[k];
        for (std::size_t i = 0; i < out.rgba.size(); i += 4) {
            const float sa = src.rgba[i + 3];
            if (sa <= 0.0f) {
                continue;
            }
            const float da = out.rgba[i + 3];
            const float keep = da * (1.0f - sa);
            const float oa = sa + keep;
            for (int ch = 0; ch < 3; ++ch) {
                out.rgba[i + ch] = (src.rgba[i + ch] * sa + out.rgba[i + ch] * keep) / oa;
            }
            out.rgba[i + 3] = oa;
        }
    }
    return out;
}

ImageF composite_layers(const Collage& collage, std::size_t count) {
    const auto placed = rasterize_layers(collage);
    return composite_layers(placed, count);
}

ImageF flatten_composite(const Collage& collage) {
    return composite_layers(collage, collage.layers.size());
}

VisibilityMap compute_visibility(std::span<const ImageF> placed, Dims resolution) {
    if (resolution.width <= 0 || resolution.height <= 0) {
        throw ValidationError("visibility resolution must be positive");
    }
    VisibilityMap vis{GridI(resolution, 0)};
    for (std::size_t k = 0; k < placed.size(); ++k) {
        const ImageF& layer = placed[k];
        if (resolution.width > layer.width || resolution.height > layer.height) {
            throw ValidationError("visibility resolution exceeds canvas resolution");
        }
        const GridD coverage = area_resample(coverage_of(layer), resolution);
        const int index = static_cast<int>(k) + 1;
        for (std::size_t i = 0; i < coverage.size(); ++i) {
            if (coverage[i] >= 0.5) {
                vis.indices[i] = index;
            }
        }
    }
    return vis;
}

VisibilityMap compute_visibility(const Collage& collage, Dims resolution) {
    const auto placed = rasterize_layers(collage);
    if (placed.empty()) {
        return VisibilityMap{GridI(resolution, 0)};
    }
    return compute_visibility(placed, resolution);
}

GridD layer_value_map(const VisibilityMap& visibility, std::span<const double> values, double uncovered) {
    GridD out(visibility.resolution(), uncovered);
    for (std::size_t i = 0; i < out.size(); ++i) {
        const int j = visibility.indices[i];
        if (j > 0) {
            if (static_cast<std::size_t>(j) > values.size()) {
                throw std::out_of_range("visibility references a layer without a value");
            }
            out[i] = values[static_cast<std::size_t>(j) - 1];
        }
    }
    return out;
}

}  // namespace collage
