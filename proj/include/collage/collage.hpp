#pragma once

#include <cstddef>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "collage/grid.hpp"
#include "collage/image.hpp"

namespace collage {

// Maps a layer raster onto the canvas: source pixel (u, v) lands at
// (x + u * scale, y + v * scale).
struct Placement {
    double x = 0.0;
    double y = 0.0;
    double scale = 1.0;

    bool operator==(const Placement&) const = default;
};

// Half-open [begin, end) range of Unicode code points in the collage prompt.
struct TextSpan {
    std::size_t begin = 0;
    std::size_t end = 0;

    std::size_t length() const { return end - begin; }
    bool empty() const { return end == begin; }
    bool overlaps(const TextSpan& other) const { return begin < other.end && other.begin < end; }
    bool operator==(const TextSpan&) const = default;
};

struct Layer {
    std::string name;
    Image8 image;
    Placement placement;
    std::string text;
    TextSpan span;
    double noise_level = 0.75;
    double controlnet_weight = 1.0;
    double attn_pos = 1.0;
    double attn_neg = 1.0;
    // Project-relative path of a learned modifier token blob.
    std::optional<std::string> inverted_token;
    // Project-relative asset filename; assigned on save when empty. Storage
    // detail only, so it does not take part in equality.
    std::string image_file;

    bool operator==(const Layer& other) const;
};

// Global prompt plus an ordered back-to-front layer stack. Layer k of the
// stack is "layer index k + 1" wherever indices are 1-based (0 = no layer).
struct Collage {
    std::string prompt;
    std::string negative_prompt;
    Dims canvas;
    std::vector<Layer> layers;

    bool operator==(const Collage&) const = default;
};

// Per-cell index of the topmost layer with nonzero alpha, 0 where uncovered.
struct VisibilityMap {
    GridI indices;

    Dims resolution() const { return indices.dims(); }
    int at(int row, int col) const { return indices.at(row, col); }
    std::size_t count(int layer_index) const;
    bool operator==(const VisibilityMap&) const = default;
};

// Throws ValidationError naming the offending layer or field.
void validate_collage(const Collage& collage);

// Substring of `text` addressed by a code-point span; throws on out-of-range.
std::string span_substring(const std::string& text, TextSpan span);

ImageF rasterize_layer(const Layer& layer, Dims canvas);
std::vector<ImageF> rasterize_layers(const Collage& collage);

// Porter-Duff "over", back to front, of the first `count` layers.
ImageF composite_layers(std::span<const ImageF> placed, std::size_t count);
ImageF composite_layers(const Collage& collage, std::size_t count);
ImageF flatten_composite(const Collage& collage);

// At canvas resolution a layer covers a cell iff alpha > 0. At any other
// resolution the binary coverage is area-averaged and a cell counts as
// covered when the averaged coverage is >= 0.5.
VisibilityMap compute_visibility(const Collage& collage, Dims resolution);
VisibilityMap compute_visibility(std::span<const ImageF> placed, Dims resolution);

// Paints each cell with the value of its visible layer (values[j - 1] for
// layer index j) and `uncovered` where no layer is visible. Shared by the
// noise image and the ControlNet weight map.
GridD layer_value_map(const VisibilityMap& visibility, std::span<const double> values, double uncovered);

}  // namespace collage
