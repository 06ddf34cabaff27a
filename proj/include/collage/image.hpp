#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "collage/grid.hpp"

namespace collage {

// 8-bit straight-alpha RGBA raster. This is the storage format for layer
// assets and generated outputs.
struct Image8 {
    int width = 0;
    int height = 0;
    std::vector<std::uint8_t> rgba;

    Image8() = default;
    Image8(int w, int h, std::uint8_t fill = 0);

    Dims dims() const { return {width, height}; }
    std::uint8_t* pixel(int row, int col) { return &rgba[(static_cast<std::size_t>(row) * width + col) * 4]; }
    const std::uint8_t* pixel(int row, int col) const {
        return &rgba[(static_cast<std::size_t>(row) * width + col) * 4];
    }
    bool operator==(const Image8&) const = default;
};

// Floating point straight-alpha RGBA raster, channels in [0, 1].
struct ImageF {
    int width = 0;
    int height = 0;
    std::vector<float> rgba;

    ImageF() = default;
    ImageF(int w, int h, float fill = 0.0f);

    Dims dims() const { return {width, height}; }
    float* pixel(int row, int col) { return &rgba[(static_cast<std::size_t>(row) * width + col) * 4]; }
    const float* pixel(int row, int col) const { return &rgba[(static_cast<std::size_t>(row) * width + col) * 4]; }
    float alpha(int row, int col) const { return pixel(row, col)[3]; }
    bool operator==(const ImageF&) const = default;
};

ImageF to_float(const Image8& image);
// Rounds to nearest and clamps to [0, 255].
Image8 to_bytes(const ImageF& image);

GridD alpha_channel(const ImageF& image);

// Lossless PNG (8-bit RGBA) encode/decode via libpng.
std::vector<std::uint8_t> encode_png(const Image8& image);
Image8 decode_png(std::span<const std::uint8_t> bytes);
void write_png(const std::filesystem::path& path, const Image8& image);
Image8 read_png(const std::filesystem::path& path);

std::vector<std::uint8_t> read_file_bytes(const std::filesystem::path& path);
void write_file_bytes(const std::filesystem::path& path, std::span<const std::uint8_t> bytes);

}  // namespace collage
