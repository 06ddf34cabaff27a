#include "collage/image.hpp"

#include <png.h>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iterator>
#include <stdexcept>

namespace collage {

Image8::Image8(int w, int h, std::uint8_t fill)
    : width(w), height(h), rgba(static_cast<std::size_t>(w) * h * 4, fill) {}

ImageF::ImageF(int w, int h, float fill)
    : width(w), height(h), rgba(static_cast<std::size_t>(w) * h * 4, fill) {}

ImageF to_float(const Image8& image) {
    ImageF out(image.width, image.height);
    std::transform(image.rgba.begin(), image.rgba.end(), out.rgba.begin(),
                   [](std::uint8_t v) { return static_cast<float>(v) / 255.0f; });
    return out;
}

Image8 to_bytes(const ImageF& image) {
    Image8 out(image.width, image.height);
    std::transform(image.rgba.begin(), image.rgba.end(), out.rgba.begin(), [](float v) {
        const float scaled = std::round(std::clamp(v, 0.0f, 1.0f) * 255.0f);
        return static_cast<std::uint8_t>(scaled);
    });
    return out;
}

GridD alpha_channel(const ImageF& image) {
    GridD out(image.width, image.height);
    for (int r = 0; r < image.height; ++r) {
        for (int c = 0; c < image.width; ++c) {
            out.at(r, c) = image.alpha(r, c);
        }
    }
    return out;
}

std::vector<std::uint8_t> encode_png(const Image8& image) {
    if (image.width <= 0 || image.height <= 0) {
        throw std::invalid_argument("encode_png: empty image");
    }
    png_image desc{};
    desc.version = PNG_IMAGE_VERSION;
    desc.width = static_cast<png_uint_32>(image.width);
    desc.height = static_cast<png_uint_32>(image.height);
    desc.format = PNG_FORMAT_RGBA;

    png_alloc_size_t size = 0;
    if (!png_image_write_to_memory(&desc, nullptr, &size, 0, image.rgba.data(), 0, nullptr)) {
        throw std::runtime_error(std::string("png size query failed: ") + desc.message);
    }
    std::vector<std::uint8_t> out(size);
    if (!png_image_write_to_memory(&desc, out.data(), &size, 0, image.rgba.data(), 0, nullptr)) {
        throw std::runtime_error(std::string("png encode failed: ") + desc.message);
    }
    out.resize(size);
    return out;
}

Image8 decode_png(std::span<const std::uint8_t> bytes) {
    png_image desc{};
    desc.version = PNG_IMAGE_VERSION;
    if (!png_image_begin_read_from_memory(&desc, bytes.data(), bytes.size())) {
        throw std::runtime_error(std::string("png decode failed: ") + desc.message);
    }
    desc.format = PNG_FORMAT_RGBA;
    Image8 out(static_cast<int>(desc.width), static_cast<int>(desc.height));
    if (!png_image_finish_read(&desc, nullptr, out.rgba.data(), 0, nullptr)) {
        png_image_free(&desc);
        throw std::runtime_error(std::string("png decode failed: ") + desc.message);
    }
    return out;
}

void write_png(const std::filesystem::path& path, const Image8& image) {
    write_file_bytes(path, encode_png(image));
}

Image8 read_png(const std::filesystem::path& path) {
    const auto bytes = read_file_bytes(path);
    return decode_png(bytes);
}

std::vector<std::uint8_t> read_file_bytes(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw std::runtime_error("cannot open file: " + path.string());
    }
    return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

void write_file_bytes(const std::filesystem::path& path, std::span<const std::uint8_t> bytes) {
    if (path.has_parent_path()) {
        std::filesystem::create_directories(path.parent_path());
    }
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) {
        throw std::runtime_error("cannot write file: " + path.string());
    }
    out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
}

}  // namespace collage
