#pragma once

#include <cstdint>
#include <filesystem>
#include <string>

#include "collage/collage.hpp"
#include "collage/mock_backend.hpp"

namespace fixtures {

struct Rgb {
    std::uint8_t r, g, b;
};

// Solid raster with a faint diagonal ramp so edges and textures are not flat.
collage::Image8 solid(int w, int h, Rgb color, std::uint8_t alpha = 255);

// Layer whose span is the first occurrence of `text` in `prompt`.
collage::Layer make_layer(const std::string& prompt, const std::string& name, const std::string& text,
                          collage::Image8 image, double x, double y, double noise_level);

// 64x64 canvas, latent 8x8. Back to front: bento box, rice, edamame, ginger,
// sushi with noise levels 0.5, 0.5, 0.6, 0.8, 0.8.
collage::Collage bento();
inline constexpr const char* kBentoPrompt = "a bento box with rice, edamame, ginger, and sushi";

// Full-canvas background plus a sweater layer with a multi-word span.
collage::Collage sweater();
// Sea, ship, rocks and lighthouse; high ControlNet weight on the objects.
collage::Collage ship();
// Table, cake and candles: the two-refinement workflow scene.
collage::Collage cake();

collage::MockBackend backend(std::uint64_t seed = 1);

// Fresh empty directory under the system temp dir.
std::filesystem::path temp_dir(const std::string& tag);

}  // namespace fixtures
