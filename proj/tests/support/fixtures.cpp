#include "fixtures.hpp"

#include <atomic>
#include <stdexcept>
#include <unistd.h>

#include "collage/text.hpp"

namespace fixtures {

using namespace collage;

Image8 solid(int w, int h, Rgb color, std::uint8_t alpha) {
    Image8 img(w, h);
    for (int r = 0; r < h; ++r) {
        for (int c = 0; c < w; ++c) {
            std::uint8_t* px = img.pixel(r, c);
            const int ramp = (r + c) % 8;
            px[0] = static_cast<std::uint8_t>(std::min(255, color.r + ramp));
            px[1] = static_cast<std::uint8_t>(std::min(255, color.g + ramp));
            px[2] = static_cast<std::uint8_t>(std::min(255, color.b + ramp));
            px[3] = alpha;
        }
    }
    return img;
}

Layer make_layer(const std::string& prompt, const std::string& name, const std::string& text, Image8 image,
                 double x, double y, double noise_level) {
    const std::size_t byte = prompt.find(text);
    if (byte == std::string::npos) throw std::invalid_argument("layer text not in prompt: " + text);
    Layer l;
    l.name = name;
    l.text = text;
    l.image = std::move(image);
    l.placement = {x, y, 1.0};
    const std::size_t begin = utf8_codepoint_index(prompt, byte);
    l.span = {begin, begin + utf8_length(text)};
    l.noise_level = noise_level;
    return l;
}

Collage bento() {
    Collage c;
    c.prompt = kBentoPrompt;
    c.negative_prompt = "blurry, low quality";
    c.canvas = {64, 64};
    c.layers.push_back(make_layer(c.prompt, "bento box", "bento box", solid(64, 64, {90, 40, 20}), 0, 0, 0.5));
    c.layers.push_back(make_layer(c.prompt, "rice", "rice", solid(24, 32, {235, 235, 225}), 8, 8, 0.5));
    c.layers.push_back(make_layer(c.prompt, "edamame", "edamame", solid(16, 16, {80, 170, 60}), 40, 8, 0.6));
    c.layers.push_back(make_layer(c.prompt, "ginger", "ginger", solid(16, 16, {240, 170, 170}), 40, 40, 0.8));
    c.layers.push_back(make_layer(c.prompt, "sushi", "sushi", solid(24, 16, {230, 90, 60}), 8, 40, 0.8));
    return c;
}

Collage sweater() {
    Collage c;
    c.prompt = "a man wearing a blue and green striped sweater in a park";
    c.canvas = {64, 64};
    c.layers.push_back(make_layer(c.prompt, "park", "a park", solid(64, 64, {60, 120, 50}), 0, 0, 0.8));
    c.layers.push_back(make_layer(c.prompt, "sweater", "blue and green striped sweater",
                                  solid(32, 32, {40, 90, 160}), 16, 24, 0.6));
    return c;
}

Collage ship() {
    Collage c;
    c.prompt = "a ship sailing past rocks and a lighthouse on a stormy sea";
    c.canvas = {64, 64};
    c.layers.push_back(make_layer(c.prompt, "sea", "a stormy sea", solid(64, 64, {30, 60, 110}), 0, 0, 0.8));
    c.layers.push_back(make_layer(c.prompt, "ship", "ship", solid(24, 16, {120, 80, 40}), 8, 24, 0.6));
    c.layers.push_back(make_layer(c.prompt, "rocks", "rocks", solid(16, 8, {100, 100, 100}), 40, 48, 0.6));
    c.layers.push_back(make_layer(c.prompt, "lighthouse", "lighthouse", solid(8, 32, {230, 230, 230}), 48, 8, 0.6));
    c.layers[0].controlnet_weight = 0.2;
    for (std::size_t i = 1; i < c.layers.size(); ++i) c.layers[i].controlnet_weight = 0.9;
    return c;
}

Collage cake() {
    Collage c;
    c.prompt = "a birthday cake with candles on a wooden table";
    c.canvas = {64, 64};
    c.layers.push_back(make_layer(c.prompt, "table", "a wooden table", solid(64, 64, {140, 100, 60}), 0, 0, 0.7));
    c.layers.push_back(make_layer(c.prompt, "cake", "birthday cake", solid(32, 24, {245, 220, 230}), 16, 32, 0.7));
    c.layers.push_back(make_layer(c.prompt, "candles", "candles", solid(24, 8, {250, 240, 120}), 8, 0, 0.7));
    return c;
}

MockBackend backend(std::uint64_t seed) {
    MockBackendConfig cfg;
    cfg.seed = seed;
    return MockBackend(cfg);
}

std::filesystem::path temp_dir(const std::string& tag) {
    static std::atomic<int> counter{0};
    const auto dir = std::filesystem::temp_directory_path() /
                     ("collage-test-" + tag + "-" + std::to_string(::getpid()) + "-" + std::to_string(counter++));
    std::filesystem::remove_all(dir);
    std::filesystem::create_directories(dir);
    return dir;
}

}  // namespace fixtures
