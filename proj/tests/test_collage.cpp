#include <doctest.h>

#include <cmath>
#include <random>

#include "collage/collage.hpp"
#include "collage/errors.hpp"
#include "fixtures.hpp"
#include "oracles.hpp"

using namespace collage;

namespace {

Layer blob_layer(std::mt19937& gen, Dims canvas, const std::string& name) {
    std::uniform_int_distribution<int> size(1, canvas.width);
    std::uniform_int_distribution<int> byte(0, 255);
    std::bernoulli_distribution hole(0.25);
    const int w = size(gen), h = std::uniform_int_distribution<int>(1, canvas.height)(gen);
    Image8 img(w, h);
    for (int r = 0; r < h; ++r) {
        for (int c = 0; c < w; ++c) {
            std::uint8_t* px = img.pixel(r, c);
            px[0] = static_cast<std::uint8_t>(byte(gen));
            px[1] = static_cast<std::uint8_t>(byte(gen));
            px[2] = static_cast<std::uint8_t>(byte(gen));
            px[3] = hole(gen) ? 0 : static_cast<std::uint8_t>(std::max(1, byte(gen)));
        }
    }
    img.pixel(0, 0)[3] = 255;
    Layer l;
    l.name = name;
    l.image = img;
    l.placement = {static_cast<double>(std::uniform_int_distribution<int>(0, canvas.width - 1)(gen)),
                   static_cast<double>(std::uniform_int_distribution<int>(0, canvas.height - 1)(gen)), 1.0};
    return l;
}

}  // namespace

TEST_CASE("identity placement reproduces the raster byte for byte") {
    const Image8 img = fixtures::solid(16, 8, {10, 200, 30}, 180);
    Layer l;
    l.image = img;
    CHECK(to_bytes(rasterize_layer(l, {16, 8})) == img);
}

TEST_CASE("scale 2 of a single red pixel is a 2x2 red block") {
    Layer l;
    l.image = Image8(1, 1);
    l.image.rgba = {255, 0, 0, 255};
    l.placement = {0, 0, 2.0};
    const Image8 out = to_bytes(rasterize_layer(l, {4, 4}));
    for (int r = 0; r < 4; ++r) {
        for (int c = 0; c < 4; ++c) {
            const bool inside = r < 2 && c < 2;
            CHECK(out.pixel(r, c)[3] == (inside ? 255 : 0));
            if (inside) CHECK(out.pixel(r, c)[0] == 255);
        }
    }
}

TEST_CASE("offset placement covers only the bottom-right quadrant") {
    Layer l;
    l.image = fixtures::solid(64, 64, {1, 2, 3});
    l.placement = {32, 32, 1.0};
    const ImageF out = rasterize_layer(l, {64, 64});
    for (int r = 0; r < 64; ++r)
        for (int c = 0; c < 64; ++c) CHECK((out.alpha(r, c) > 0.0f) == (r >= 32 && c >= 32));
}

TEST_CASE("off-canvas placement is rejected") {
    Layer l;
    l.name = "lost";
    l.image = fixtures::solid(4, 4, {1, 2, 3});
    l.placement = {100, 0, 1.0};
    CHECK_THROWS_AS(rasterize_layer(l, {16, 16}), ValidationError);
}

TEST_CASE("composite identities") {
    Collage c;
    c.canvas = {8, 8};
    Layer a;
    a.image = fixtures::solid(8, 8, {200, 10, 10});
    c.layers.push_back(a);
    CHECK(to_bytes(flatten_composite(c)) == a.image);

    Layer top;
    top.image = fixtures::solid(8, 8, {5, 250, 5});
    c.layers.push_back(top);
    CHECK(to_bytes(flatten_composite(c)) == top.image);
}

TEST_CASE("two half-transparent layers follow the over operator") {
    Collage c;
    c.canvas = {4, 4};
    Layer a, b;
    a.image = Image8(4, 4);
    b.image = Image8(4, 4);
    for (int i = 0; i < 16; ++i) {
        a.image.rgba[i * 4 + 0] = 255;
        a.image.rgba[i * 4 + 3] = 128;
        b.image.rgba[i * 4 + 2] = 255;
        b.image.rgba[i * 4 + 3] = 128;
    }
    c.layers = {a, b};
    const ImageF out = flatten_composite(c);
    const double sa = 128.0 / 255.0;
    const double oa = sa + sa * (1.0 - sa);
    CHECK(out.pixel(1, 1)[3] == doctest::Approx(oa).epsilon(1e-6));
    CHECK(out.pixel(1, 1)[0] == doctest::Approx(sa * (1.0 - sa) / oa).epsilon(1e-6));
    CHECK(out.pixel(1, 1)[2] == doctest::Approx(sa / oa).epsilon(1e-6));
}

TEST_CASE("visibility basics") {
    Collage c;
    c.canvas = {8, 8};
    Layer full;
    full.image = fixtures::solid(8, 8, {1, 1, 1});
    c.layers.push_back(full);
    const VisibilityMap one = compute_visibility(c, {8, 8});
    CHECK(one.count(1) == 64);

    Layer left;
    left.image = fixtures::solid(4, 8, {2, 2, 2});
    c.layers.push_back(left);
    const VisibilityMap two = compute_visibility(c, {8, 8});
    for (int r = 0; r < 8; ++r)
        for (int col = 0; col < 8; ++col) CHECK(two.at(r, col) == (col < 4 ? 2 : 1));
}

TEST_CASE("bento fixture visibility matches the brute-force oracle") {
    const Collage c = fixtures::bento();
    validate_collage(c);
    const auto placed = rasterize_layers(c);
    for (Dims res : {Dims{64, 64}, Dims{8, 8}, Dims{4, 4}, Dims{16, 8}}) {
        CHECK(compute_visibility(c, res).indices == oracles::visibility(placed, c.canvas, res));
    }
    const VisibilityMap v = compute_visibility(c, {8, 8});
    for (int j = 1; j <= 5; ++j) CHECK(v.count(j) > 0);
}

TEST_CASE("random stacks up to 16x16: visibility and composite oracles") {
    std::mt19937 gen(2024);
    for (int trial = 0; trial < 40; ++trial) {
        const int w = std::uniform_int_distribution<int>(1, 4)(gen) * 4;
        const int h = std::uniform_int_distribution<int>(1, 4)(gen) * 4;
        Collage c;
        c.canvas = {w, h};
        const int n = std::uniform_int_distribution<int>(1, 5)(gen);
        for (int k = 0; k < n; ++k) c.layers.push_back(blob_layer(gen, c.canvas, "l" + std::to_string(k)));
        const auto placed = rasterize_layers(c);
        for (Dims res : {Dims{w, h}, Dims{w / 2, h / 2}, Dims{w / 4, h / 4}}) {
            CHECK(compute_visibility(c, res).indices == oracles::visibility(placed, c.canvas, res));
        }
        const ImageF comp = flatten_composite(c);
        const VisibilityMap full = compute_visibility(c, c.canvas);
        for (int r = 0; r < h; ++r) {
            for (int col = 0; col < w; ++col) {
                const auto o = oracles::over(placed, placed.size(), r, col);
                for (int ch = 0; ch < 4; ++ch) CHECK(std::abs(comp.pixel(r, col)[ch] - o[ch]) < 1e-6);
                // The composite equals the composite of layers 1..j and layer j contributes.
                const int j = full.at(r, col);
                if (j > 0) {
                    const auto oj = oracles::over(placed, static_cast<std::size_t>(j), r, col);
                    for (int ch = 0; ch < 4; ++ch) CHECK(std::abs(comp.pixel(r, col)[ch] - oj[ch]) < 1e-6);
                    CHECK(placed[j - 1].alpha(r, col) > 0.0f);
                } else {
                    CHECK(comp.pixel(r, col)[3] == 0.0f);
                }
            }
        }
    }
}

TEST_CASE("swapping two overlapping layers changes visibility exactly on the overlap") {
    Collage c;
    c.canvas = {16, 16};
    Layer a, b;
    a.image = fixtures::solid(10, 10, {1, 1, 1});
    b.image = fixtures::solid(10, 10, {2, 2, 2});
    b.placement = {6, 6, 1.0};
    c.layers = {a, b};
    const VisibilityMap before = compute_visibility(c, c.canvas);
    std::swap(c.layers[0], c.layers[1]);
    const VisibilityMap after = compute_visibility(c, c.canvas);
    for (int r = 0; r < 16; ++r) {
        for (int col = 0; col < 16; ++col) {
            const bool in_a = r < 10 && col < 10;
            const bool in_b = r >= 6 && col >= 6;
            const bool changed = (before.at(r, col) == 0 ? 0 : (before.at(r, col) == 1 ? 1 : 2)) !=
                                 (after.at(r, col) == 0 ? 0 : (after.at(r, col) == 1 ? 2 : 1));
            CHECK(changed == (in_a && in_b));
        }
    }
}

TEST_CASE("validation names the offending layer") {
    Collage c = fixtures::bento();
    c.layers[2].text = "beans";
    try {
        validate_collage(c);
        FAIL("expected ValidationError");
    } catch (const ValidationError& e) {
        CHECK(std::string(e.what()).find("edamame") != std::string::npos);
    }
    c = fixtures::bento();
    c.layers[1].noise_level = 1.5;
    CHECK_THROWS_AS(validate_collage(c), ValidationError);
}

TEST_CASE("layer_value_map paints visible layer values") {
    const Collage c = fixtures::bento();
    const VisibilityMap v = compute_visibility(c, {8, 8});
    const std::vector<double> values{0.1, 0.2, 0.3, 0.4, 0.5};
    const GridD m = layer_value_map(v, values, -1.0);
    for (int r = 0; r < 8; ++r)
        for (int col = 0; col < 8; ++col) CHECK(m.at(r, col) == values[v.at(r, col) - 1]);
}
