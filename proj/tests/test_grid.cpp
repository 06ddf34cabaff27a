#include <doctest.h>

#include <cmath>
#include <random>

#include "collage/grid.hpp"

using namespace collage;

namespace {

GridD random_grid(Dims d, unsigned seed) {
    std::mt19937 gen(seed);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    GridD g(d);
    for (auto& v : g.data()) v = u(gen);
    return g;
}

// Dense 2-D convolution with the truncated Gaussian, renormalized over the
// in-bounds taps of each output cell.
GridD dense_blur(const GridD& src, double sigma) {
    const int radius = static_cast<int>(std::ceil(3.0 * sigma));
    GridD out(src.dims());
    for (int r = 0; r < src.height(); ++r) {
        for (int c = 0; c < src.width(); ++c) {
            double s = 0.0, w = 0.0;
            for (int dr = -radius; dr <= radius; ++dr) {
                for (int dc = -radius; dc <= radius; ++dc) {
                    const int rr = r + dr, cc = c + dc;
                    if (rr < 0 || rr >= src.height() || cc < 0 || cc >= src.width()) continue;
                    const double k = std::exp(-(dr * dr + dc * dc) / (2.0 * sigma * sigma));
                    s += k * src.at(rr, cc);
                    w += k;
                }
            }
            out.at(r, c) = s / w;
        }
    }
    return out;
}

}  // namespace

TEST_CASE("area_resample averages integer blocks") {
    const GridD src = random_grid({8, 8}, 1);
    const GridD dst = area_resample(src, {4, 2});
    for (int r = 0; r < 2; ++r) {
        for (int c = 0; c < 4; ++c) {
            double s = 0.0;
            for (int rr = r * 4; rr < r * 4 + 4; ++rr)
                for (int cc = c * 2; cc < c * 2 + 2; ++cc) s += src.at(rr, cc);
            CHECK(dst.at(r, c) == doctest::Approx(s / 8.0).epsilon(1e-12));
        }
    }
}

TEST_CASE("area_resample with fractional overlap preserves the mean") {
    const GridD src = random_grid({7, 5}, 2);
    const GridD dst = area_resample(src, {3, 2});
    double ms = 0.0, md = 0.0;
    for (double v : src.data()) ms += v;
    for (double v : dst.data()) md += v;
    CHECK(md / 6.0 == doctest::Approx(ms / 35.0).epsilon(1e-12));
}

TEST_CASE("bilinear_resize keeps constants exact and matches a 2x downsample oracle") {
    const GridD ones(Dims{5, 7}, 0.37);
    const GridD up = bilinear_resize(ones, {13, 11});
    for (double v : up.data()) CHECK(v == 0.37);

    // Pixel-center alignment: a 2x downsample samples at the midpoint of each
    // 2x2 block, i.e. the mean of the four sources.
    const GridD src = random_grid({4, 4}, 3);
    const GridD dst = bilinear_resize(src, {2, 2});
    for (int r = 0; r < 2; ++r) {
        for (int c = 0; c < 2; ++c) {
            const double mean = (src.at(2 * r, 2 * c) + src.at(2 * r, 2 * c + 1) + src.at(2 * r + 1, 2 * c) +
                                 src.at(2 * r + 1, 2 * c + 1)) / 4.0;
            CHECK(dst.at(r, c) == doctest::Approx(mean).epsilon(1e-12));
        }
    }
}

TEST_CASE("gaussian_blur matches a dense convolution oracle") {
    for (double sigma : {0.5, 1.0, 2.3}) {
        const GridD src = random_grid({9, 6}, 4);
        const GridD a = gaussian_blur(src, sigma);
        const GridD b = dense_blur(src, sigma);
        for (std::size_t i = 0; i < a.size(); ++i) CHECK(std::abs(a[i] - b[i]) < 1e-12);
    }
}

TEST_CASE("gaussian_blur edge cases") {
    const GridD src = random_grid({4, 4}, 5);
    CHECK(gaussian_blur(src, 0.0) == src);
    const GridD c(Dims{6, 6}, 0.6);
    CHECK(gaussian_blur(c, 1.7) == c);
    CHECK_THROWS_AS(gaussian_blur(src, -1.0), std::invalid_argument);
}
