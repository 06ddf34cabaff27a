#include <doctest.h>

#include <cmath>

#include "collage/rng.hpp"
#include "collage/sampler.hpp"

using namespace collage;

TEST_CASE("time grid covers the partial schedule") {
    const auto g = time_grid(50, 0.75);
    CHECK(g.size() == 39);
    CHECK(g.front() == 0.75);
    CHECK(g.back() == 0.0);
    for (std::size_t i = 1; i < g.size(); ++i) CHECK(g[i] < g[i - 1]);
    CHECK(time_grid(50, 0.7).size() == 36);
    CHECK(time_grid(50, 1.0).size() == 51);
    CHECK(time_grid(10, 0.0) == std::vector<double>{0.0});
    CHECK(time_grid(1, 0.3) == std::vector<double>{0.3, 0.0});
    CHECK_THROWS(time_grid(0, 0.5));
    CHECK_THROWS(time_grid(10, 1.2));
}

TEST_CASE("ancestral sigmas split the next variance") {
    for (auto [s, n] : {std::pair{2.0, 1.5}, {1.0, 0.1}, {3.0, 2.9}}) {
        const auto a = ancestral_sigmas(s, n);
        CHECK(a.down * a.down + a.up * a.up == doctest::Approx(n * n).epsilon(1e-12));
        CHECK(a.up == doctest::Approx(std::sqrt(n * n * (s * s - n * n) / (s * s))).epsilon(1e-12));
    }
    const auto last = ancestral_sigmas(1.0, 0.0);
    CHECK(last.down == 0.0);
    CHECK(last.up == 0.0);
}

TEST_CASE("euler ancestral step against a hand computation") {
    NormalRng init(3);
    const Latent x = gaussian_like(Latent(4, 2, 2), init);
    const Latent den = gaussian_like(Latent(4, 2, 2), init);
    const double sigma = 2.0, next = 1.2;
    NormalRng rng(17), oracle(17);
    const Latent out = euler_ancestral_step(x, den, sigma, next, rng);
    const auto a = ancestral_sigmas(sigma, next);
    for (std::size_t i = 0; i < x.data.size(); ++i) {
        const double d = (x.data[i] - den.data[i]) / sigma;
        const double want = x.data[i] + d * (a.down - sigma) + oracle.normal() * a.up;
        CHECK(out.data[i] == doctest::Approx(want).epsilon(1e-14));
    }

    // The final step lands on the denoised estimate and draws no noise.
    NormalRng r2(5), untouched(5);
    const Latent last = euler_ancestral_step(x, den, sigma, 0.0, r2);
    for (std::size_t i = 0; i < x.data.size(); ++i) CHECK(last.data[i] == doctest::Approx(den.data[i]).epsilon(1e-14));
    CHECK(r2.normal() == untouched.normal());
}

TEST_CASE("rng streams are seeded and independent") {
    NormalRng a = make_rng(4, RngStream::Sampler), b = make_rng(4, RngStream::Sampler);
    NormalRng c = make_rng(4, RngStream::LayerNoise);
    const double x = a.normal();
    CHECK(x == b.normal());
    CHECK(x != c.normal());
}
