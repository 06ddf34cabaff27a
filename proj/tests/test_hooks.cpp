#include <doctest.h>

#include <map>

#include "collage/attention_hooks.hpp"
#include "collage/errors.hpp"
#include "collage/pipeline.hpp"
#include "collage/token_mapping.hpp"
#include "fixtures.hpp"

using namespace collage;

namespace {

GenerationConfig quick_config(std::uint64_t seed = 3) {
    GenerationConfig cfg;
    cfg.seed = seed;
    cfg.steps = 10;
    return cfg;
}

struct Recorder final : AttentionObserver {
    struct Seen {
        int calls = 0;
        int prompt_calls = 0;
        int rows = 0;
        int cols = 0;
        double max_err = 0.0;
    };
    std::map<std::pair<int, int>, Seen> by_resolution;
    const std::map<std::pair<int, int>, AttentionBias>* expected = nullptr;
    AttentionStrengths strengths;

    void observe(const AttentionCall& call, const AttentionResult& result) override {
        auto& s = by_resolution[{call.site->resolution.width, call.site->resolution.height}];
        ++s.calls;
        s.rows = result.probabilities.rows;
        s.cols = result.probabilities.cols;
        if (call.context != ContextKind::Prompt || expected == nullptr) return;
        ++s.prompt_calls;
        const auto& bias = expected->at({call.site->resolution.width, call.site->resolution.height});
        const auto want = biased_cross_attention(*call.q, *call.k, *call.v, &bias, strengths, call.sigma);
        for (std::size_t i = 0; i < want.output.data.size(); ++i) {
            s.max_err = std::max(s.max_err, std::abs(want.output.data[i] - result.output.data[i]));
        }
    }
};

}  // namespace

TEST_CASE("install then uninstall leaves sampling bit-identical") {
    auto backend = fixtures::backend();
    const Collage c = fixtures::bento();
    const auto baseline = sdedit_harmonize(backend, c, quick_config());
    const Dims latent = backend.latent_dims(c.canvas);
    const TokenRoleMap roles = classify_tokens(c, backend.tokenizer());
    {
        AttentionStrengths s;
        s.v_pos = s.v_neg = 3.0;
        auto hooks = install_hooks(backend, latent, build_biases(backend, latent, c, roles), s);
        CHECK(backend.installed_hooks() == 1);
        const auto biased = sdedit_harmonize(backend, c, quick_config());
        CHECK(biased.latent != baseline.latent);
        hooks.uninstall();
        CHECK(backend.installed_hooks() == 0);
    }
    CHECK(sdedit_harmonize(backend, c, quick_config()).latent == baseline.latent);

    {
        auto hooks = install_hooks(backend, latent, build_biases(backend, latent, c, roles), AttentionStrengths{});
        CHECK(sdedit_harmonize(backend, c, quick_config()).latent == baseline.latent);
    }
    CHECK(backend.installed_hooks() == 0);
}

TEST_CASE("both attention resolutions receive correctly sized biases") {
    auto backend = fixtures::backend();
    const Collage c = fixtures::bento();
    const Dims latent = backend.latent_dims(c.canvas);
    const auto sites = backend.attention_sites(latent);
    REQUIRE(sites.size() == 2);
    CHECK(sites[0].resolution == Dims{8, 8});
    CHECK(sites[1].resolution == Dims{4, 4});

    const TokenRoleMap roles = classify_tokens(c, backend.tokenizer());
    const BiasByResolution biases = build_biases(backend, latent, c, roles);
    std::map<std::pair<int, int>, AttentionBias> expected;
    for (const auto& s : sites) {
        expected[{s.resolution.width, s.resolution.height}] =
            build_bias(compute_visibility(c, s.resolution), roles);
    }
    Recorder rec;
    rec.expected = &expected;
    rec.strengths = AttentionStrengths::from_layers(c);
    auto hooks = install_hooks(backend, latent, biases, rec.strengths);
    backend.set_attention_observer(&rec);
    sdedit_harmonize(backend, c, quick_config());
    backend.set_attention_observer(nullptr);

    REQUIRE(rec.by_resolution.size() == 2);
    for (const auto& s : sites) {
        const auto& seen = rec.by_resolution.at({s.resolution.width, s.resolution.height});
        CHECK(seen.prompt_calls > 0);
        CHECK(seen.calls == 2 * seen.prompt_calls);
        CHECK(seen.rows == s.cells());
        CHECK(seen.cols == 77);
        CHECK(seen.max_err == 0.0);
    }
}

TEST_CASE("installation errors") {
    auto backend = fixtures::backend();
    const Collage c = fixtures::bento();
    const Dims latent = backend.latent_dims(c.canvas);
    const TokenRoleMap roles = classify_tokens(c, backend.tokenizer());
    BiasByResolution biases = build_biases(backend, latent, c, roles);

    BiasByResolution missing = biases;
    missing.erase(Dims{4, 4});
    CHECK_THROWS_AS(install_hooks(backend, latent, missing, {}), BackendError);
    CHECK(backend.installed_hooks() == 0);

    auto hooks = install_hooks(backend, latent, biases, {});
    CHECK_THROWS_AS(install_hooks(backend, latent, biases, {}), BackendError);
    hooks.uninstall();

    TokenRoleMap narrow;
    narrow.roles.assign(10, 0);
    BiasByResolution wrong;
    for (auto& [res, b] : biases) wrong.emplace(res, build_bias(compute_visibility(c, res), narrow));
    CHECK_THROWS_AS(install_hooks(backend, latent, wrong, {}), BackendError);
}

TEST_CASE("hook installations are move-only and uninstall on destruction") {
    auto backend = fixtures::backend();
    const Collage c = fixtures::bento();
    const Dims latent = backend.latent_dims(c.canvas);
    const TokenRoleMap roles = classify_tokens(c, backend.tokenizer());
    HookInstallation outer;
    {
        auto inner = install_hooks(backend, latent, build_biases(backend, latent, c, roles), {});
        outer = std::move(inner);
        CHECK(!inner.active());
    }
    CHECK(backend.installed_hooks() == 1);
    outer = HookInstallation{};
    CHECK(backend.installed_hooks() == 0);
}
