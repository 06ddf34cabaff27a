// One line per acceptance criterion: PASS, FAIL or SKIP, with its runtime.
// Exits nonzero when any criterion fails.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <random>
#include <sstream>
#include <string>

#include "collage/attention.hpp"
#include "collage/autoparams.hpp"
#include "collage/layer_inversion.hpp"
#include "collage/noise_control.hpp"
#include "collage/pipeline.hpp"
#include "collage/sampler.hpp"
#include "collage/token_mapping.hpp"
#include "fixtures.hpp"
#include "oracles.hpp"

using namespace collage;

namespace {

struct Outcome {
    bool ok = true;
    std::ostringstream detail;

    void require(bool cond, const std::string& what) {
        if (!cond && ok) {
            ok = false;
            detail << "failed: " << what;
        }
    }
};

int failures = 0;

void criterion(const char* name, double limit_s, const std::function<void(Outcome&)>& body) {
    Outcome out;
    const auto t0 = std::chrono::steady_clock::now();
    try {
        body(out);
    } catch (const std::exception& e) {
        out.ok = false;
        out.detail << "exception: " << e.what();
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    if (limit_s > 0 && secs >= limit_s && out.ok) {
        out.ok = false;
        out.detail << "runtime " << secs << " s exceeds " << limit_s << " s";
    }
    if (!out.ok) ++failures;
    std::printf("%s  %-28s %8.3f s  %s\n", out.ok ? "PASS" : "FAIL", name, secs, out.detail.str().c_str());
    std::fflush(stdout);
}

void skip(const char* name, const char* why) {
    std::printf("SKIP  %-28s %8s    %s\n", name, "-", why);
}

Matrix random_matrix(int r, int c, std::mt19937& gen) {
    std::normal_distribution<double> n(0.0, 1.0);
    Matrix m(r, c);
    for (auto& v : m.data) v = n(gen);
    return m;
}

std::vector<std::vector<int>> dense(const AttentionBias& b, bool positive) {
    std::vector<std::vector<int>> out(b.cells(), std::vector<int>(b.tokens, 0));
    for (int i = 0; i < b.cells(); ++i)
        for (int j = 0; j < b.tokens; ++j) out[i][j] = positive ? b.positive(i, j) : b.negative(i, j);
    return out;
}

void attention_oracle(Outcome& o) {
    double worst = 0.0;
    for (unsigned seed = 0; seed < 20; ++seed) {
        std::mt19937 gen(seed);
        const Matrix q = random_matrix(16, 4, gen), k = random_matrix(8, 4, gen), v = random_matrix(8, 4, gen);
        // Layer 1 on the left half, layer 2 on the bottom-right quadrant.
        VisibilityMap vis{GridI(Dims{4, 4}, 0)};
        for (int r = 0; r < 4; ++r)
            for (int c = 0; c < 4; ++c) vis.indices.at(r, c) = c < 2 ? 1 : (r >= 2 ? 2 : 0);
        TokenRoleMap roles{{0, 1, 1, 2, 2, 2, 0, 0}};
        const AttentionBias bias = build_bias(vis, roles);
        std::uniform_real_distribution<double> u(0.0, 3.0);
        AttentionStrengths s;
        s.per_layer = {{u(gen), u(gen)}, {u(gen), u(gen)}};
        const double sigma = u(gen);
        const Matrix got = biased_cross_attention(q, k, v, &bias, s, sigma).output;
        const Matrix want = oracles::biased_attention(
            q, k, v, dense(bias, true), dense(bias, false), roles.roles,
            {{s.per_layer[0].pos, s.per_layer[0].neg}, {s.per_layer[1].pos, s.per_layer[1].neg}}, sigma);
        for (std::size_t i = 0; i < got.data.size(); ++i) worst = std::max(worst, std::abs(got.data[i] - want.data[i]));
    }
    o.require(worst < 1e-6, "max deviation from scalar oracle < 1e-6");
    o.require(schedule_weight(2.0, 0.0, 5.0) == 0.0, "schedule_weight(sigma=0) == 0");
    o.detail << "max |diff| = " << worst;
}

void blend_semantics(Outcome& o) {
    auto backend = fixtures::backend();
    GenerationConfig cfg;
    cfg.seed = 3;
    cfg.steps = 20;
    cfg.start_noise = 0.8;

    // (a) every level at start_noise
    Collage a = fixtures::bento();
    for (auto& l : a.layers) l.noise_level = cfg.start_noise;
    auto on = cfg;
    on.ablation.ln = true;
    o.require(harmonize(backend, a, on).latent == harmonize(backend, a, cfg).latent,
              "(a) LN with all t_i = start_noise is bit-identical to LN off");

    // (b) t_i = 0 region sits on the encoded composite at the end
    Collage b = fixtures::bento();
    b.layers[0].noise_level = 0.0;
    on.blur_sigma = 0.0;
    const Latent x_c = backend.encode_image(flatten_composite(b));
    const Latent final_x = harmonize(backend, b, on).latent;
    const VisibilityMap vis = compute_visibility(b, backend.latent_dims(b.canvas));
    double drift = 0.0;
    for (int ch = 0; ch < x_c.channels; ++ch)
        for (int r = 0; r < x_c.height; ++r)
            for (int c = 0; c < x_c.width; ++c)
                if (vis.at(r, c) == 1) drift = std::max(drift, std::abs(final_x.at(ch, r, c) - x_c.at(ch, r, c)));
    o.require(vis.count(1) > 0 && drift <= 1e-12, "(b) t_i = 0 region equals the encoded composite");

    // (c) checkerboard selection oracle
    NormalRng gen_rng(4);
    const Latent x = gaussian_like(Latent(4, 8, 8), gen_rng);
    const Latent xc = gaussian_like(Latent(4, 8, 8), gen_rng);
    BlendMask mask{Grid<std::uint8_t>(Dims{8, 8}, 0), 0.4};
    for (int r = 0; r < 8; ++r)
        for (int c = 0; c < 8; ++c) mask.m.at(r, c) = (r + c) % 2;
    NormalRng step_rng(17), oracle_rng(17);
    const double sigma = 0.6;
    const Latent got = blended_step(x, mask, xc, sigma, step_rng);
    bool exact = true;
    for (int ch = 0; ch < 4; ++ch) {
        for (int r = 0; r < 8; ++r) {
            for (int c = 0; c < 8; ++c) {
                const double n = oracle_rng.normal();
                const double want = (r + c) % 2 ? x.at(ch, r, c) : xc.at(ch, r, c) + sigma * n;
                exact = exact && got.at(ch, r, c) == want;
            }
        }
    }
    o.require(exact, "(c) checkerboard step equals elementwise selection");
    o.detail << "frozen-region drift = " << drift;
}

void ablation_identities(Outcome& o) {
    auto backend = fixtures::backend();
    const Collage base = fixtures::bento();
    GenerationConfig cfg;
    cfg.seed = 9;
    cfg.start_noise = 0.8;
    const Latent reference = sdedit_harmonize(backend, base, cfg).latent;
    o.require(harmonize(backend, base, cfg).latent == reference, "flags off == SDEdit");

    Collage ca = base;
    for (auto& l : ca.layers) l.attn_pos = l.attn_neg = 0.0;
    Collage ln = base;
    for (auto& l : ln.layers) l.noise_level = cfg.start_noise;
    Collage cn = base;
    for (auto& l : cn.layers) l.controlnet_weight = 0.0;
    const std::vector<std::tuple<const char*, const Collage*, const char*>> cases = {
        {"CA zero strengths", &ca, "gh+ca"},
        {"TI no tokens", &base, "gh+ti"},
        {"LN all at start_noise", &ln, "gh+ln"},
        {"CN zero weights", &cn, "gh+cn"},
    };
    int passed = 0;
    for (const auto& [name, collage, ablation] : cases) {
        auto run = cfg;
        run.ablation = parse_ablation(ablation);
        const bool same = harmonize(backend, *collage, run).latent == reference;
        o.require(same, name);
        passed += same;
    }
    o.detail << passed << "/4 neutral cases bit-exact";
}

void visibility_and_tokens(Outcome& o) {
    const Collage bento = fixtures::bento();
    const auto placed = rasterize_layers(bento);
    int checked = 0;
    for (Dims res : {Dims{16, 16}, Dims{8, 8}, Dims{4, 4}}) {
        o.require(compute_visibility(bento, res).indices == oracles::visibility(placed, bento.canvas, res),
                  "bento visibility at " + std::to_string(res.width));
        ++checked;
    }
    std::mt19937 gen(2024);
    for (int trial = 0; trial < 40; ++trial) {
        const int w = std::uniform_int_distribution<int>(1, 4)(gen) * 4;
        const int h = std::uniform_int_distribution<int>(1, 4)(gen) * 4;
        Collage c;
        c.canvas = {w, h};
        const int n = std::uniform_int_distribution<int>(1, 5)(gen);
        for (int k = 0; k < n; ++k) {
            Image8 img(std::uniform_int_distribution<int>(1, w)(gen), std::uniform_int_distribution<int>(1, h)(gen));
            std::uniform_int_distribution<int> byte(0, 255), coin(0, 3);
            for (auto& v : img.rgba) v = static_cast<std::uint8_t>(byte(gen));
            for (std::size_t i = 3; i < img.rgba.size(); i += 4) {
                const int roll = coin(gen);
                img.rgba[i] = roll == 0 ? 0 : (roll == 1 ? 255 : img.rgba[i]);
            }
            Layer l;
            l.name = "l" + std::to_string(k);
            l.image = img;
            l.placement = {double(std::uniform_int_distribution<int>(0, w - img.width)(gen)),
                           double(std::uniform_int_distribution<int>(0, h - img.height)(gen)), 1.0};
            c.layers.push_back(l);
        }
        const auto p = rasterize_layers(c);
        for (Dims res : {Dims{w, h}, Dims{w / 2, h / 2}, Dims{w / 4, h / 4}}) {
            o.require(compute_visibility(c, res).indices == oracles::visibility(p, c.canvas, res),
                      "random stack visibility");
            ++checked;
        }
        const ImageF comp = flatten_composite(c);
        for (int r = 0; r < h; ++r) {
            for (int col = 0; col < w; ++col) {
                const auto want = oracles::over(p, p.size(), r, col);
                for (int ch = 0; ch < 4; ++ch)
                    o.require(std::abs(comp.pixel(r, col)[ch] - want[ch]) < 1e-6, "random stack composite");
            }
        }
    }
    const auto backend = fixtures::backend();
    const PromptEncoding enc = encode_prompt(bento.prompt, backend.tokenizer());
    const TokenRoleMap roles = classify_tokens(bento, enc);
    auto role_of = [&](const std::string& word) {
        const std::size_t at = bento.prompt.find(word);
        for (std::size_t i = 0; i < enc.size(); ++i) {
            const auto& t = enc.tokens[i];
            if (t.kind == TokenKind::Text && t.byte_begin >= at && t.byte_end <= at + word.size()) {
                return roles.layer_of(i);
            }
        }
        return -1;
    };
    o.require(role_of("with") == 0, "'with' is a global token");
    o.require(role_of("rice") == 2, "'rice' is a layer token of the rice layer");
    o.detail << checked << " visibility maps; with=global rice=layer 2";
}

void inversion(Outcome& o) {
    // Finite-difference gradient of the masked loss with respect to the prediction.
    NormalRng rng(2);
    const Latent target = gaussian_like(Latent(4, 8, 8), rng);
    const Latent pred = gaussian_like(Latent(4, 8, 8), rng);
    GridD mask(Dims{8, 8}, 0.0);
    for (int r = 2; r < 5; ++r)
        for (int c = 1; c < 6; ++c) mask.at(r, c) = 1.0;
    const double h = 1e-6;
    double max_in = 0.0, max_out = 0.0;
    for (std::size_t k = 0; k < pred.data.size(); ++k) {
        Latent p = pred, m = pred;
        p.data[k] += h;
        m.data[k] -= h;
        const double fd = std::abs(inversion_loss(target, p, mask) - inversion_loss(target, m, mask)) / (2 * h);
        (mask[k % 64] == 0.0 ? max_out : max_in) = std::max(mask[k % 64] == 0.0 ? max_out : max_in, fd);
    }
    o.require(max_in > 0.0 && max_out <= 1e-5 * max_in, "out-of-mask gradient is 0 within 1e-5 relative");

    auto backend = fixtures::backend();
    const Collage c = fixtures::bento();
    InversionConfig zero;
    zero.steps = 20;
    zero.learning_rate = 0.0;
    o.require(invert_layer(backend, c, 5, zero).embedding == backend.embedding_of(zero.init_word),
              "zero-lr run leaves the embedding bit-identical");

    InversionConfig cfg;
    cfg.steps = 50;
    cfg.seed = 11;
    const InvertedToken t = invert_layer(backend, c, 5, cfg);
    o.require(t.final_loss < t.initial_loss, "50-step seeded run decreases the loss");
    o.detail << "loss " << t.initial_loss << " -> " << t.final_loss << "; out/in grad " << max_out << "/" << max_in;
}

void controlnet_scalar(Outcome& o) {
    auto backend = fixtures::backend();
    for (double s : {0.0, 0.5, 1.0}) {
        Collage c = fixtures::ship();
        for (auto& l : c.layers) l.controlnet_weight = s;
        GenerationConfig per_layer;
        per_layer.seed = 5;
        per_layer.steps = 20;
        per_layer.ablation.cn = true;
        GenerationConfig scalar = per_layer;
        scalar.ablation.cn = false;
        scalar.controlnet_scale = s;
        o.require(harmonize(backend, c, per_layer).latent == harmonize(backend, c, scalar).latent,
                  "uniform w = " + std::to_string(s));
    }
    o.detail << "s in {0, 0.5, 1} bit-exact";
}

void autoparams(Outcome& o) {
    std::mt19937 gen(20240611);
    const AutoParamsConfig cfg;
    int layers = 0;
    for (int trial = 0; trial < 10; ++trial) {
        Collage c;
        c.canvas = {std::uniform_int_distribution<int>(12, 40)(gen), std::uniform_int_distribution<int>(12, 40)(gen)};
        const int n = std::uniform_int_distribution<int>(2, 6)(gen);
        struct Rect {
            int x, y, w, h;
        };
        std::vector<Rect> rects;
        for (int k = 0; k < n; ++k) {
            Rect r{0, 0, std::uniform_int_distribution<int>(1, c.canvas.width)(gen),
                   std::uniform_int_distribution<int>(1, c.canvas.height)(gen)};
            r.x = std::uniform_int_distribution<int>(-r.w / 2, c.canvas.width - 1)(gen);
            r.y = std::uniform_int_distribution<int>(-r.h / 2, c.canvas.height - 1)(gen);
            Layer l;
            l.name = "l" + std::to_string(k);
            l.image = fixtures::solid(r.w, r.h, {50, 50, 50});
            l.placement = {double(r.x), double(r.y), 1.0};
            c.layers.push_back(l);
            rects.push_back(r);
        }
        std::vector<int> counts(n, 0);
        for (int row = 0; row < c.canvas.height; ++row) {
            for (int col = 0; col < c.canvas.width; ++col) {
                for (int k = n - 1; k >= 0; --k) {
                    const Rect& r = rects[k];
                    if (col >= r.x && col < r.x + r.w && row >= r.y && row < r.y + r.h) {
                        ++counts[k];
                        break;
                    }
                }
            }
        }
        const auto p = auto_params(c, cfg);
        for (int k = 0; k < n; ++k) {
            const double frac = counts[k] / double(c.canvas.width * c.canvas.height);
            const bool boosted = frac < cfg.small_threshold || 2 * k > n - 1;
            o.require(p[k].boosted == boosted, "area/rank classification");
            o.require(std::abs(p[k].visible_fraction - frac) < 1e-12, "visible fraction");
            if (k > 0) o.require(p[k].noise_level < p[k - 1].noise_level, "noise strictly decreasing back to front");
            ++layers;
        }
    }
    o.detail << "10 stacks, " << layers << " layers";
}

void refinement(Outcome& o) {
    auto backend = fixtures::backend();
    const Collage c = fixtures::bento();
    GenerationConfig gen;
    gen.seed = 1;
    gen.start_noise = 0.8;
    gen.ablation = parse_ablation("gh+ca+ln");
    const Image8 base = harmonize(backend, c, gen).image;
    const Image8 rt = round_trip(backend, to_float(base));
    int tol = 0;
    for (std::size_t i = 0; i < base.rgba.size(); ++i) tol = std::max(tol, std::abs(int(rt.rgba[i]) - int(base.rgba[i])));

    Layer fg = c.layers[3];
    fg.placement = {40, 48, 1};
    GenerationConfig cfg;
    cfg.start_noise = 0.8;
    cfg.ablation.ca = true;
    const int stride = backend.latent_stride();
    const int radius = static_cast<int>(std::ceil(3.0 * cfg.blur_sigma));
    const ImageF placed = rasterize_layers(refinement_collage(base, fg, c))[1];
    const int lh = c.canvas.height / stride, lw = c.canvas.width / stride;
    Grid<std::uint8_t> region(Dims{lw, lh}, 0);
    for (int r = 0; r < placed.height; ++r)
        for (int col = 0; col < placed.width; ++col)
            if (placed.pixel(r, col)[3] > 0.0f)
                for (int dr = -radius; dr <= radius; ++dr)
                    for (int dc = -radius; dc <= radius; ++dc) {
                        const int rr = r / stride + dr, cc = col / stride + dc;
                        if (rr >= 0 && rr < lh && cc >= 0 && cc < lw) region.at(rr, cc) = 1;
                    }
    int worst = 0, outside = 0;
    for (std::uint64_t seed = 1; seed <= 5; ++seed) {
        cfg.seed = seed;
        const Image8 out = refine_layer(backend, base, fg, c, cfg).image;
        for (int r = 0; r < out.height; ++r)
            for (int col = 0; col < out.width; ++col) {
                if (region.at(r / stride, col / stride)) continue;
                if (seed == 1) ++outside;
                for (int ch = 0; ch < 3; ++ch)
                    worst = std::max(worst, std::abs(int(out.pixel(r, col)[ch]) - int(base.pixel(r, col)[ch])));
            }
    }
    o.require(outside > 0, "some pixels lie outside the dilated foreground");
    o.require(worst <= tol, "outside pixels within round-trip tolerance");
    o.detail << outside << " px outside; max diff " << worst << " <= round-trip tol " << tol;
}

}  // namespace

int main() {
    criterion("attention-bias oracle", 1.0, attention_oracle);
    criterion("blend-step semantics", 5.0, blend_semantics);
    criterion("ablation identities", 30.0, ablation_identities);
    criterion("visibility/token oracle", 0.0, visibility_and_tokens);
    criterion("inversion locality", 0.0, inversion);
    criterion("controlnet scalar recovery", 0.0, controlnet_scalar);
    criterion("autoparams brute force", 0.0, autoparams);
    criterion("refinement preservation", 0.0, refinement);
    skip("method ordering (hardware)",
         "needs the real diffusion checkpoint and CLIP; this build has only the mock backend");
    std::printf("%d failure(s)\n", failures);
    return failures == 0 ? 0 : 1;
}
