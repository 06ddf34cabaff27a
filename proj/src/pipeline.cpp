#include "collage/pipeline.hpp"

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <fstream>
#include <sstream>

#include "collage/attention_hooks.hpp"
#include "collage/controlnet.hpp"
#include "collage/errors.hpp"
#include "collage/mock_backend.hpp"
#include "collage/noise_control.hpp"
#include "collage/sampler.hpp"

namespace collage {

using nlohmann::json;

AblationFlags parse_ablation(const std::string& name) {
    std::stringstream ss(name);
    std::string part;
    AblationFlags flags;
    bool first = true;
    while (std::getline(ss, part, '+')) {
        std::transform(part.begin(), part.end(), part.begin(), [](unsigned char c) { return std::tolower(c); });
        if (first) {
            if (part != "gh") {
                throw ValidationError("ablation must start with 'gh': " + name);
            }
            first = false;
            continue;
        }
        if (part == "ca") flags.ca = true;
        else if (part == "ti") flags.ti = true;
        else if (part == "ln") flags.ln = true;
        else if (part == "cn") flags.cn = true;
        else throw ValidationError("unknown ablation component '" + part + "' in " + name);
    }
    if (first) {
        throw ValidationError("empty ablation name");
    }
    return flags;
}

std::string ablation_name(const AblationFlags& flags) {
    std::string out = "gh";
    if (flags.ca) out += "+ca";
    if (flags.ti) out += "+ti";
    if (flags.ln) out += "+ln";
    if (flags.cn) out += "+cn";
    return out;
}

json config_to_json(const GenerationConfig& config) {
    json j = {
        {"seed", config.seed},
        {"start_noise", config.start_noise},
        {"steps", config.steps},
        {"solver", config.solver},
        {"ablation", ablation_name(config.ablation)},
        {"guidance_scale", config.guidance_scale},
        {"blur_sigma", config.blur_sigma},
    };
    j["negative_prompt"] = config.negative_prompt ? json(*config.negative_prompt) : json(nullptr);
    j["controlnet_scale"] = config.controlnet_scale ? json(*config.controlnet_scale) : json(nullptr);
    return j;
}

GenerationConfig config_from_json(const json& j, const GenerationConfig& base) {
    if (!j.is_object()) {
        throw ValidationError("generation config must be a JSON object");
    }
    GenerationConfig c = base;
    try {
        if (j.contains("seed")) c.seed = j.at("seed").get<std::uint64_t>();
        if (j.contains("start_noise")) c.start_noise = j.at("start_noise").get<double>();
        if (j.contains("steps")) c.steps = j.at("steps").get<int>();
        if (j.contains("solver")) c.solver = j.at("solver").get<std::string>();
        if (j.contains("guidance_scale")) c.guidance_scale = j.at("guidance_scale").get<double>();
        if (j.contains("blur_sigma")) c.blur_sigma = j.at("blur_sigma").get<double>();
        if (j.contains("ablation")) {
            const auto& a = j.at("ablation");
            if (a.is_string()) {
                c.ablation = parse_ablation(a.get<std::string>());
            } else {
                c.ablation.ca = a.value("ca", false);
                c.ablation.ti = a.value("ti", false);
                c.ablation.ln = a.value("ln", false);
                c.ablation.cn = a.value("cn", false);
            }
        }
        if (j.contains("negative_prompt")) {
            const auto& n = j.at("negative_prompt");
            c.negative_prompt = n.is_null() ? std::nullopt : std::optional<std::string>(n.get<std::string>());
        }
        if (j.contains("controlnet_scale")) {
            const auto& s = j.at("controlnet_scale");
            c.controlnet_scale = s.is_null() ? std::nullopt : std::optional<double>(s.get<double>());
        }
    } catch (const json::exception& e) {
        throw ValidationError(std::string("invalid generation config: ") + e.what());
    }
    return c;
}

void validate_config(const GenerationConfig& config) {
    if (config.steps < 1) {
        throw ValidationError("steps must be >= 1");
    }
    if (!(config.start_noise >= 0.0 && config.start_noise <= 1.0)) {
        throw ValidationError("start_noise must lie in [0, 1]");
    }
    if (config.solver != "euler_ancestral") {
        throw ValidationError("unsupported solver '" + config.solver + "'");
    }
    if (!std::isfinite(config.guidance_scale)) {
        throw ValidationError("guidance_scale must be finite");
    }
    if (!(config.blur_sigma >= 0.0) || !std::isfinite(config.blur_sigma)) {
        throw ValidationError("blur_sigma must be finite and >= 0");
    }
    if (config.controlnet_scale && !(*config.controlnet_scale >= 0.0 && *config.controlnet_scale <= 1.0)) {
        throw ValidationError("controlnet_scale must lie in [0, 1]");
    }
}

TokenSet load_project_tokens(const Collage& collage, const std::filesystem::path& project_dir) {
    TokenSet out;
    for (std::size_t i = 0; i < collage.layers.size(); ++i) {
        const auto& ref = collage.layers[i].inverted_token;
        if (ref) {
            out[static_cast<int>(i) + 1] = load_token(project_dir / *ref);
        }
    }
    return out;
}

namespace {

std::string negative_text(const Collage& collage, const GenerationConfig& config) {
    return config.negative_prompt ? *config.negative_prompt : collage.negative_prompt;
}

json layer_params(const Collage& collage) {
    json layers = json::array();
    for (const auto& l : collage.layers) {
        layers.push_back({{"name", l.name},
                          {"noise_level", l.noise_level},
                          {"controlnet_weight", l.controlnet_weight},
                          {"attn_pos", l.attn_pos},
                          {"attn_neg", l.attn_neg},
                          {"inverted_token", l.inverted_token ? json(*l.inverted_token) : json(nullptr)}});
    }
    return layers;
}

json make_sidecar(const DiffusionBackend& backend, const Collage& collage, const GenerationConfig& config,
                  const char* kind) {
    return {{"version", 1},
            {"kind", kind},
            {"seed", config.seed},
            {"backend", backend.identifier()},
            {"weights_checksum", backend.weights_checksum()},
            {"config", config_to_json(config)},
            {"layers", layer_params(collage)}};
}

Latent add_noise(const Latent& x, double sigma, NormalRng& rng) {
    Latent out = x;
    for (double& v : out.data) {
        v += sigma * rng.normal();
    }
    return out;
}

Latent guide(const Latent& cond, const Latent& uncond, double scale) {
    Latent out = uncond;
    for (std::size_t i = 0; i < out.data.size(); ++i) {
        out.data[i] = uncond.data[i] + scale * (cond.data[i] - uncond.data[i]);
    }
    return out;
}

void check_ln_precondition(const Collage& collage, const GenerationConfig& config) {
    for (const auto& l : collage.layers) {
        if (l.noise_level > config.start_noise) {
            throw ValidationError("layer '" + l.name + "' noise_level " + std::to_string(l.noise_level) +
                                  " exceeds start_noise " + std::to_string(config.start_noise));
        }
    }
}

}  // namespace

GenerationResult sdedit_harmonize(DiffusionBackend& backend, const Collage& collage, const GenerationConfig& config,
                                  const StepCallback& on_step) {
    validate_config(config);
    if (config.ablation.any()) {
        throw ValidationError("sdedit_harmonize runs with all ablation flags off");
    }
    if (config.controlnet_scale) {
        throw ValidationError("sdedit_harmonize does not use ControlNet");
    }
    validate_collage(collage);
    if (collage.layers.empty()) {
        throw ValidationError("collage has no layers");
    }
    backend.latent_dims(collage.canvas);
    const Latent x_c = backend.encode_image(flatten_composite(collage));
    const Matrix ctx = backend.encode_prompt(encode_prompt(collage.prompt, backend.tokenizer()));
    const Matrix neg = backend.encode_prompt(encode_prompt(negative_text(collage, config), backend.tokenizer()));

    const auto times = time_grid(config.steps, config.start_noise);
    NormalRng rng = make_rng(config.seed, RngStream::Sampler);
    Latent x = add_noise(x_c, backend.sigma(times.front()), rng);
    const int total = static_cast<int>(times.size()) - 1;
    for (int k = 0; k < total; ++k) {
        const double sigma = backend.sigma(times[k]);
        const double sigma_next = backend.sigma(times[k + 1]);
        Latent den = backend.denoise(x, sigma, ctx, ContextKind::Prompt, nullptr);
        if (config.guidance_scale != 1.0) {
            den = guide(den, backend.denoise(x, sigma, neg, ContextKind::Negative, nullptr), config.guidance_scale);
        }
        x = euler_ancestral_step(x, den, sigma, sigma_next, rng);
        if (on_step) {
            on_step({k + 1, total, times[k + 1], sigma_next, &x});
        }
    }
    GenerationResult result;
    result.seed = config.seed;
    result.image = to_bytes(backend.decode_latent(x));
    result.latent = std::move(x);
    result.sidecar = make_sidecar(backend, collage, config, "generate");
    return result;
}

GenerationResult harmonize(DiffusionBackend& backend, const Collage& collage, const GenerationConfig& config,
                           const TokenSet& tokens, const StepCallback& on_step) {
    validate_config(config);
    validate_collage(collage);
    if (collage.layers.empty()) {
        throw ValidationError("collage has no layers");
    }
    const AblationFlags& flags = config.ablation;
    if (flags.ln) {
        check_ln_precondition(collage, config);
    }
    if (flags.cn && !backend.supports_controlnet()) {
        throw BackendError("backend '" + backend.identifier() + "' has no ControlNet");
    }
    const Dims latent = backend.latent_dims(collage.canvas);
    const auto placed = rasterize_layers(collage);
    const ImageF composite = composite_layers(placed, placed.size());
    const Latent x_c = backend.encode_image(composite);

    PromptEncoding encoding = encode_prompt(collage.prompt, backend.tokenizer());
    if (flags.ti) {
        for (std::size_t i = 0; i < collage.layers.size(); ++i) {
            const auto& layer = collage.layers[i];
            if (!layer.inverted_token) {
                continue;
            }
            const auto it = tokens.find(static_cast<int>(i) + 1);
            if (it == tokens.end()) {
                throw ValidationError("missing inverted token for layer '" + layer.name + "'");
            }
            check_token_compatible(it->second, backend);
            encoding = inject_token(collage, encoding, it->second, static_cast<int>(i) + 1).encoding;
        }
    }
    const Matrix ctx = backend.encode_prompt(encoding);
    const Matrix neg = backend.encode_prompt(encode_prompt(negative_text(collage, config), backend.tokenizer()));

    HookInstallation hooks;
    if (flags.ca) {
        const TokenRoleMap roles = classify_tokens(collage, encoding);
        hooks = install_hooks(backend, latent, build_biases(backend, latent, collage, roles),
                              AttentionStrengths::from_layers(collage));
    }

    GridD hint;
    ControlWeightMap weight_map;
    const bool use_control = flags.cn || config.controlnet_scale.has_value();
    if (use_control) {
        if (!backend.supports_controlnet()) {
            throw BackendError("backend '" + backend.identifier() + "' has no ControlNet");
        }
        hint = canny_edges(composite);
        if (flags.cn) {
            std::vector<double> w;
            for (const auto& l : collage.layers) w.push_back(l.controlnet_weight);
            weight_map = build_weight_map(placed, w, collage.canvas);
        }
    }

    NoiseImage noise_image;
    NormalRng ln_rng = make_rng(config.seed, RngStream::LayerNoise);
    if (flags.ln) {
        std::vector<double> levels;
        for (const auto& l : collage.layers) levels.push_back(l.noise_level);
        noise_image = build_noise_image(placed, levels, latent, config.blur_sigma, config.start_noise);
    }

    const auto times = time_grid(config.steps, config.start_noise);
    NormalRng rng = make_rng(config.seed, RngStream::Sampler);
    Latent x = add_noise(x_c, backend.sigma(times.front()), rng);
    const int total = static_cast<int>(times.size()) - 1;
    for (int k = 0; k < total; ++k) {
        const double sigma = backend.sigma(times[k]);
        const double sigma_next = backend.sigma(times[k + 1]);
        std::vector<Tensor3> control;
        if (use_control) {
            control = backend.control_features(hint, x, sigma, ctx);
            control = flags.cn ? apply_weights(std::move(control), weight_map)
                               : apply_scalar_weight(std::move(control), *config.controlnet_scale);
        }
        const std::vector<Tensor3>* control_ptr = use_control ? &control : nullptr;
        Latent den = backend.denoise(x, sigma, ctx, ContextKind::Prompt, control_ptr);
        if (config.guidance_scale != 1.0) {
            den = guide(den, backend.denoise(x, sigma, neg, ContextKind::Negative, control_ptr),
                        config.guidance_scale);
        }
        x = euler_ancestral_step(x, den, sigma, sigma_next, rng);
        if (flags.ln) {
            x = blended_step(x, blend_mask(noise_image, times[k]), x_c, sigma_next, ln_rng);
        }
        if (on_step) {
            on_step({k + 1, total, times[k + 1], sigma_next, &x});
        }
    }
    hooks.uninstall();

    GenerationResult result;
    result.seed = config.seed;
    result.image = to_bytes(backend.decode_latent(x));
    result.latent = std::move(x);
    result.sidecar = make_sidecar(backend, collage, config, "generate");
    return result;
}

std::vector<GenerationResult> harmonize_seeds(DiffusionBackend& backend, const Collage& collage,
                                              GenerationConfig config, const std::vector<std::uint64_t>& seeds,
                                              const TokenSet& tokens) {
    std::vector<GenerationResult> out;
    for (const auto seed : seeds) {
        config.seed = seed;
        out.push_back(harmonize(backend, collage, config, tokens));
    }
    return out;
}

Collage refinement_collage(const Image8& base, const Layer& foreground, const Collage& source) {
    if (base.dims() != source.canvas) {
        throw ValidationError("base image is " + std::to_string(base.width) + "x" + std::to_string(base.height) +
                              " but the canvas is " + std::to_string(source.canvas.width) + "x" +
                              std::to_string(source.canvas.height));
    }
    Collage c;
    c.prompt = source.prompt;
    c.negative_prompt = source.negative_prompt;
    c.canvas = source.canvas;
    Layer background;
    background.name = "background";
    background.image = base;
    background.noise_level = 0.0;
    background.controlnet_weight = 1.0;
    background.attn_pos = 0.0;
    background.attn_neg = 0.0;
    c.layers.push_back(std::move(background));
    c.layers.push_back(foreground);
    return c;
}

Image8 round_trip(const DiffusionBackend& backend, const ImageF& image) {
    return to_bytes(backend.decode_latent(backend.encode_image(image)));
}

GenerationResult refine_layer(DiffusionBackend& backend, const Image8& base, const Layer& foreground,
                              const Collage& source, const GenerationConfig& config, const RefineOptions& options,
                              const StepCallback& on_step) {
    const Collage c = refinement_collage(base, foreground, source);
    validate_collage(c);
    const auto placed = rasterize_layers(c);
    const auto alpha = alpha_channel(placed[1]);
    const bool visible = std::any_of(alpha.data().begin(), alpha.data().end(), [](double a) { return a > 0.0; });
    if (!visible) {
        if (!options.allow_empty_foreground) {
            throw OccludedLayerError("layer '" + foreground.name + "' has no visible pixels to refine");
        }
        GenerationResult r;
        r.seed = config.seed;
        r.latent = backend.encode_image(to_float(base));
        r.image = to_bytes(backend.decode_latent(r.latent));
        r.sidecar = make_sidecar(backend, c, config, "refine");
        return r;
    }
    GenerationConfig cfg = config;
    cfg.ablation.ln = true;
    TokenSet tokens;
    Collage run = c;
    if (options.token && cfg.ablation.ti) {
        tokens[2] = *options.token;
        if (!run.layers[1].inverted_token) {
            run.layers[1].inverted_token = "token";
        }
    } else {
        run.layers[1].inverted_token.reset();
    }
    GenerationResult r = harmonize(backend, run, cfg, tokens, on_step);
    r.sidecar = make_sidecar(backend, c, cfg, "refine");
    return r;
}

std::unique_ptr<DiffusionBackend> make_backend(const json& config) {
    const std::string kind = config.value("kind", "mock");
    if (kind == "checkpoint") {
        throw BackendError("the checkpoint backend is not compiled into this build (checkpoint: " +
                           config.value("path", std::string("<unset>")) + ")");
    }
    if (kind != "mock") {
        throw ValidationError("unknown backend kind '" + kind + "'");
    }
    MockBackendConfig m;
    try {
        m.seed = config.value("seed", m.seed);
        if (config.contains("latent")) {
            m.latent = {config.at("latent").at(0).get<int>(), config.at("latent").at(1).get<int>()};
        }
        m.token_width = config.value("token_width", m.token_width);
        if (config.contains("attention_resolutions")) {
            m.attention_resolutions.clear();
            for (const auto& r : config.at("attention_resolutions")) {
                m.attention_resolutions.push_back({r.at(0).get<int>(), r.at(1).get<int>()});
            }
        }
        m.heads = config.value("heads", m.heads);
        m.head_dim = config.value("head_dim", m.head_dim);
        m.merges = config.value("merges", m.merges);
        m.sigma_max = config.value("sigma_max", m.sigma_max);
        m.residual_gain = config.value("residual_gain", m.residual_gain);
    } catch (const json::exception& e) {
        throw ValidationError(std::string("invalid mock backend config: ") + e.what());
    }
    return std::make_unique<MockBackend>(m);
}

json backend_config_from_env() {
    const char* path = std::getenv("COLLAGE_BACKEND_CONFIG");
    if (path == nullptr || *path == '\0') {
        return json{{"kind", "mock"}};
    }
    std::ifstream in(path);
    if (!in) {
        throw ValidationError(std::string("cannot read backend config: ") + path);
    }
    try {
        return json::parse(in);
    } catch (const json::exception& e) {
        throw ValidationError(std::string("invalid backend config ") + path + ": " + e.what());
    }
}

}  // namespace collage
