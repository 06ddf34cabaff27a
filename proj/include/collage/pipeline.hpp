#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "collage/backend.hpp"
#include "collage/collage.hpp"
#include "collage/layer_inversion.hpp"

namespace collage {

// CA: cross-attention biasing. TI: per-layer modifier tokens. LN: per-layer
// noise levels. CN: per-layer ControlNet weight maps.
struct AblationFlags {
    bool ca = false;
    bool ti = false;
    bool ln = false;
    bool cn = false;

    bool any() const { return ca || ti || ln || cn; }
    bool operator==(const AblationFlags&) const = default;
};

// Parses "gh", "gh+ca", "gh+ca+ti+ln", ... (order-insensitive after "gh").
AblationFlags parse_ablation(const std::string& name);
std::string ablation_name(const AblationFlags& flags);

struct GenerationConfig {
    std::uint64_t seed = 0;
    double start_noise = 0.75;
    int steps = 50;
    std::string solver = "euler_ancestral";
    AblationFlags ablation;
    double guidance_scale = 7.5;
    // Overrides the collage's negative prompt when set.
    std::optional<std::string> negative_prompt;
    // Blur of the noise image, in latent cells.
    double blur_sigma = 1.0;
    // Standard scalar-weight ControlNet when per-layer weighting (CN) is off.
    std::optional<double> controlnet_scale;

    bool operator==(const GenerationConfig&) const = default;
};

nlohmann::json config_to_json(const GenerationConfig& config);
// Missing fields keep the values of `base`.
GenerationConfig config_from_json(const nlohmann::json& j, const GenerationConfig& base = {});

// Throws ValidationError on out-of-range values.
void validate_config(const GenerationConfig& config);

// Learned tokens by 1-based layer index.
using TokenSet = std::map<int, InvertedToken>;

// Loads every layer's referenced token blob relative to `project_dir`.
TokenSet load_project_tokens(const Collage& collage, const std::filesystem::path& project_dir);

struct StepInfo {
    int step = 0;   // 1-based index of the completed solver step
    int total = 0;
    double t = 0.0;
    double sigma_next = 0.0;
    const Latent* x = nullptr;
};
using StepCallback = std::function<void(const StepInfo&)>;

struct GenerationResult {
    std::uint64_t seed = 0;
    Latent latent;
    Image8 image;
    nlohmann::json sidecar;
};

// Plain SDEdit: encode the composite, add noise at sigma(start_noise), run
// the solver, decode. All ablation flags must be off.
GenerationResult sdedit_harmonize(DiffusionBackend& backend, const Collage& collage, const GenerationConfig& config,
                                  const StepCallback& on_step = {});

// SDEdit augmented by the enabled ablation flags. Hooks are removed before
// returning, including on error.
GenerationResult harmonize(DiffusionBackend& backend, const Collage& collage, const GenerationConfig& config,
                           const TokenSet& tokens = {}, const StepCallback& on_step = {});

std::vector<GenerationResult> harmonize_seeds(DiffusionBackend& backend, const Collage& collage,
                                              GenerationConfig config, const std::vector<std::uint64_t>& seeds,
                                              const TokenSet& tokens = {});

struct RefineOptions {
    // When the foreground has no visible pixels, return the base image's
    // encode/decode round trip instead of throwing OccludedLayerError.
    bool allow_empty_foreground = false;
    std::optional<InvertedToken> token;
};

// Two-layer collage: `base` as a background with noise level 0 and the
// foreground layer in front, harmonized with LN on. `source` supplies the
// prompt the layer's span refers to.
Collage refinement_collage(const Image8& base, const Layer& foreground, const Collage& source);

GenerationResult refine_layer(DiffusionBackend& backend, const Image8& base, const Layer& foreground,
                              const Collage& source, const GenerationConfig& config, const RefineOptions& options = {},
                              const StepCallback& on_step = {});

// Decode(encode(image)) of the composite: what generation returns when no
// denoising happens.
Image8 round_trip(const DiffusionBackend& backend, const ImageF& image);

// Backend from a JSON config: {"kind": "mock", ...} or {"kind": "checkpoint", ...}.
std::unique_ptr<DiffusionBackend> make_backend(const nlohmann::json& config);
// Reads the config file named by COLLAGE_BACKEND_CONFIG, or the default mock.
nlohmann::json backend_config_from_env();

}  // namespace collage
