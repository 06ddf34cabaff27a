#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <string>
#include <vector>

#include "collage/backend.hpp"
#include "collage/collage.hpp"
#include "collage/token_mapping.hpp"

namespace collage {

// A learned modifier-token embedding for one layer.
struct InvertedToken {
    std::string layer_name;
    std::string backend_id;
    std::vector<double> embedding;
    int steps_trained = 0;
    double initial_loss = 0.0;
    double final_loss = 0.0;

    bool operator==(const InvertedToken&) const = default;
};

struct InversionTarget {
    ImageF target;  // over-composite of layers 1..i
    GridD mask;     // placed alpha of layer i, canvas resolution
};

// `layer_index` is 1-based.
InversionTarget build_inversion_target(const Collage& collage, std::size_t layer_index);

struct InversionConfig {
    int steps = 500;
    double learning_rate = 5e-3;
    std::uint64_t seed = 0;
    // RMSProp second-moment decay and denominator guard.
    double beta = 0.999;
    double epsilon = 1e-8;
    // Fixed (sigma, noise) draws used to report initial and final loss.
    int eval_draws = 8;
    std::string init_word = "nice";
};

struct InversionProgress {
    int step = 0;
    int total = 0;
    double loss = 0.0;
};

// Mean over latent elements of (mask * (target - pred))^2; the mask
// broadcasts over channels.
double inversion_loss(const Latent& target, const Latent& pred, const GridD& mask);
// d inversion_loss / d pred.
Latent inversion_loss_grad(const Latent& target, const Latent& pred, const GridD& mask);

// [start, <a>, tokens of the layer text, end] with <a> at position 1.
PromptEncoding inversion_prompt(const Tokenizer& tokenizer, const Layer& layer, std::vector<double> embedding,
                                int layer_index);

// Optimizes the modifier token against the masked denoising loss with one
// noise draw per step. Throws InversionDivergedError on a non-finite loss
// or gradient, and BackendError when hooks are installed.
InvertedToken invert_layer(DiffusionBackend& backend, const Collage& collage, std::size_t layer_index,
                           const InversionConfig& config,
                           const std::function<void(const InversionProgress&)>& progress = {});

// Loss of `embedding` averaged over the config's fixed evaluation draws.
double evaluate_inversion_loss(DiffusionBackend& backend, const Collage& collage, std::size_t layer_index,
                               const std::vector<double>& embedding, const InversionConfig& config);

// Inserts the token before the first layer token of `layer_index` and
// reclassifies roles. Throws ValidationError when the layer has no layer
// tokens, the token belongs to a different layer, or the prompt would exceed
// the token limit.
struct Injection {
    PromptEncoding encoding;
    TokenRoleMap roles;
};
Injection inject_token(const Collage& collage, const PromptEncoding& encoding, const InvertedToken& token,
                       int layer_index);
PromptEncoding remove_token(const PromptEncoding& encoding, int layer_index);

void save_token(const std::filesystem::path& path, const InvertedToken& token);
InvertedToken load_token(const std::filesystem::path& path);
// Throws ValidationError when the token was trained for another backend or width.
void check_token_compatible(const InvertedToken& token, const DiffusionBackend& backend);

}  // namespace collage
