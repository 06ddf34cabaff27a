#pragma once

#include <memory>
#include <string>
#include <vector>

#include "collage/attention.hpp"
#include "collage/grid.hpp"
#include "collage/image.hpp"
#include "collage/rng.hpp"
#include "collage/tensor.hpp"
#include "collage/token_mapping.hpp"
#include "collage/tokenizer.hpp"

namespace collage {

// A text-image cross-attention site of the denoiser.
struct AttentionSite {
    std::string name;
    Dims resolution;
    int heads = 1;
    int head_dim = 1;

    int cells() const { return resolution.width * resolution.height; }
    bool operator==(const AttentionSite&) const = default;
};

// Which text conditioning a denoiser evaluation runs with. Negative-prompt
// (unconditional) evaluations never receive layer biases.
enum class ContextKind { Prompt, Negative };

struct AttentionCall {
    const AttentionSite* site = nullptr;
    int head = 0;
    double sigma = 0.0;
    ContextKind context = ContextKind::Prompt;
    const Matrix* q = nullptr;
    const Matrix* k = nullptr;
    const Matrix* v = nullptr;
};

// Replaces the attention kernel at every cross-attention call.
class AttentionProcessor {
public:
    virtual ~AttentionProcessor() = default;
    virtual AttentionResult process(const AttentionCall& call) = 0;
};

// Sees every cross-attention call and its result (instrumentation only).
class AttentionObserver {
public:
    virtual ~AttentionObserver() = default;
    virtual void observe(const AttentionCall& call, const AttentionResult& result) = 0;
};

// Latent diffusion model as seen by the pipeline. Time t is normalized to
// [0, 1] over the full schedule; sigma(t) maps it to a noise level.
// Instances are not thread-safe: one job at a time.
class DiffusionBackend {
public:
    virtual ~DiffusionBackend() = default;

    virtual std::string identifier() const = 0;
    virtual const Tokenizer& tokenizer() const = 0;
    virtual int embedding_width() const = 0;
    virtual int latent_stride() const = 0;
    virtual int latent_channels() const = 0;

    // Throws ValidationError unless canvas is a positive multiple of the stride.
    Dims latent_dims(Dims canvas) const;

    virtual double sigma(double t) const = 0;
    virtual double sample_training_sigma(NormalRng& rng) const = 0;

    // max_length x embedding_width input embeddings, including padding.
    // Injected tokens contribute their own vectors.
    virtual Matrix token_embeddings(const PromptEncoding& encoding) const = 0;
    virtual Matrix encode_text(const Matrix& token_embeddings) const = 0;
    Matrix encode_prompt(const PromptEncoding& encoding) const { return encode_text(token_embeddings(encoding)); }
    // Mean input embedding of the tokens of `text`.
    virtual std::vector<double> embedding_of(const std::string& text) const = 0;

    virtual Latent encode_image(const ImageF& image) const = 0;
    virtual ImageF decode_latent(const Latent& latent) const = 0;

    virtual std::vector<AttentionSite> attention_sites(Dims latent) const = 0;

    // Denoised estimate D(x; sigma, context). `control` holds one residual
    // per attention site (in attention_sites order) or is null.
    virtual Latent denoise(const Latent& x, double sigma, const Matrix& context, ContextKind kind,
                           const std::vector<Tensor3>* control) = 0;

    // Gradient of <grad_output, D(x; sigma, encode_text(embeddings))> with
    // respect to row `position` of `embeddings`. Requires no installed hooks.
    virtual std::vector<double> denoise_embedding_vjp(const Latent& x, double sigma, const Matrix& embeddings,
                                                      int position, const Latent& grad_output) const = 0;

    virtual bool supports_controlnet() const = 0;
    // Auxiliary-network outputs, one per attention site, before weighting.
    virtual std::vector<Tensor3> control_features(const GridD& hint, const Latent& x, double sigma,
                                                  const Matrix& context) const = 0;

    virtual std::string weights_checksum() const = 0;

    void set_attention_processor(std::shared_ptr<AttentionProcessor> processor) { processor_ = std::move(processor); }
    const std::shared_ptr<AttentionProcessor>& attention_processor() const { return processor_; }
    void set_attention_observer(AttentionObserver* observer) { observer_ = observer; }
    AttentionObserver* attention_observer() const { return observer_; }
    int installed_hooks() const { return processor_ ? 1 : 0; }

protected:
    // Dispatches to the installed processor or the plain kernel, then
    // notifies the observer.
    AttentionResult run_attention(const AttentionCall& call);

private:
    std::shared_ptr<AttentionProcessor> processor_;
    AttentionObserver* observer_ = nullptr;
};

}  // namespace collage
