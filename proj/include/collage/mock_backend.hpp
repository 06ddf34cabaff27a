#pragma once

#include <cstdint>
#include <memory>
#include <string>
#include <vector>

#include "collage/backend.hpp"

namespace collage {

struct MockBackendConfig {
    std::uint64_t seed = 1;
    // Latent dims the backend is built for; attention resolutions must divide them.
    Dims latent{8, 8};
    int token_width = 32;
    std::vector<Dims> attention_resolutions{{8, 8}, {4, 4}};
    int heads = 2;
    int head_dim = 8;
    int max_length = 77;
    int merges = 320;
    double sigma_max = 4.0;
    double residual_gain = 0.3;
};

// Tiny randomly-initialized latent denoiser with real cross-attention sites.
//
// Latents have 4 channels at stride 8: block-mean RGB mapped to [-1, 1] plus a
// luma channel. The denoiser predicts noise as the Gaussian-optimal estimate
// plus a residual from a 3x3 convolution and one cross-attention block per
// attention resolution; sigma(t) = sigma_max * t.
class MockBackend final : public DiffusionBackend {
public:
    explicit MockBackend(MockBackendConfig config = {});

    std::string identifier() const override;
    const Tokenizer& tokenizer() const override { return *tokenizer_; }
    int embedding_width() const override { return config_.token_width; }
    int latent_stride() const override { return 8; }
    int latent_channels() const override { return 4; }

    double sigma(double t) const override { return config_.sigma_max * t; }
    double sample_training_sigma(NormalRng& rng) const override;

    Matrix token_embeddings(const PromptEncoding& encoding) const override;
    Matrix encode_text(const Matrix& token_embeddings) const override;
    std::vector<double> embedding_of(const std::string& text) const override;

    Latent encode_image(const ImageF& image) const override;
    ImageF decode_latent(const Latent& latent) const override;

    std::vector<AttentionSite> attention_sites(Dims latent) const override;

    Latent denoise(const Latent& x, double sigma, const Matrix& context, ContextKind kind,
                   const std::vector<Tensor3>* control) override;
    std::vector<double> denoise_embedding_vjp(const Latent& x, double sigma, const Matrix& embeddings, int position,
                                              const Latent& grad_output) const override;

    bool supports_controlnet() const override { return true; }
    std::vector<Tensor3> control_features(const GridD& hint, const Latent& x, double sigma,
                                          const Matrix& context) const override;

    std::string weights_checksum() const override;

    const MockBackendConfig& config() const { return config_; }

private:
    struct SiteWeights {
        int pool = 1;
        Matrix w_in;   // C x D
        Matrix b_in;   // 1 x D
        Matrix t_vec;  // 1 x D
        std::vector<Matrix> wq;  // D x hd per head
        std::vector<Matrix> wk;  // W x hd per head
        std::vector<Matrix> wv;  // W x hd per head
        Matrix w_out;  // D x C
        // ControlNet branch
        Matrix cn_hint;  // 1 x D
        Matrix cn_x;     // C x D
        Matrix cn_bias;  // 1 x D
    };

    int model_dim() const { return config_.heads * config_.head_dim; }
    Matrix site_features(const SiteWeights& w, const Latent& x_in, double sigma) const;
    void check_latent(const Latent& x) const;

    MockBackendConfig config_;
    std::unique_ptr<BpeTokenizer> tokenizer_;
    Matrix embed_;     // vocab x W
    Matrix position_;  // L x W
    Matrix w_text_;    // W x W
    Matrix b_text_;    // 1 x W
    std::vector<double> conv_;  // C x C x 3 x 3
    std::vector<SiteWeights> sites_;
    double cn_gain_ = 0.5;
};

// Average-pools each channel by `factor`, returning N_v x C rows (row-major cells).
Matrix pool_cells(const Tensor3& x, int factor);

}  // namespace collage
