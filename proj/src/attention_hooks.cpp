#include "collage/attention_hooks.hpp"

#include "collage/errors.hpp"

namespace collage {

Dims DiffusionBackend::latent_dims(Dims canvas) const {
    const int stride = latent_stride();
    if (canvas.width <= 0 || canvas.height <= 0 || canvas.width % stride != 0 || canvas.height % stride != 0) {
        throw ValidationError("canvas " + std::to_string(canvas.width) + "x" + std::to_string(canvas.height) +
                              " is not a positive multiple of the latent stride " + std::to_string(stride));
    }
    return {canvas.width / stride, canvas.height / stride};
}

AttentionResult DiffusionBackend::run_attention(const AttentionCall& call) {
    AttentionResult result = processor_ ? processor_->process(call) : cross_attention(*call.q, *call.k, *call.v);
    if (observer_ != nullptr) {
        observer_->observe(call, result);
    }
    return result;
}

namespace {

class BiasProcessor final : public AttentionProcessor {
public:
    BiasProcessor(BiasByResolution biases, AttentionStrengths strengths)
        : biases_(std::move(biases)), strengths_(std::move(strengths)) {}

    AttentionResult process(const AttentionCall& call) override {
        if (call.context != ContextKind::Prompt) {
            return cross_attention(*call.q, *call.k, *call.v);
        }
        const auto it = biases_.find(call.site->resolution);
        if (it == biases_.end()) {
            throw BackendError("no attention bias for site '" + call.site->name + "'");
        }
        return biased_cross_attention(*call.q, *call.k, *call.v, &it->second, strengths_, call.sigma);
    }

private:
    BiasByResolution biases_;
    AttentionStrengths strengths_;
};

}  // namespace

void HookInstallation::uninstall() {
    if (backend_ != nullptr) {
        backend_->set_attention_processor(nullptr);
        backend_ = nullptr;
    }
}

HookInstallation install_hooks(DiffusionBackend& backend, Dims latent, BiasByResolution biases,
                               AttentionStrengths strengths) {
    if (backend.installed_hooks() != 0) {
        throw BackendError("attention hooks are already installed on this backend");
    }
    const int tokens = backend.tokenizer().max_length();
    for (const auto& site : backend.attention_sites(latent)) {
        const auto it = biases.find(site.resolution);
        if (it == biases.end()) {
            throw BackendError("no attention bias built for site '" + site.name + "' at " +
                               std::to_string(site.resolution.width) + "x" + std::to_string(site.resolution.height));
        }
        if (it->second.tokens != tokens) {
            throw BackendError("attention bias for site '" + site.name + "' has " + std::to_string(it->second.tokens) +
                               " token columns, backend uses " + std::to_string(tokens));
        }
    }
    backend.set_attention_processor(std::make_shared<BiasProcessor>(std::move(biases), std::move(strengths)));
    return HookInstallation(&backend);
}

BiasByResolution build_biases(const DiffusionBackend& backend, Dims latent, const Collage& collage,
                              const TokenRoleMap& roles) {
    BiasByResolution out;
    const auto placed = rasterize_layers(collage);
    for (const auto& site : backend.attention_sites(latent)) {
        if (out.count(site.resolution) == 0) {
            out.emplace(site.resolution, build_bias(compute_visibility(placed, site.resolution), roles));
        }
    }
    return out;
}

}  // namespace collage
