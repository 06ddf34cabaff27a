#pragma once

#include <map>
#include <utility>

#include "collage/attention.hpp"
#include "collage/backend.hpp"

namespace collage {

struct DimsLess {
    bool operator()(const Dims& a, const Dims& b) const {
        return std::pair(a.height, a.width) < std::pair(b.height, b.width);
    }
};

using BiasByResolution = std::map<Dims, AttentionBias, DimsLess>;

// Revocable hook installation. Uninstalls on destruction.
class HookInstallation {
public:
    HookInstallation() = default;
    explicit HookInstallation(DiffusionBackend* backend) : backend_(backend) {}
    HookInstallation(const HookInstallation&) = delete;
    HookInstallation& operator=(const HookInstallation&) = delete;
    HookInstallation(HookInstallation&& other) noexcept : backend_(std::exchange(other.backend_, nullptr)) {}
    HookInstallation& operator=(HookInstallation&& other) noexcept {
        if (this != &other) {
            uninstall();
            backend_ = std::exchange(other.backend_, nullptr);
        }
        return *this;
    }
    ~HookInstallation() { uninstall(); }

    bool active() const { return backend_ != nullptr; }
    void uninstall();

private:
    DiffusionBackend* backend_ = nullptr;
};

// Routes every prompt-conditioned cross-attention call of `backend` through
// biased_cross_attention with the bias of the call's resolution and the
// sigma of the current denoiser evaluation. Throws BackendError when a site
// resolution has no bias, when bias widths do not match the tokenizer length,
// or when hooks are already installed.
HookInstallation install_hooks(DiffusionBackend& backend, Dims latent, BiasByResolution biases,
                               AttentionStrengths strengths);

// Biases for every attention resolution of the backend at `latent` dims.
BiasByResolution build_biases(const DiffusionBackend& backend, Dims latent, const Collage& collage,
                              const TokenRoleMap& roles);

}  // namespace collage
