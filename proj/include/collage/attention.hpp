#pragma once

#include <cstdint>
#include <vector>

#include "collage/collage.hpp"
#include "collage/tensor.hpp"
#include "collage/token_mapping.hpp"

namespace collage {

// Positive/negative attention maps (N_v x N_t, row-major, values 0/1) at one
// attention resolution. column_layer[j] is the owning layer of token column j
// (0 for global tokens, whose columns are all zero).
struct AttentionBias {
    Dims resolution;
    int tokens = 0;
    std::vector<std::uint8_t> pos;
    std::vector<std::uint8_t> neg;
    std::vector<int> column_layer;

    int cells() const { return resolution.width * resolution.height; }
    bool positive(int cell, int token) const { return pos[static_cast<std::size_t>(cell) * tokens + token] != 0; }
    bool negative(int cell, int token) const { return neg[static_cast<std::size_t>(cell) * tokens + token] != 0; }
    bool operator==(const AttentionBias&) const = default;
};

// User strengths v_pos / v_neg. per_layer[j - 1], when present, overrides the
// defaults for layer j.
struct AttentionStrengths {
    struct Pair {
        double pos = 0.0;
        double neg = 0.0;
    };
    double v_pos = 0.0;
    double v_neg = 0.0;
    std::vector<Pair> per_layer;

    Pair for_layer(int layer) const;
    bool all_zero() const;
    static AttentionStrengths from_layers(const Collage& collage);
};

AttentionBias build_bias(const VisibilityMap& visibility, const TokenRoleMap& roles);

// v * ln(1 + ln(1 + sigma)) * qk_max
double schedule_weight(double v, double sigma, double qk_max);

struct AttentionResult {
    Matrix output;         // N_v x d_v
    Matrix probabilities;  // N_v x N_t
};

// softmax((Q K^T + w_pos A_pos - w_neg A_neg) / sqrt(d)) V for one head.
// Weights come from schedule_weight with qk_max = max(0, max(Q K^T)) of this
// call. With bias == nullptr, zero strengths, or sigma == 0 the result is
// plain attention, bit for bit. Throws std::invalid_argument on shape
// mismatches or non-finite inputs.
AttentionResult biased_cross_attention(const Matrix& q, const Matrix& k, const Matrix& v, const AttentionBias* bias,
                                       const AttentionStrengths& strengths, double sigma);

inline AttentionResult cross_attention(const Matrix& q, const Matrix& k, const Matrix& v) {
    return biased_cross_attention(q, k, v, nullptr, AttentionStrengths{}, 0.0);
}

}  // namespace collage
