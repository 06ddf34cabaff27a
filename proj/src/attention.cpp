#include "collage/attention.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace collage {

namespace {

void require_finite(const Matrix& m, const char* name) {
    for (double v : m.data) {
        if (!std::isfinite(v)) {
            throw std::invalid_argument(std::string("attention input ") + name + " has non-finite entries");
        }
    }
}

}  // namespace

AttentionStrengths::Pair AttentionStrengths::for_layer(int layer) const {
    if (layer > 0 && static_cast<std::size_t>(layer) <= per_layer.size()) {
        return per_layer[static_cast<std::size_t>(layer) - 1];
    }
    return {v_pos, v_neg};
}

bool AttentionStrengths::all_zero() const {
    if (v_pos != 0.0 || v_neg != 0.0) {
        return false;
    }
    return std::all_of(per_layer.begin(), per_layer.end(), [](const Pair& p) { return p.pos == 0.0 && p.neg == 0.0; });
}

AttentionStrengths AttentionStrengths::from_layers(const Collage& collage) {
    AttentionStrengths s;
    for (const auto& layer : collage.layers) {
        s.per_layer.push_back({layer.attn_pos, layer.attn_neg});
    }
    return s;
}

AttentionBias build_bias(const VisibilityMap& visibility, const TokenRoleMap& roles) {
    AttentionBias bias;
    bias.resolution = visibility.resolution();
    bias.tokens = static_cast<int>(roles.token_count());
    const auto cells = static_cast<std::size_t>(bias.cells());
    const auto tokens = static_cast<std::size_t>(bias.tokens);
    bias.pos.assign(cells * tokens, 0);
    bias.neg.assign(cells * tokens, 0);
    bias.column_layer = roles.roles;
    for (std::size_t j = 0; j < tokens; ++j) {
        const int layer = roles.roles[j];
        if (layer == 0) {
            continue;
        }
        for (std::size_t i = 0; i < cells; ++i) {
            const bool visible = visibility.indices[i] == layer;
            bias.pos[i * tokens + j] = visible ? 1 : 0;
            bias.neg[i * tokens + j] = visible ? 0 : 1;
        }
    }
    return bias;
}

double schedule_weight(double v, double sigma, double qk_max) {
    if (sigma < 0.0) {
        throw std::invalid_argument("schedule_weight: sigma must be >= 0");
    }
    return v * std::log(1.0 + std::log(1.0 + sigma)) * qk_max;
}

AttentionResult biased_cross_attention(const Matrix& q, const Matrix& k, const Matrix& v, const AttentionBias* bias,
                                       const AttentionStrengths& strengths, double sigma) {
    if (q.cols <= 0 || q.cols != k.cols) {
        throw std::invalid_argument("attention: query/key widths differ or are empty");
    }
    if (k.rows != v.rows) {
        throw std::invalid_argument("attention: key/value token counts differ");
    }
    if (!std::isfinite(sigma) || sigma < 0.0) {
        throw std::invalid_argument("attention: sigma must be finite and >= 0");
    }
    require_finite(q, "Q");
    require_finite(k, "K");
    require_finite(v, "V");
    if (bias != nullptr && (bias->cells() != q.rows || bias->tokens != k.rows)) {
        throw std::invalid_argument("attention: bias is " + std::to_string(bias->cells()) + "x" +
                                    std::to_string(bias->tokens) + " but QK^T is " + std::to_string(q.rows) + "x" +
                                    std::to_string(k.rows));
    }

    Matrix logits = matmul_transposed(q, k);
    const int n_v = logits.rows;
    const int n_t = logits.cols;

    if (bias != nullptr && sigma > 0.0 && !strengths.all_zero()) {
        const double qk_max = std::max(0.0, *std::max_element(logits.data.begin(), logits.data.end()));
        std::vector<double> w_pos(static_cast<std::size_t>(n_t), 0.0);
        std::vector<double> w_neg(static_cast<std::size_t>(n_t), 0.0);
        bool any = false;
        for (int j = 0; j < n_t; ++j) {
            const int layer = bias->column_layer[static_cast<std::size_t>(j)];
            if (layer == 0) {
                continue;
            }
            const auto pair = strengths.for_layer(layer);
            w_pos[j] = schedule_weight(pair.pos, sigma, qk_max);
            w_neg[j] = schedule_weight(pair.neg, sigma, qk_max);
            any = any || w_pos[j] != 0.0 || w_neg[j] != 0.0;
        }
        if (any) {
            for (int i = 0; i < n_v; ++i) {
                double* row = logits.row(i);
                for (int j = 0; j < n_t; ++j) {
                    if (bias->positive(i, j)) row[j] += w_pos[j];
                    if (bias->negative(i, j)) row[j] -= w_neg[j];
                }
            }
        }
    }

    const double scale = std::sqrt(static_cast<double>(q.cols));
    for (int i = 0; i < n_v; ++i) {
        double* row = logits.row(i);
        double row_max = -INFINITY;
        for (int j = 0; j < n_t; ++j) {
            row[j] /= scale;
            row_max = std::max(row_max, row[j]);
        }
        double sum = 0.0;
        for (int j = 0; j < n_t; ++j) {
            row[j] = std::exp(row[j] - row_max);
            sum += row[j];
        }
        for (int j = 0; j < n_t; ++j) {
            row[j] /= sum;
        }
    }
    AttentionResult result;
    result.output = matmul(logits, v);
    result.probabilities = std::move(logits);
    return result;
}

}  // namespace collage
