#pragma once

// Independent brute-force reference computations shared by the unit tests
// and the acceptance binary.

#include <array>
#include <cmath>
#include <vector>

#include "collage/attention.hpp"
#include "collage/collage.hpp"

namespace oracles {

// Straight-alpha "over" of the first `count` layers at one pixel, in double.
inline std::array<double, 4> over(const std::vector<collage::ImageF>& placed, std::size_t count, int r, int c) {
    std::array<double, 4> out{0, 0, 0, 0};
    for (std::size_t k = 0; k < count; ++k) {
        const float* s = placed[k].pixel(r, c);
        const double sa = s[3];
        if (sa <= 0.0) continue;
        const double keep = out[3] * (1.0 - sa);
        const double oa = sa + keep;
        for (int ch = 0; ch < 3; ++ch) out[ch] = (s[ch] * sa + out[ch] * keep) / oa;
        out[3] = oa;
    }
    return out;
}

// Visibility by scanning from the top layer down and counting covered source
// pixels per destination block. Resolution must divide the canvas.
inline collage::GridI visibility(const std::vector<collage::ImageF>& placed, collage::Dims canvas,
                                 collage::Dims res) {
    const int bw = canvas.width / res.width, bh = canvas.height / res.height;
    collage::GridI out(res, 0);
    for (int r = 0; r < res.height; ++r) {
        for (int c = 0; c < res.width; ++c) {
            for (int k = static_cast<int>(placed.size()) - 1; k >= 0; --k) {
                int covered = 0;
                for (int y = r * bh; y < (r + 1) * bh; ++y)
                    for (int x = c * bw; x < (c + 1) * bw; ++x) covered += placed[k].pixel(y, x)[3] > 0.0f;
                if (2 * covered >= bw * bh) {
                    out.at(r, c) = k + 1;
                    break;
                }
            }
        }
    }
    return out;
}

// softmax((QK^T + w_pos A_pos - w_neg A_neg) / sqrt(d)) V evaluated one
// scalar at a time, with per-layer strengths and w = v ln(1 + ln(1 + sigma))
// max(0, max QK^T).
inline collage::Matrix biased_attention(const collage::Matrix& q, const collage::Matrix& k,
                                        const collage::Matrix& v, const std::vector<std::vector<int>>& pos,
                                        const std::vector<std::vector<int>>& neg,
                                        const std::vector<int>& column_layer,
                                        const std::vector<std::pair<double, double>>& strengths, double sigma) {
    const int nv = q.rows, nt = k.rows, d = q.cols;
    std::vector<std::vector<double>> logits(nv, std::vector<double>(nt, 0.0));
    double qk_max = 0.0;
    for (int i = 0; i < nv; ++i) {
        for (int j = 0; j < nt; ++j) {
            double s = 0.0;
            for (int x = 0; x < d; ++x) s += q.at(i, x) * k.at(j, x);
            logits[i][j] = s;
            qk_max = std::max(qk_max, s);
        }
    }
    const double sched = std::log(1.0 + std::log(1.0 + sigma));
    collage::Matrix out(nv, v.cols, 0.0);
    for (int i = 0; i < nv; ++i) {
        std::vector<double> z(nt);
        double zmax = -INFINITY;
        for (int j = 0; j < nt; ++j) {
            double b = 0.0;
            const int layer = column_layer[j];
            if (layer > 0) {
                const auto [vp, vn] = strengths[layer - 1];
                b = vp * sched * qk_max * pos[i][j] - vn * sched * qk_max * neg[i][j];
            }
            z[j] = (logits[i][j] + b) / std::sqrt(static_cast<double>(d));
            zmax = std::max(zmax, z[j]);
        }
        double sum = 0.0;
        for (int j = 0; j < nt; ++j) sum += std::exp(z[j] - zmax);
        for (int j = 0; j < nt; ++j) {
            const double p = std::exp(z[j] - zmax) / sum;
            for (int c = 0; c < v.cols; ++c) out.at(i, c) += p * v.at(j, c);
        }
    }
    return out;
}

}  // namespace oracles
