#include "collage/grid.hpp"

#include <algorithm>
#include <cmath>

namespace collage {

namespace {

struct Tap {
    int index;
    double weight;
};

// Source taps (with overlap length as weight) covering destination cell `i`
// when mapping `src_len` cells onto `dst_len` cells.
std::vector<Tap> area_taps(int i, int src_len, int dst_len) {
    const double scale = static_cast<double>(src_len) / dst_len;
    const double lo = i * scale;
    const double hi = (i + 1) * scale;
    std::vector<Tap> taps;
    const int first = static_cast<int>(std::floor(lo));
    const int last = std::min(src_len - 1, static_cast<int>(std::ceil(hi)) - 1);
    for (int s = first; s <= last; ++s) {
        const double overlap = std::min(hi, s + 1.0) - std::max(lo, static_cast<double>(s));
        if (overlap > 0.0) {
            taps.push_back({s, overlap});
        }
    }
    return taps;
}

struct LerpCoord {
    int i0;
    int i1;
    double frac;
};

LerpCoord bilinear_coord(int i, int src_len, int dst_len) {
    double u = (i + 0.5) * static_cast<double>(src_len) / dst_len - 0.5;
    u = std::clamp(u, 0.0, static_cast<double>(src_len - 1));
    const int i0 = static_cast<int>(std::floor(u));
    const int i1 = std::min(i0 + 1, src_len - 1);
    return {i0, i1, u - i0};
}

std::vector<double> gaussian_kernel(double sigma) {
    const int radius = static_cast<int>(std::ceil(3.0 * sigma));
    std::vector<double> k(2 * radius + 1);
    for (int d = -radius; d <= radius; ++d) {
        k[d + radius] = std::exp(-(d * d) / (2.0 * sigma * sigma));
    }
    return k;
}

}  // namespace

GridD area_resample(const GridD& src, Dims dst) {
    if (dst.width <= 0 || dst.height <= 0 || src.width() <= 0 || src.height() <= 0) {
        throw std::invalid_argument("area_resample: empty grid");
    }
    if (src.dims() == dst) {
        return src;
    }
    GridD out(dst);
    std::vector<std::vector<Tap>> col_taps(dst.width);
    for (int c = 0; c < dst.width; ++c) {
        col_taps[c] = area_taps(c, src.width(), dst.width);
    }
    for (int r = 0; r < dst.height; ++r) {
        const auto row_taps = area_taps(r, src.height(), dst.height);
        for (int c = 0; c < dst.width; ++c) {
            double sum = 0.0;
            double total = 0.0;
            for (const auto& rt : row_taps) {
                for (const auto& ct : col_taps[c]) {
                    const double w = rt.weight * ct.weight;
                    sum += w * src.at(rt.index, ct.index);
                    total += w;
                }
            }
            out.at(r, c) = sum / total;
        }
    }
    return out;
}

GridD bilinear_resize(const GridD& src, Dims dst) {
    if (dst.width <= 0 || dst.height <= 0 || src.width() <= 0 || src.height() <= 0) {
        throw std::invalid_argument("bilinear_resize: empty grid");
    }
    if (src.dims() == dst) {
        return src;
    }
    GridD out(dst);
    for (int r = 0; r < dst.height; ++r) {
        const auto y = bilinear_coord(r, src.height(), dst.height);
        for (int c = 0; c < dst.width; ++c) {
            const auto x = bilinear_coord(c, src.width(), dst.width);
            const double a = src.at(y.i0, x.i0);
            const double b = src.at(y.i0, x.i1);
            const double cc = src.at(y.i1, x.i0);
            const double d = src.at(y.i1, x.i1);
            // lerp form keeps constant regions exact
            const double top = a + (b - a) * x.frac;
            const double bottom = cc + (d - cc) * x.frac;
            out.at(r, c) = top + (bottom - top) * y.frac;
        }
    }
    return out;
}

GridD gaussian_blur(const GridD& src, double sigma) {
    if (sigma < 0.0 || !std::isfinite(sigma)) {
        throw std::invalid_argument("gaussian_blur: sigma must be finite and >= 0");
    }
    if (sigma == 0.0 || src.size() == 0) {
        return src;
    }
    const auto kernel = gaussian_kernel(sigma);
    const int radius = static_cast<int>(kernel.size() / 2);

    // Each pass computes center + sum(w * (v - center)) / sum(w), which equals
    // the normalized convolution but leaves constant neighbourhoods untouched.
    auto pass = [&](const GridD& in, bool horizontal) {
        GridD out(in.dims());
        for (int r = 0; r < in.height(); ++r) {
            for (int c = 0; c < in.width(); ++c) {
                const double center = in.at(r, c);
                double acc = 0.0;
                double total = 0.0;
                for (int d = -radius; d <= radius; ++d) {
                    const int rr = horizontal ? r : r + d;
                    const int cc = horizontal ? c + d : c;
                    if (rr < 0 || rr >= in.height() || cc < 0 || cc >= in.width()) {
                        continue;
                    }
                    const double w = kernel[d + radius];
                    acc += w * (in.at(rr, cc) - center);
                    total += w;
                }
                out.at(r, c) = center + acc / total;
            }
        }
        return out;
    };
    return pass(pass(src, true), false);
}

}  // namespace collage
