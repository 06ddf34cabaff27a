#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>
#include <vector>

#include "collage/grid.hpp"

namespace collage {

// Dense row-major matrix of doubles.
struct Matrix {
    int rows = 0;
    int cols = 0;
    std::vector<double> data;

    Matrix() = default;
    Matrix(int r, int c, double fill = 0.0) : rows(r), cols(c), data(static_cast<std::size_t>(r) * c, fill) {}

    double& at(int r, int c) { return data[static_cast<std::size_t>(r) * cols + c]; }
    double at(int r, int c) const { return data[static_cast<std::size_t>(r) * cols + c]; }
    const double* row(int r) const { return &data[static_cast<std::size_t>(r) * cols]; }
    double* row(int r) { return &data[static_cast<std::size_t>(r) * cols]; }
    bool operator==(const Matrix&) const = default;
};

// a (n x k) * b (k x m)
Matrix matmul(const Matrix& a, const Matrix& b);
// a (n x k) * b^T where b is (m x k)
Matrix matmul_transposed(const Matrix& a, const Matrix& b);
Matrix transpose(const Matrix& a);

// Channel-major 3-D tensor (channels x height x width). Used for latents and
// ControlNet feature maps.
struct Tensor3 {
    int channels = 0;
    int height = 0;
    int width = 0;
    std::vector<double> data;

    Tensor3() = default;
    Tensor3(int c, int h, int w, double fill = 0.0)
        : channels(c), height(h), width(w), data(static_cast<std::size_t>(c) * h * w, fill) {}

    Dims dims() const { return {width, height}; }
    std::size_t plane() const { return static_cast<std::size_t>(height) * width; }
    double& at(int c, int r, int col) { return data[c * plane() + static_cast<std::size_t>(r) * width + col]; }
    double at(int c, int r, int col) const { return data[c * plane() + static_cast<std::size_t>(r) * width + col]; }
    bool same_shape(const Tensor3& o) const { return channels == o.channels && height == o.height && width == o.width; }
    bool operator==(const Tensor3&) const = default;
};

using Latent = Tensor3;

inline void require_same_shape(const Tensor3& a, const Tensor3& b, const char* what) {
    if (!a.same_shape(b)) {
        throw std::invalid_argument(std::string(what) + ": tensor shapes differ");
    }
}

}  // namespace collage
