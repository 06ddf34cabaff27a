#pragma once

#include <cstddef>
#include <stdexcept>
#include <vector>

namespace collage {

struct Dims {
    int width = 0;
    int height = 0;

    bool operator==(const Dims&) const = default;
    std::size_t cells() const { return static_cast<std::size_t>(width) * static_cast<std::size_t>(height); }
};

// Row-major 2-D grid. at(row, col) with row in [0, height).
template <typename T>
class Grid {
public:
    Grid() = default;
    Grid(Dims dims, T fill = T{}) : dims_(dims), data_(dims.cells(), fill) {
        if (dims.width < 0 || dims.height < 0) {
            throw std::invalid_argument("grid dimensions must be non-negative");
        }
    }
    Grid(int width, int height, T fill = T{}) : Grid(Dims{width, height}, fill) {}

    Dims dims() const { return dims_; }
    int width() const { return dims_.width; }
    int height() const { return dims_.height; }
    std::size_t size() const { return data_.size(); }

    T& at(int row, int col) { return data_[index(row, col)]; }
    const T& at(int row, int col) const { return data_[index(row, col)]; }
    T& operator[](std::size_t i) { return data_[i]; }
    const T& operator[](std::size_t i) const { return data_[i]; }

    std::vector<T>& data() { return data_; }
    const std::vector<T>& data() const { return data_; }

    bool operator==(const Grid&) const = default;

private:
    std::size_t index(int row, int col) const {
        return static_cast<std::size_t>(row) * static_cast<std::size_t>(dims_.width) + static_cast<std::size_t>(col);
    }

    Dims dims_{};
    std::vector<T> data_;
};

using GridD = Grid<double>;
using GridI = Grid<int>;

// Area-weighted average of `src` onto `dst` dims. Each destination cell
// averages the source region it covers, with fractional overlap weights.
GridD area_resample(const GridD& src, Dims dst);

// Bilinear resize using pixel-center alignment and edge clamping. Constant
// inputs stay bit-exact.
GridD bilinear_resize(const GridD& src, Dims dst);

// Separable Gaussian blur with truncation at ceil(3 sigma) and weights
// renormalized over in-bounds taps. sigma == 0 returns the input unchanged.
GridD gaussian_blur(const GridD& src, double sigma);

}  // namespace collage
