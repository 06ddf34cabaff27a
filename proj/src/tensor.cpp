#include "collage/tensor.hpp"

#include <string>

namespace collage {

Matrix matmul(const Matrix& a, const Matrix& b) {
    if (a.cols != b.rows) {
        throw std::invalid_argument("matmul: inner dimensions differ");
    }
    Matrix out(a.rows, b.cols);
    for (int i = 0; i < a.rows; ++i) {
        double* o = out.row(i);
        for (int k = 0; k < a.cols; ++k) {
            const double aik = a.at(i, k);
            const double* br = b.row(k);
            for (int j = 0; j < b.cols; ++j) {
                o[j] += aik * br[j];
            }
        }
    }
    return out;
}

Matrix matmul_transposed(const Matrix& a, const Matrix& b) {
    if (a.cols != b.cols) {
        throw std::invalid_argument("matmul_transposed: inner dimensions differ");
    }
    Matrix out(a.rows, b.rows);
    for (int i = 0; i < a.rows; ++i) {
        const double* ar = a.row(i);
        for (int j = 0; j < b.rows; ++j) {
            const double* br = b.row(j);
            double s = 0.0;
            for (int k = 0; k < a.cols; ++k) {
                s += ar[k] * br[k];
            }
            out.at(i, j) = s;
        }
    }
    return out;
}

Matrix transpose(const Matrix& a) {
    Matrix out(a.cols, a.rows);
    for (int i = 0; i < a.rows; ++i) {
        for (int j = 0; j < a.cols; ++j) {
            out.at(j, i) = a.at(i, j);
        }
    }
    return out;
}

}  // namespace collage
