#pragma once

#include <cmath>
#include <cstddef>
#include <limits>
#include <vector>

namespace attrition {

// Dense row-major feature matrix. Missing cells are NaN.
struct Matrix {
    size_t rows = 0;
    size_t cols = 0;
    std::vector<double> data;

    Matrix() = default;
    Matrix(size_t r, size_t c) : rows(r), cols(c), data(r * c, 0.0) {}

    double& at(size_t r, size_t c) { return data[r * cols + c]; }
    double at(size_t r, size_t c) const { return data[r * cols + c]; }
    const double* row(size_t r) const { return data.data() + r * cols; }
    double* row(size_t r) { return data.data() + r * cols; }

    static constexpr double missing() { return std::numeric_limits<double>::quiet_NaN(); }
    static bool is_missing(double v) { return std::isnan(v); }

    Matrix select_rows(const std::vector<size_t>& idx) const {
        Matrix out(idx.size(), cols);
        for (size_t i = 0; i < idx.size(); ++i) {
            const double* src = row(idx[i]);
            double* dst = out.row(i);
            for (size_t c = 0; c < cols; ++c) dst[c] = src[c];
        }
        return out;
    }
};

} // namespace attrition
