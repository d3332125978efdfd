#pragma once

#include <cstddef>
#include <functional>
#include <numeric>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "arr/error.hpp"

namespace arr {

/// Dense row-major array of doubles. Batches and activations are rank-2
/// (rows = samples, cols = features).
struct Tensor {
    std::vector<std::size_t> shape;
    std::vector<double> values;
    std::optional<std::vector<double>> grad;

    Tensor() = default;

    explicit Tensor(std::vector<std::size_t> dims, double fill = 0.0)
        : shape(std::move(dims)), values(element_count(shape), fill) {}

    Tensor(std::vector<std::size_t> dims, std::vector<double> data)
        : shape(std::move(dims)), values(std::move(data)) {
        if (values.size() != element_count(shape)) {
            throw DimensionError("tensor values length " + std::to_string(values.size()) +
                                 " does not match shape product " +
                                 std::to_string(element_count(shape)));
        }
    }

    static Tensor matrix(std::size_t rows, std::size_t cols, double fill = 0.0) {
        return Tensor({rows, cols}, fill);
    }

    static Tensor matrix(std::size_t rows, std::size_t cols, std::vector<double> data) {
        return Tensor({rows, cols}, std::move(data));
    }

    static std::size_t element_count(const std::vector<std::size_t>& dims) {
        if (dims.empty()) return 0;
        return std::accumulate(dims.begin(), dims.end(), std::size_t{1}, std::multiplies<>{});
    }

    std::size_t size() const noexcept { return values.size(); }
    std::size_t rows() const noexcept { return shape.empty() ? 0 : shape[0]; }
    std::size_t cols() const noexcept {
        if (shape.size() < 2) return shape.empty() ? 0 : 1;
        return std::accumulate(shape.begin() + 1, shape.end(), std::size_t{1}, std::multiplies<>{});
    }

    double& at(std::size_t r, std::size_t c) { return values[r * cols() + c]; }
    double at(std::size_t r, std::size_t c) const { return values[r * cols() + c]; }

    std::span<double> row(std::size_t r) { return {values.data() + r * cols(), cols()}; }
    std::span<const double> row(std::size_t r) const {
        return {values.data() + r * cols(), cols()};
    }

    /// Allocates a zeroed gradient buffer of the same shape.
    std::vector<double>& ensure_grad() {
        if (!grad || grad->size() != values.size()) grad.emplace(values.size(), 0.0);
        return *grad;
    }

    void check_invariants() const {
        if (values.size() != element_count(shape)) {
            throw DimensionError("tensor values length does not match shape");
        }
        for (auto d : shape) {
            if (d == 0) throw DimensionError("tensor shape entries must be positive");
        }
        if (grad && grad->size() != values.size()) {
            throw DimensionError("tensor gradient shape differs from values");
        }
    }
};

/// Copies the selected rows of a rank-2 tensor, in the given order.
inline Tensor gather_rows(const Tensor& src, std::span<const std::size_t> indices) {
    const auto width = src.cols();
    Tensor out = Tensor::matrix(indices.size(), width);
    for (std::size_t i = 0; i < indices.size(); ++i) {
        if (indices[i] >= src.rows()) {
            throw DimensionError("row " + std::to_string(indices[i]) + " out of range");
        }
        const auto r = src.row(indices[i]);
        std::copy(r.begin(), r.end(), out.values.begin() + static_cast<std::ptrdiff_t>(i * width));
    }
    return out;
}

/// Stacks two rank-2 tensors along the batch dimension (top rows first).
inline Tensor concat_rows(const Tensor& top, const Tensor& bottom) {
    if (top.rows() == 0) return bottom;
    if (bottom.rows() == 0) return top;
    if (top.cols() != bottom.cols()) {
        throw DimensionError("cannot concatenate rows of width " + std::to_string(top.cols()) +
                             " and " + std::to_string(bottom.cols()));
    }
    Tensor out = Tensor::matrix(top.rows() + bottom.rows(), top.cols());
    std::copy(top.values.begin(), top.values.end(), out.values.begin());
    std::copy(bottom.values.begin(), bottom.values.end(),
              out.values.begin() + static_cast<std::ptrdiff_t>(top.size()));
    return out;
}

}  // namespace arr
