#pragma once

#include <cmath>
#include <cstddef>
#include <string>
#include <vector>

#include "fast/errors.hpp"
#include "fast/rng.hpp"

namespace fast {

// Dense row-major tensor of 64-bit floats. Rank 1 or 2 is all the toolkit
// needs; scalars are shape {1}. Treated as an immutable value once it leaves
// the function that built it.
class Tensor {
public:
    Tensor() = default;

    explicit Tensor(std::vector<std::size_t> shape)
        : shape_(std::move(shape)), data_(checked_numel(shape_), 0.0) {}

    Tensor(std::vector<std::size_t> shape, std::vector<double> data)
        : shape_(std::move(shape)), data_(std::move(data)) {
        if (checked_numel(shape_) != data_.size()) {
            throw ShapeError("tensor data length " + std::to_string(data_.size()) +
                             " does not match shape " + shape_string());
        }
    }

    static Tensor scalar(double v) { return Tensor({1}, {v}); }

    static Tensor full(std::vector<std::size_t> shape, double v) {
        Tensor t(std::move(shape));
        for (double& x : t.data_) x = v;
        return t;
    }

    static Tensor randn(std::vector<std::size_t> shape, Rng& rng, double sigma) {
        Tensor t(std::move(shape));
        for (double& x : t.data_) x = rng.normal(0.0, sigma);
        return t;
    }

    const std::vector<std::size_t>& shape() const { return shape_; }
    std::size_t rank() const { return shape_.size(); }
    std::size_t dim(std::size_t i) const { return shape_[i]; }
    std::size_t numel() const { return data_.size(); }

    // Rows/cols of a matrix; a rank-1 tensor counts as a single row.
    std::size_t rows() const { return rank() == 2 ? shape_[0] : 1; }
    std::size_t cols() const { return rank() == 2 ? shape_[1] : (rank() == 1 ? shape_[0] : 0); }

    double* data() { return data_.data(); }
    const double* data() const { return data_.data(); }
    std::vector<double>& vec() { return data_; }
    const std::vector<double>& vec() const { return data_; }

    double& operator[](std::size_t i) { return data_[i]; }
    double operator[](std::size_t i) const { return data_[i]; }
    double& at(std::size_t r, std::size_t c) { return data_[r * cols() + c]; }
    double at(std::size_t r, std::size_t c) const { return data_[r * cols() + c]; }

    double item() const {
        if (numel() != 1) throw UsageError("item() on tensor with " + std::to_string(numel()) + " elements");
        return data_[0];
    }

    bool same_shape(const Tensor& o) const { return shape_ == o.shape_; }

    bool all_finite() const {
        for (double x : data_) {
            if (!std::isfinite(x)) return false;
        }
        return true;
    }

    bool operator==(const Tensor& o) const { return shape_ == o.shape_ && data_ == o.data_; }

    std::string shape_string() const {
        std::string s = "[";
        for (std::size_t i = 0; i < shape_.size(); ++i) {
            if (i) s += "x";
            s += std::to_string(shape_[i]);
        }
        return s + "]";
    }

private:
    static std::size_t checked_numel(const std::vector<std::size_t>& shape) {
        std::size_t n = 1;
        for (std::size_t d : shape) n *= d;
        return n;
    }

    std::vector<std::size_t> shape_;
    std::vector<double> data_;
};

// Raw matrix kernels shared by forward and backward passes.
// c (m x n) += a (m x k) * b (k x n)
void mm_nn_acc(const double* a, const double* b, double* c, std::size_t m, std::size_t k, std::size_t n);
// c (m x n) += a (m x k) * b(n x k)^T
void mm_nt_acc(const double* a, const double* b, double* c, std::size_t m, std::size_t k, std::size_t n);
// c (k x n) += a(m x k)^T * b (m x n)
void mm_tn_acc(const double* a, const double* b, double* c, std::size_t m, std::size_t k, std::size_t n);

} // namespace fast
