#pragma once

#include <cstdint>
#include <initializer_list>
#include <vector>

#include "decreg/errors.hpp"

namespace decreg {

// Dense row-major array of 64-bit reals. Rank 0 (shape {}) is a scalar.
class Tensor {
  public:
    Tensor() = default;
    explicit Tensor(std::vector<int64_t> shape);
    Tensor(std::vector<int64_t> shape, std::vector<double> data);

    static Tensor scalar(double v);
    static Tensor full(std::vector<int64_t> shape, double v);
    static Tensor zeros_like(const Tensor& t) { return Tensor(t.shape_); }

    const std::vector<int64_t>& shape() const { return shape_; }
    int64_t rank() const { return static_cast<int64_t>(shape_.size()); }
    int64_t numel() const { return static_cast<int64_t>(data_.size()); }
    int64_t dim(int64_t i) const { return shape_[static_cast<size_t>(i)]; }

    double* data() { return data_.data(); }
    const double* data() const { return data_.data(); }
    std::vector<double>& vec() { return data_; }
    const std::vector<double>& vec() const { return data_; }

    double& operator[](int64_t i) { return data_[static_cast<size_t>(i)]; }
    double operator[](int64_t i) const { return data_[static_cast<size_t>(i)]; }

    // Multi-index access, slow path for tests and setup code.
    double& at(std::initializer_list<int64_t> idx);
    double at(std::initializer_list<int64_t> idx) const;

    // Value of a single-element tensor.
    double item() const;

    bool all_finite() const;

    static int64_t shape_numel(const std::vector<int64_t>& shape);

  private:
    std::vector<int64_t> shape_;
    std::vector<double> data_;
};

}  // namespace decreg
