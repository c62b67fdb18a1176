#include "decreg/tensor.hpp"

#include <cmath>
#include <string>

namespace decreg {

int64_t Tensor::shape_numel(const std::vector<int64_t>& shape) {
    int64_t n = 1;
    for (int64_t d : shape) {
        if (d <= 0) throw ConfigError("tensor dimension must be positive, got " + std::to_string(d));
        n *= d;
    }
    return n;
}

Tensor::Tensor(std::vector<int64_t> shape) : shape_(std::move(shape)) {
    data_.assign(static_cast<size_t>(shape_numel(shape_)), 0.0);
}

Tensor::Tensor(std::vector<int64_t> shape, std::vector<double> data)
    : shape_(std::move(shape)), data_(std::move(data)) {
    if (shape_numel(shape_) != static_cast<int64_t>(data_.size()))
        throw ConfigError("tensor data length does not match shape");
}

Tensor Tensor::scalar(double v) { return Tensor({}, {v}); }

Tensor Tensor::full(std::vector<int64_t> shape, double v) {
    Tensor t(std::move(shape));
    for (auto& x : t.data_) x = v;
    return t;
}

static int64_t flat_index(const std::vector<int64_t>& shape, std::initializer_list<int64_t> idx) {
    if (idx.size() != shape.size()) throw UsageError("tensor index rank mismatch");
    int64_t flat = 0;
    size_t i = 0;
    for (int64_t ix : idx) {
        if (ix < 0 || ix >= shape[i]) throw UsageError("tensor index out of range");
        flat = flat * shape[i] + ix;
        ++i;
    }
    return flat;
}

double& Tensor::at(std::initializer_list<int64_t> idx) {
    return data_[static_cast<size_t>(flat_index(shape_, idx))];
}

double Tensor::at(std::initializer_list<int64_t> idx) const {
    return data_[static_cast<size_t>(flat_index(shape_, idx))];
}

double Tensor::item() const {
    if (numel() != 1) throw UsageError("item() requires a single-element tensor");
    return data_[0];
}

bool Tensor::all_finite() const {
    for (double v : data_)
        if (!std::isfinite(v)) return false;
    return true;
}

}  // namespace decreg
