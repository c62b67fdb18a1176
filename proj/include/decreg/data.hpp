#pragma once

#include <cstdint>
#include <vector>

#include "decreg/tensor.hpp"

namespace decreg {

// Paired feature rows and scalar targets.
struct SampleBatch {
    Tensor x;               // [n, p]
    std::vector<double> y;  // n targets

    int64_t size() const { return static_cast<int64_t>(y.size()); }
    int64_t feature_dim() const { return x.rank() == 2 ? x.dim(1) : 0; }
    void validate() const;
};

// Per-feature standardization plus min/max target scaling. Zero-variance
// features pass through unscaled (std treated as 1).
struct NormalizerStats {
    std::vector<double> x_mean;
    std::vector<double> x_std;
    double y_min = 0.0;
    double y_max = 1.0;
    double y_shift = 0.0;  // extra centering shift applied after min/max scaling

    double apply_y(double y) const { return (y - y_min) / (y_max - y_min) - y_shift; }
    double invert_y(double v) const { return (v + y_shift) * (y_max - y_min) + y_min; }
};

NormalizerStats fit_normalizers(const SampleBatch& batch);
Tensor apply_x(const NormalizerStats& stats, const Tensor& x);
Tensor invert_x(const NormalizerStats& stats, const Tensor& x);

}  // namespace decreg
