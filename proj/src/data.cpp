#include "decreg/data.hpp"

#include <cmath>

#include "decreg/errors.hpp"

namespace decreg {

void SampleBatch::validate() const {
    if (x.rank() != 2) throw ConfigError("sample batch features must be [n, p]");
    if (x.dim(0) != size()) throw ConfigError("sample batch row count mismatch");
    if (!x.all_finite()) throw DataError("sample batch features contain non-finite values");
    for (double v : y)
        if (!std::isfinite(v)) throw DataError("sample batch targets contain non-finite values");
}

NormalizerStats fit_normalizers(const SampleBatch& batch) {
    batch.validate();
    const int64_t n = batch.size();
    if (n < 2) throw UsageError("fit_normalizers requires at least 2 samples");
    const int64_t p = batch.feature_dim();

    NormalizerStats stats;
    stats.x_mean.assign(static_cast<size_t>(p), 0.0);
    stats.x_std.assign(static_cast<size_t>(p), 0.0);
    for (int64_t j = 0; j < p; ++j) {
        double mean = 0.0;
        for (int64_t i = 0; i < n; ++i) mean += batch.x[i * p + j];
        mean /= static_cast<double>(n);
        double var = 0.0;
        for (int64_t i = 0; i < n; ++i) {
            const double d = batch.x[i * p + j] - mean;
            var += d * d;
        }
        var /= static_cast<double>(n);
        stats.x_mean[static_cast<size_t>(j)] = mean;
        const double sd = std::sqrt(var);
        stats.x_std[static_cast<size_t>(j)] = sd > 0.0 ? sd : 1.0;
    }

    stats.y_min = batch.y[0];
    stats.y_max = batch.y[0];
    for (double v : batch.y) {
        stats.y_min = std::min(stats.y_min, v);
        stats.y_max = std::max(stats.y_max, v);
    }
    if (!(stats.y_max > stats.y_min))
        throw DataError("degenerate target range: all targets are identical");
    return stats;
}

Tensor apply_x(const NormalizerStats& stats, const Tensor& x) {
    if (x.rank() != 2 || x.dim(1) != static_cast<int64_t>(stats.x_mean.size()))
        throw ConfigError("apply_x: feature width mismatch");
    const int64_t n = x.dim(0), p = x.dim(1);
    Tensor out = x;
    for (int64_t i = 0; i < n; ++i)
        for (int64_t j = 0; j < p; ++j)
            out[i * p + j] = (x[i * p + j] - stats.x_mean[static_cast<size_t>(j)]) /
                             stats.x_std[static_cast<size_t>(j)];
    return out;
}

Tensor invert_x(const NormalizerStats& stats, const Tensor& x) {
    if (x.rank() != 2 || x.dim(1) != static_cast<int64_t>(stats.x_mean.size()))
        throw ConfigError("invert_x: feature width mismatch");
    const int64_t n = x.dim(0), p = x.dim(1);
    Tensor out = x;
    for (int64_t i = 0; i < n; ++i)
        for (int64_t j = 0; j < p; ++j)
            out[i * p + j] = x[i * p + j] * stats.x_std[static_cast<size_t>(j)] +
                             stats.x_mean[static_cast<size_t>(j)];
    return out;
}

}  // namespace decreg
