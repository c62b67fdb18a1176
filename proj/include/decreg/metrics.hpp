#pragma once

#include <vector>

#include "decreg/heads.hpp"

namespace decreg {

// Tie-corrected Kendall tau-b in [-1, 1], O(n log n).
double kendall_tau(const std::vector<double>& preds, const std::vector<double>& targets);

// MSE divided by the target variance on the same split, so the constant-mean
// predictor scores 1.
double relative_mse(const std::vector<double>& preds, const std::vector<double>& targets);

// Negative log density of y under the model at input x (both in raw units;
// the model's fitted normalizer maps them into model space). Distributional
// heads only. Zero-probability events return +infinity.
double continuous_nll(const RegressionModel& model, const Tensor& x_row, double y);

}  // namespace decreg
