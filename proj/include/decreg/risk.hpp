#pragma once

#include <functional>
#include <random>
#include <vector>

#include "decreg/heads.hpp"
#include "decreg/training.hpp"

namespace decreg {

// Twice continuously differentiable density on [0,1] with an analytic
// derivative and a sampler. Construction verifies normalization by
// quadrature.
class Density1D {
  public:
    Density1D(std::function<double(double)> pdf, std::function<double(double)> dpdf,
              std::function<double(std::mt19937_64&)> sample);

    double pdf(double y) const { return pdf_(y); }
    double dpdf(double y) const { return dpdf_(y); }
    double sample(std::mt19937_64& rng) const { return sample_(rng); }

  private:
    std::function<double(double)> pdf_;
    std::function<double(double)> dpdf_;
    std::function<double(std::mt19937_64&)> sample_;
};

// Fraction of samples per bin over 2^k uniform bins of [0,1).
std::vector<double> histogram_mle(const std::vector<double>& samples, int k);

// Bin probabilities -> piecewise-constant density values.
std::vector<double> probs_to_density(const std::vector<double>& probs);

// Integral of (f - fhat)^2 over [0,1], per-bin Gauss-Legendre (16 nodes).
double mise(const Density1D& f, const std::vector<double>& density_bins);

struct RiskTerms {
    double bias;      // 2^-2k / 12 * int f'^2
    double variance;  // 2^k / N
    double total() const { return bias + variance; }
};
RiskTerms theoretical_risk(const Density1D& f, int k, int64_t n);

enum class RiskEstimator { kHistogram, kDecoder, kRiemann };
std::string risk_estimator_name(RiskEstimator e);
RiskEstimator risk_estimator_from_name(const std::string& name);

struct RiskPoint {
    int k;
    int64_t n;
    int run;
    double mise;
};

struct RiskCell {
    int k;
    int64_t n;
    double emp_mean = 0.0;
    double emp_std = 0.0;
    double bias = 0.0;
    double variance = 0.0;
};

struct RiskReport {
    std::vector<RiskPoint> points;  // one record per (k, N, run)
    std::vector<RiskCell> cells;    // aggregated over runs

    const RiskCell& cell(int k, int64_t n) const;
};

struct RiskOptions {
    RiskEstimator estimator = RiskEstimator::kHistogram;
    int runs = 10;
    uint64_t seed = 0;
    int threads = 1;
    // Model-backed estimators (decoder / riemann), trained per run at
    // K = max(ks) and evaluated at every truncation k.
    TrainConfig train;
    int encoder_layers = 2;
    int64_t encoder_hidden = 32;
    int64_t encoder_out = 16;
    DecoderConfig decoder;
};

RiskReport risk_experiment(const Density1D& f, const std::vector<int>& ks,
                           const std::vector<int64_t>& ns, const RiskOptions& options);

}  // namespace decreg
