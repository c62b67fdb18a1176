#pragma once

#include <cstdint>
#include <random>
#include <vector>

#include "decreg/heads.hpp"

namespace decreg {

struct TrainConfig {
    double lr = 5e-4;
    int max_epochs = 300;
    int patience = 5;
    double val_fraction = 0.1;
    int64_t batch_size = 64;
    double weight_decay = 0.0;
    uint64_t seed = 0;
    // Min/max scale targets into the head's space. Turned off when the head
    // consumes raw values (unnormalized decoder; densities already on [0,1]).
    bool normalize_targets = true;

    void validate() const;
};

struct EpochRecord {
    int epoch;  // 1-based
    double train_loss;
    double val_loss;
};

struct FitResult {
    std::vector<EpochRecord> history;
    int best_epoch = 0;  // 1-based; 0 when no epoch ran
    double best_val = 0.0;
};

// True for codecs over [0,1) (normalized / hamming, possibly repeated);
// false for unnormalized codecs whose targets stay in raw units.
bool scheme_is_normalized_domain(const Scheme& scheme);

// Clamp into [0, 1) so the top of the scaled range lands in the last bin.
double clamp_unit_interval(double v);

// Losses at the feature level. Targets are in the head's model space.
Expr token_ce_loss_expr(const RegressionModel& model, Expr phi, const std::vector<TokenSeq>& targets);
double token_ce_loss(const RegressionModel& model, const Tensor& phi, const std::vector<TokenSeq>& targets);

Expr riemann_ce_loss_expr(const RegressionModel& model, Expr phi, const std::vector<int64_t>& bins);
double riemann_ce_loss(const RegressionModel& model, const Tensor& phi, const std::vector<int64_t>& bins);

Expr mse_loss_expr(const RegressionModel& model, Expr phi, const std::vector<double>& targets);
double mse_loss(const RegressionModel& model, const Tensor& phi, const std::vector<double>& targets);

Expr mdn_nll_loss_expr(const RegressionModel& model, Expr phi, const std::vector<double>& targets);
double mdn_nll_loss(const RegressionModel& model, const Tensor& phi, const std::vector<double>& targets);

// Adam training with a deterministic shuffled validation split, early
// stopping, and best-epoch parameter restoration. Attaches the fitted
// normalizer stats to the model.
FitResult fit(RegressionModel& model, const SampleBatch& batch, const TrainConfig& config,
              std::mt19937_64& rng);

}  // namespace decreg
