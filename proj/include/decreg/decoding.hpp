#pragma once

#include <random>
#include <string>
#include <utility>
#include <vector>

#include "decreg/heads.hpp"
#include "decreg/tokenizer.hpp"

namespace decreg {

// Temperature / top-k / top-p filters are applied after the constrained
// decoding mask, then renormalized; they never replace the mask.
struct SamplerConfig {
    double temperature = 1.0;
    int top_k = 0;       // 0 disables
    double top_p = 1.0;  // 1 disables
    int beam_width = 8;
    int samples = 64;

    void validate() const;
};

// Constrained next-token distribution at `prefix` after the config's
// temperature / top-k / top-p filters, as (token, probability) pairs.
std::vector<std::pair<int, double>> next_token_distribution(const RegressionModel& model,
                                                            const Tensor& phi_row,
                                                            const SchemePtr& scheme,
                                                            const TokenSeq& prefix,
                                                            const SamplerConfig& config);

// One constrained sample; every emitted token is in valid_next at its
// position, so the sequence always decodes.
TokenSeq sample_sequence(const RegressionModel& model, const Tensor& phi_row,
                         const SchemePtr& scheme, const SamplerConfig& config,
                         std::mt19937_64& rng);

// Batched variant sharing one forward pass per position across draws.
std::vector<TokenSeq> sample_sequences(const RegressionModel& model, const Tensor& phi_row,
                                       const SchemePtr& scheme, const SamplerConfig& config,
                                       std::mt19937_64& rng, int count);

// Highest-joint-probability complete sequence found by beam search over the
// constrained chain (temperature 1, no filters). With a beam at least the
// number of valid sequences this is the exact argmax.
TokenSeq beam_search_mode(const RegressionModel& model, const Tensor& phi_row,
                          const SchemePtr& scheme, int beam_width);

// Full distribution over mask-valid sequences, by enumeration. Usage error
// when the space exceeds 1e6 sequences.
std::vector<std::pair<TokenSeq, double>> exact_distribution(const RegressionModel& model,
                                                            const Tensor& phi_row,
                                                            const SchemePtr& scheme);

// Log probability of one complete sequence under the constrained chain;
// -inf when some token is masked out at its position.
double sequence_log_prob(const RegressionModel& model, const Tensor& phi_row,
                         const SchemePtr& scheme, const TokenSeq& seq);

double mean_estimate(const std::vector<double>& samples);

// Harrell-Davis median: beta-weighted combination of order statistics.
double median_harrell_davis(std::vector<double> samples);
std::vector<double> harrell_davis_weights(int n);

// Query-based mean over an evaluation grid with mass renormalization. With an
// empty grid, enumerates every representable value when feasible; normalized
// codecs too large to enumerate fall back to a uniform grid on [0,1).
double raft_mean(const RegressionModel& model, const Tensor& phi_row, const SchemePtr& scheme,
                 const std::vector<double>& grid = {});

enum class Statistic { kMean, kMedian, kMode, kRaft };
std::string statistic_name(Statistic s);
Statistic statistic_from_name(const std::string& name);

// Pointwise estimate in the scheme's value space. Repetition schemes are
// majority-vote unwrapped by their decode.
double estimate(const RegressionModel& model, const Tensor& phi_row, const SchemePtr& scheme,
                Statistic statistic, const SamplerConfig& config, std::mt19937_64& rng);

}  // namespace decreg
