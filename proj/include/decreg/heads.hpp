#pragma once

#include <optional>
#include <random>
#include <string>

#include "decreg/data.hpp"
#include "decreg/expr.hpp"
#include "decreg/optim.hpp"
#include "decreg/tokenizer.hpp"

namespace decreg {

enum class HeadKind { kDecoder, kRiemann, kPointwise, kMdn };

std::string head_kind_name(HeadKind k);
HeadKind head_kind_from_name(const std::string& name);

// ReLU MLP: `layers` hidden layers of `hidden` units, then a linear map to
// the representation width `out_dim`.
struct EncoderConfig {
    int64_t input_dim = 1;
    int layers = 2;
    int64_t hidden = 256;
    int64_t out_dim = 256;
};

// Compact pre-layer-norm transformer decoder head.
struct DecoderConfig {
    int layers = 1;
    int heads = 1;
    int64_t width = 32;
};

struct ModelConfig {
    EncoderConfig encoder;
    HeadKind head = HeadKind::kPointwise;
    SchemePtr scheme;            // decoder head
    DecoderConfig decoder;       // decoder head
    int64_t bins = 64;           // riemann head
    int64_t mixtures = 5;        // mdn head
    bool sigmoid_output = true;  // pointwise head
};

// Encoder MLP plus one regression head over a shared parameter store.
// A frozen model is immutable and safe to read from several threads;
// training mutates the store through a single owner.
class RegressionModel {
  public:
    RegressionModel(ModelConfig config, std::mt19937_64& rng);

    const ModelConfig& config() const { return config_; }
    ParamStore& params() { return params_; }
    const ParamStore& params() const { return params_; }

    // Graph builders. x: [n, input_dim] -> phi: [n, out_dim].
    Expr features_expr(Expr x) const;

    // Teacher-forced decoder pass. `tokens` holds the first steps-1 target
    // tokens per row (row-major, n x (steps-1)); position 0 is phi. Output
    // logits are [n, steps, vocab], position j predicting token j+1.
    Expr decoder_logits_expr(Expr phi, const std::vector<int64_t>& tokens, int64_t n,
                             int64_t steps) const;
    Expr riemann_logits_expr(Expr phi) const;
    Expr pointwise_expr(Expr phi) const;  // [n, 1]
    struct MdnExpr {
        Expr pi_logits;  // [n, M]
        Expr mu;         // [n, M]
        Expr sigma;      // [n, M], elu(z) + 1
    };
    MdnExpr mdn_expr(Expr phi) const;

    // Eager single-row conveniences.
    Tensor encode_features(const Tensor& x) const;  // [n,p] -> [n,d] or [p] -> [d]
    Tensor decoder_logits(const Tensor& phi_row, const TokenSeq& prefix) const;  // [vocab]
    Tensor riemann_probs(const Tensor& phi_row) const;                           // [bins]
    double pointwise_predict(const Tensor& phi_row) const;
    struct MdnParams {
        std::vector<double> pi;
        std::vector<double> mu;
        std::vector<double> sigma;
    };
    MdnParams mdn_params(const Tensor& phi_row) const;

    int64_t param_count(const std::string& prefix = "") const { return params_.total_elems(prefix); }

    const std::optional<NormalizerStats>& normalizer() const { return norm_; }
    void set_normalizer(NormalizerStats stats) { norm_ = std::move(stats); }

  private:
    Bindings param_bindings() const;
    ModelConfig config_;
    ParamStore params_;
    std::optional<NormalizerStats> norm_;
};

}  // namespace decreg
