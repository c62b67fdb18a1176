#pragma once

#include <cstdint>
#include <map>
#include <random>
#include <string>

#include "decreg/expr.hpp"
#include "decreg/tensor.hpp"

namespace decreg {

struct AdamState {
    Tensor m;
    Tensor v;
    int64_t step = 0;
};

// Named trainable parameters plus per-parameter Adam moments.
class ParamStore {
  public:
    void add(const std::string& name, Tensor init);
    bool contains(const std::string& name) const { return params_.count(name) > 0; }
    Tensor& at(const std::string& name);
    const Tensor& at(const std::string& name) const;
    const std::map<std::string, Tensor>& params() const { return params_; }
    const AdamState& state(const std::string& name) const { return state_.at(name); }

    std::vector<std::string> names() const;
    int64_t total_elems(const std::string& prefix = "") const;

    // Copy of the raw parameter tensors (checkpointing / best-epoch restore).
    std::map<std::string, Tensor> snapshot() const { return params_; }
    void restore(const std::map<std::string, Tensor>& snap);

    // Merge parameters into a bindings map that already holds the data leaves.
    void bind_into(Bindings& b) const;

  private:
    friend void adam_step(ParamStore&, const std::map<std::string, Tensor>&, double, double,
                          double, double, double);
    std::map<std::string, Tensor> params_;
    std::map<std::string, AdamState> state_;
};

// Bias-corrected Adam update; weight decay is decoupled (applied directly to
// the parameter, AdamW style). Gradients must be keyed identically to the
// store.
void adam_step(ParamStore& store, const std::map<std::string, Tensor>& grads, double lr,
               double beta1 = 0.9, double beta2 = 0.999, double eps = 1e-8,
               double weight_decay = 0.0);

// Uniform Glorot initialization in +-sqrt(6 / (fan_in + fan_out)).
Tensor glorot_uniform(std::vector<int64_t> shape, int64_t fan_in, int64_t fan_out,
                      std::mt19937_64& rng);

}  // namespace decreg
