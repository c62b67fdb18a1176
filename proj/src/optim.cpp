#include "decreg/optim.hpp"

#include <cmath>

namespace decreg {

void ParamStore::add(const std::string& name, Tensor init) {
    if (params_.count(name)) throw ConfigError("duplicate parameter '" + name + "'");
    AdamState st;
    st.m = Tensor::zeros_like(init);
    st.v = Tensor::zeros_like(init);
    state_.emplace(name, std::move(st));
    params_.emplace(name, std::move(init));
}

Tensor& ParamStore::at(const std::string& name) {
    auto it = params_.find(name);
    if (it == params_.end()) throw UsageError("unknown parameter '" + name + "'");
    return it->second;
}

const Tensor& ParamStore::at(const std::string& name) const {
    auto it = params_.find(name);
    if (it == params_.end()) throw UsageError("unknown parameter '" + name + "'");
    return it->second;
}

std::vector<std::string> ParamStore::names() const {
    std::vector<std::string> out;
    out.reserve(params_.size());
    for (const auto& [k, v] : params_) out.push_back(k);
    return out;
}

int64_t ParamStore::total_elems(const std::string& prefix) const {
    int64_t n = 0;
    for (const auto& [k, v] : params_)
        if (k.rfind(prefix, 0) == 0) n += v.numel();
    return n;
}

void ParamStore::restore(const std::map<std::string, Tensor>& snap) {
    for (const auto& [k, v] : snap) at(k) = v;
}

void ParamStore::bind_into(Bindings& b) const {
    for (const auto& [k, v] : params_) b[k] = v;
}

void adam_step(ParamStore& store, const std::map<std::string, Tensor>& grads, double lr,
               double beta1, double beta2, double eps, double weight_decay) {
    for (const auto& [name, g] : grads)
        if (!store.contains(name)) throw UsageError("adam_step: gradient for unknown parameter '" + name + "'");
    for (auto& [name, p] : store.params_) {
        auto git = grads.find(name);
        if (git == grads.end()) throw UsageError("adam_step: missing gradient for parameter '" + name + "'");
        const Tensor& g = git->second;
        if (g.shape() != p.shape()) throw UsageError("adam_step: gradient shape mismatch for '" + name + "'");
        AdamState& st = store.state_.at(name);
        st.step += 1;
        const double bc1 = 1.0 - std::pow(beta1, static_cast<double>(st.step));
        const double bc2 = 1.0 - std::pow(beta2, static_cast<double>(st.step));
        for (int64_t i = 0; i < p.numel(); ++i) {
            st.m[i] = beta1 * st.m[i] + (1.0 - beta1) * g[i];
            st.v[i] = beta2 * st.v[i] + (1.0 - beta2) * g[i] * g[i];
            const double mhat = st.m[i] / bc1;
            const double vhat = st.v[i] / bc2;
            p[i] -= lr * (mhat / (std::sqrt(vhat) + eps) + weight_decay * p[i]);
        }
    }
}

Tensor glorot_uniform(std::vector<int64_t> shape, int64_t fan_in, int64_t fan_out,
                      std::mt19937_64& rng) {
    const double bound = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
    std::uniform_real_distribution<double> dist(-bound, bound);
    Tensor t(std::move(shape));
    for (int64_t i = 0; i < t.numel(); ++i) t[i] = dist(rng);
    return t;
}

}  // namespace decreg
