#include "decreg/heads.hpp"

#include <cmath>

namespace decreg {

std::string head_kind_name(HeadKind k) {
    switch (k) {
        case HeadKind::kDecoder: return "decoder";
        case HeadKind::kRiemann: return "riemann";
        case HeadKind::kPointwise: return "pointwise";
        case HeadKind::kMdn: return "mdn";
    }
    return "?";
}

HeadKind head_kind_from_name(const std::string& name) {
    if (name == "decoder") return HeadKind::kDecoder;
    if (name == "riemann") return HeadKind::kRiemann;
    if (name == "pointwise") return HeadKind::kPointwise;
    if (name == "mdn") return HeadKind::kMdn;
    throw ConfigError("unknown head kind '" + name + "' (decoder|riemann|pointwise|mdn)");
}

namespace {

std::string layer_name(int i, const char* part) {
    return "head.l" + std::to_string(i) + "." + part;
}

}  // namespace

RegressionModel::RegressionModel(ModelConfig config, std::mt19937_64& rng)
    : config_(std::move(config)) {
    const auto& enc = config_.encoder;
    if (enc.input_dim < 1 || enc.layers < 1 || enc.hidden < 1 || enc.out_dim < 1)
        throw ConfigError("encoder dimensions must be positive");

    int64_t in = enc.input_dim;
    for (int i = 0; i < enc.layers; ++i) {
        params_.add("enc.w" + std::to_string(i), glorot_uniform({in, enc.hidden}, in, enc.hidden, rng));
        params_.add("enc.b" + std::to_string(i), Tensor({enc.hidden}));
        in = enc.hidden;
    }
    params_.add("enc.wout", glorot_uniform({in, enc.out_dim}, in, enc.out_dim, rng));
    params_.add("enc.bout", Tensor({enc.out_dim}));

    const int64_t d = enc.out_dim;
    switch (config_.head) {
        case HeadKind::kDecoder: {
            if (!config_.scheme) throw ConfigError("decoder head requires a token scheme");
            const auto& dec = config_.decoder;
            if (dec.layers < 1 || dec.heads < 1 || dec.width < 1)
                throw ConfigError("decoder head dimensions must be positive");
            if (dec.width % dec.heads != 0)
                throw ConfigError("decoder width must be divisible by the head count");
            const int64_t v = config_.scheme->vocab_size();
            const int64_t k = config_.scheme->length();
            if (k > 64) throw ConfigError("decoder head supports sequence lengths up to 64");
            const int64_t dd = dec.width;
            if (d != dd) {
                params_.add("head.proj.w", glorot_uniform({d, dd}, d, dd, rng));
                params_.add("head.proj.b", Tensor({dd}));
            }
            params_.add("head.tok_emb", glorot_uniform({v, dd}, v, dd, rng));
            params_.add("head.pos_emb", Tensor({k, dd}));
            for (int i = 0; i < dec.layers; ++i) {
                params_.add(layer_name(i, "ln1.g"), Tensor::full({dd}, 1.0));
                params_.add(layer_name(i, "ln1.b"), Tensor({dd}));
                for (const char* m : {"attn.wq", "attn.wk", "attn.wv", "attn.wo"})
                    params_.add(layer_name(i, m), glorot_uniform({dd, dd}, dd, dd, rng));
                for (const char* m : {"attn.bq", "attn.bk", "attn.bv", "attn.bo"})
                    params_.add(layer_name(i, m), Tensor({dd}));
                params_.add(layer_name(i, "ln2.g"), Tensor::full({dd}, 1.0));
                params_.add(layer_name(i, "ln2.b"), Tensor({dd}));
                params_.add(layer_name(i, "ff.w1"), glorot_uniform({dd, 4 * dd}, dd, 4 * dd, rng));
                params_.add(layer_name(i, "ff.b1"), Tensor({4 * dd}));
                params_.add(layer_name(i, "ff.w2"), glorot_uniform({4 * dd, dd}, 4 * dd, dd, rng));
                params_.add(layer_name(i, "ff.b2"), Tensor({dd}));
            }
            params_.add("head.lnf.g", Tensor::full({dd}, 1.0));
            params_.add("head.lnf.b", Tensor({dd}));
            params_.add("head.out.w", glorot_uniform({dd, v}, dd, v, rng));
            params_.add("head.out.b", Tensor({v}));
            break;
        }
        case HeadKind::kRiemann: {
            if (config_.bins < 2) throw ConfigError("riemann head requires at least 2 bins");
            params_.add("head.w", glorot_uniform({d, config_.bins}, d, config_.bins, rng));
            params_.add("head.b", Tensor({config_.bins}));
            break;
        }
        case HeadKind::kPointwise: {
            params_.add("head.w", glorot_uniform({d, 1}, d, 1, rng));
            params_.add("head.b", Tensor({1}));
            break;
        }
        case HeadKind::kMdn: {
            if (config_.mixtures < 1) throw ConfigError("mdn head requires at least 1 mixture");
            const int64_t m = config_.mixtures;
            for (const char* part : {"pi", "mu", "sigma"}) {
                params_.add(std::string("head.") + part + ".w", glorot_uniform({d, m}, d, m, rng));
                params_.add(std::string("head.") + part + ".b", Tensor({m}));
            }
            break;
        }
    }
}

Bindings RegressionModel::param_bindings() const {
    Bindings b;
    params_.bind_into(b);
    return b;
}

Expr RegressionModel::features_expr(Expr x) const {
    if (x->shape.size() != 2 || x->shape[1] != config_.encoder.input_dim)
        throw ConfigError("encoder input must be [n, " + std::to_string(config_.encoder.input_dim) + "]");
    Expr h = std::move(x);
    for (int i = 0; i < config_.encoder.layers; ++i) {
        const auto idx = std::to_string(i);
        h = relu(add(matmul(h, input("enc.w" + idx, params_.at("enc.w" + idx).shape())),
                     input("enc.b" + idx, params_.at("enc.b" + idx).shape())));
    }
    return add(matmul(h, input("enc.wout", params_.at("enc.wout").shape())),
               input("enc.bout", params_.at("enc.bout").shape()));
}

Expr RegressionModel::decoder_logits_expr(Expr phi, const std::vector<int64_t>& tokens, int64_t n,
                                          int64_t steps) const {
    if (config_.head != HeadKind::kDecoder) throw UsageError("model has no decoder head");
    const auto& dec = config_.decoder;
    const int64_t dd = dec.width;
    const int64_t k = config_.scheme->length();
    if (steps < 1 || steps > k) throw UsageError("decoder steps out of range");
    if (static_cast<int64_t>(tokens.size()) != n * (steps - 1))
        throw UsageError("decoder token matrix size mismatch");

    auto p = [&](const std::string& name) { return input(name, params_.at(name).shape()); };

    Expr x0 = std::move(phi);
    if (config_.encoder.out_dim != dd)
        x0 = add(matmul(x0, p("head.proj.w")), p("head.proj.b"));
    x0 = reshape(x0, {n, 1, dd});
    Expr x = x0;
    if (steps > 1) {
        Expr emb = embedding(p("head.tok_emb"), tokens, {n, steps - 1});
        x = concat({x0, emb}, 1);
    }
    x = add(x, slice(p("head.pos_emb"), 0, 0, steps));

    // Causal mask: position i attends to positions <= i.
    Tensor mask({steps, steps});
    for (int64_t i = 0; i < steps; ++i)
        for (int64_t j = 0; j < steps; ++j) mask[i * steps + j] = j <= i ? 0.0 : -1e30;
    Expr mask_e = constant(std::move(mask));

    const int64_t dh = dd / dec.heads;
    const double inv_sqrt = 1.0 / std::sqrt(static_cast<double>(dh));
    for (int i = 0; i < dec.layers; ++i) {
        Expr h = layer_norm(x, p(layer_name(i, "ln1.g")), p(layer_name(i, "ln1.b")));
        Expr q = add(matmul(h, p(layer_name(i, "attn.wq"))), p(layer_name(i, "attn.bq")));
        Expr kk = add(matmul(h, p(layer_name(i, "attn.wk"))), p(layer_name(i, "attn.bk")));
        Expr v = add(matmul(h, p(layer_name(i, "attn.wv"))), p(layer_name(i, "attn.bv")));
        std::vector<Expr> heads_out;
        for (int hd = 0; hd < dec.heads; ++hd) {
            Expr qh = slice(q, 2, hd * dh, dh);
            Expr kh = slice(kk, 2, hd * dh, dh);
            Expr vh = slice(v, 2, hd * dh, dh);
            Expr scores = scale(matmul(qh, transpose_last2(kh)), inv_sqrt);
            scores = add(scores, mask_e);
            heads_out.push_back(matmul(softmax_last(scores), vh));
        }
        Expr att = heads_out.size() == 1 ? heads_out[0] : concat(heads_out, 2);
        att = add(matmul(att, p(layer_name(i, "attn.wo"))), p(layer_name(i, "attn.bo")));
        x = add(x, att);
        Expr h2 = layer_norm(x, p(layer_name(i, "ln2.g")), p(layer_name(i, "ln2.b")));
        Expr ff = add(matmul(relu(add(matmul(h2, p(layer_name(i, "ff.w1"))), p(layer_name(i, "ff.b1")))),
                             p(layer_name(i, "ff.w2"))),
                      p(layer_name(i, "ff.b2")));
        x = add(x, ff);
    }
    x = layer_norm(x, p("head.lnf.g"), p("head.lnf.b"));
    return add(matmul(x, p("head.out.w")), p("head.out.b"));
}

Expr RegressionModel::riemann_logits_expr(Expr phi) const {
    if (config_.head != HeadKind::kRiemann) throw UsageError("model has no riemann head");
    return add(matmul(std::move(phi), input("head.w", params_.at("head.w").shape())),
               input("head.b", params_.at("head.b").shape()));
}

Expr RegressionModel::pointwise_expr(Expr phi) const {
    if (config_.head != HeadKind::kPointwise) throw UsageError("model has no pointwise head");
    Expr z = add(matmul(std::move(phi), input("head.w", params_.at("head.w").shape())),
                 input("head.b", params_.at("head.b").shape()));
    return config_.sigmoid_output ? sigmoid(z) : z;
}

RegressionModel::MdnExpr RegressionModel::mdn_expr(Expr phi) const {
    if (config_.head != HeadKind::kMdn) throw UsageError("model has no mdn head");
    auto linear = [&](const char* part) {
        const std::string w = std::string("head.") + part + ".w";
        const std::string b = std::string("head.") + part + ".b";
        return add(matmul(phi, input(w, params_.at(w).shape())), input(b, params_.at(b).shape()));
    };
    MdnExpr out;
    out.pi_logits = linear("pi");
    out.mu = linear("mu");
    out.sigma = add_scalar(elu(linear("sigma")), 1.0);
    return out;
}

Tensor RegressionModel::encode_features(const Tensor& x) const {
    const bool single = x.rank() == 1;
    Tensor xin = single ? Tensor({1, x.numel()}, x.vec()) : x;
    Bindings b = param_bindings();
    b["x"] = xin;
    Tensor phi = evaluate(features_expr(input("x", xin.shape())), b);
    if (!single) return phi;
    return Tensor({phi.numel()}, phi.vec());
}

Tensor RegressionModel::decoder_logits(const Tensor& phi_row, const TokenSeq& prefix) const {
    if (config_.head != HeadKind::kDecoder) throw UsageError("model has no decoder head");
    const int64_t k = config_.scheme->length();
    if (static_cast<int64_t>(prefix.size()) >= k)
        throw UsageError("decoder prefix must be shorter than the scheme length");
    const int64_t d = config_.encoder.out_dim;
    if (phi_row.numel() != d) throw ConfigError("phi width mismatch");
    const int64_t steps = static_cast<int64_t>(prefix.size()) + 1;
    std::vector<int64_t> tokens(prefix.begin(), prefix.end());
    Bindings b = param_bindings();
    b["phi"] = Tensor({1, d}, phi_row.vec());
    Expr logits = decoder_logits_expr(input("phi", {1, d}), tokens, 1, steps);
    Tensor all = evaluate(logits, b);
    const int64_t v = config_.scheme->vocab_size();
    std::vector<double> last(all.vec().end() - v, all.vec().end());
    return Tensor({v}, std::move(last));
}

Tensor RegressionModel::riemann_probs(const Tensor& phi_row) const {
    const int64_t d = config_.encoder.out_dim;
    if (phi_row.numel() != d) throw ConfigError("phi width mismatch");
    Bindings b = param_bindings();
    b["phi"] = Tensor({1, d}, phi_row.vec());
    Tensor probs = evaluate(softmax_last(riemann_logits_expr(input("phi", {1, d}))), b);
    return Tensor({config_.bins}, probs.vec());
}

double RegressionModel::pointwise_predict(const Tensor& phi_row) const {
    const int64_t d = config_.encoder.out_dim;
    if (phi_row.numel() != d) throw ConfigError("phi width mismatch");
    Bindings b = param_bindings();
    b["phi"] = Tensor({1, d}, phi_row.vec());
    return evaluate(pointwise_expr(input("phi", {1, d})), b).item();
}

RegressionModel::MdnParams RegressionModel::mdn_params(const Tensor& phi_row) const {
    const int64_t d = config_.encoder.out_dim;
    if (phi_row.numel() != d) throw ConfigError("phi width mismatch");
    Bindings b = param_bindings();
    b["phi"] = Tensor({1, d}, phi_row.vec());
    MdnExpr e = mdn_expr(input("phi", {1, d}));
    Tensor pi = evaluate(softmax_last(e.pi_logits), b);
    Tensor mu = evaluate(e.mu, b);
    Tensor sigma = evaluate(e.sigma, b);
    return MdnParams{pi.vec(), mu.vec(), sigma.vec()};
}

}  // namespace decreg
