#include "decreg/training.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <numbers>
#include <numeric>

namespace decreg {

void TrainConfig::validate() const {
    if (!(lr > 0.0)) throw ConfigError("learning rate must be positive");
    if (max_epochs < 0) throw ConfigError("max_epochs must be >= 0");
    if (patience < 1) throw ConfigError("patience must be >= 1");
    if (!(val_fraction > 0.0 && val_fraction < 1.0))
        throw ConfigError("validation fraction must be in (0, 1)");
    if (batch_size < 1) throw ConfigError("batch size must be >= 1");
    if (weight_decay < 0.0) throw ConfigError("weight decay must be >= 0");
}

bool scheme_is_normalized_domain(const Scheme& scheme) {
    if (const auto* rep = dynamic_cast<const RepetitionScheme*>(&scheme))
        return scheme_is_normalized_domain(*rep->inner());
    return dynamic_cast<const UnnormalizedScheme*>(&scheme) == nullptr;
}

double clamp_unit_interval(double v) {
    if (v < 0.0) return 0.0;
    const double top = std::nextafter(1.0, 0.0);
    return v > top ? top : v;
}

// ---------------------------------------------------------------------------
// Losses
// ---------------------------------------------------------------------------

Expr token_ce_loss_expr(const RegressionModel& model, Expr phi, const std::vector<TokenSeq>& targets) {
    if (model.config().head != HeadKind::kDecoder) throw UsageError("token_ce_loss requires a decoder head");
    const auto& scheme = *model.config().scheme;
    const int64_t n = static_cast<int64_t>(targets.size());
    if (n == 0) throw UsageError("token_ce_loss on an empty batch");
    const int64_t k = scheme.length();
    std::vector<int64_t> inputs;
    inputs.reserve(static_cast<size_t>(n * (k - 1)));
    std::vector<int64_t> picks;
    picks.reserve(static_cast<size_t>(n * k));
    for (const auto& seq : targets) {
        if (static_cast<int64_t>(seq.size()) != k)
            throw UsageError("target sequence length does not match the scheme");
        for (int64_t j = 0; j + 1 < k; ++j) inputs.push_back(seq[static_cast<size_t>(j)]);
        for (int64_t j = 0; j < k; ++j) {
            const int t = seq[static_cast<size_t>(j)];
            if (t < 0 || t >= scheme.vocab_size())
                throw UsageError("target token outside the scheme vocabulary");
            picks.push_back(t);
        }
    }
    Expr logits = model.decoder_logits_expr(std::move(phi), inputs, n, k);
    Expr lp = gather_last(log_softmax_last(std::move(logits)), picks);  // [n, k]
    return scale(reduce_mean(reduce_sum(std::move(lp), 1), 0), -1.0);
}

Expr riemann_ce_loss_expr(const RegressionModel& model, Expr phi, const std::vector<int64_t>& bins) {
    if (model.config().head != HeadKind::kRiemann) throw UsageError("riemann_ce_loss requires a riemann head");
    if (bins.empty()) throw UsageError("riemann_ce_loss on an empty batch");
    for (int64_t b : bins)
        if (b < 0 || b >= model.config().bins) throw UsageError("bin index out of range");
    Expr lp = gather_last(log_softmax_last(model.riemann_logits_expr(std::move(phi))), bins);
    return scale(reduce_mean(std::move(lp), 0), -1.0);
}

Expr mse_loss_expr(const RegressionModel& model, Expr phi, const std::vector<double>& targets) {
    if (model.config().head != HeadKind::kPointwise) throw UsageError("mse_loss requires a pointwise head");
    const int64_t n = static_cast<int64_t>(targets.size());
    if (n == 0) throw UsageError("mse_loss on an empty batch");
    Expr pred = reshape(model.pointwise_expr(std::move(phi)), {n});
    Expr diff = sub(std::move(pred), constant(Tensor({n}, targets)));
    return reduce_mean(mul(diff, diff), 0);
}

Expr mdn_nll_loss_expr(const RegressionModel& model, Expr phi, const std::vector<double>& targets) {
    if (model.config().head != HeadKind::kMdn) throw UsageError("mdn_nll_loss requires an mdn head");
    const int64_t n = static_cast<int64_t>(targets.size());
    if (n == 0) throw UsageError("mdn_nll_loss on an empty batch");
    const int64_t m = model.config().mixtures;
    auto heads = model.mdn_expr(std::move(phi));
    Expr log_pi = log_softmax_last(heads.pi_logits);
    std::vector<double> tiled(static_cast<size_t>(n * m));
    for (int64_t i = 0; i < n; ++i)
        for (int64_t j = 0; j < m; ++j) tiled[static_cast<size_t>(i * m + j)] = targets[static_cast<size_t>(i)];
    Expr y = constant(Tensor({n, m}, std::move(tiled)));
    Expr z = div(sub(std::move(y), heads.mu), heads.sigma);
    Expr comp = add(std::move(log_pi), scale(mul(z, z), -0.5));
    comp = sub(std::move(comp), log(heads.sigma));
    comp = add_scalar(std::move(comp), -0.5 * std::log(2.0 * std::numbers::pi));
    return scale(reduce_mean(logsumexp_last(std::move(comp)), 0), -1.0);
}

namespace {

double eval_phi_loss(const RegressionModel& model, const Tensor& phi,
                     const std::function<Expr(Expr)>& loss_of_phi) {
    Bindings b;
    model.params().bind_into(b);
    b["phi"] = phi;
    return evaluate(loss_of_phi(input("phi", phi.shape())), b).item();
}

}  // namespace

double token_ce_loss(const RegressionModel& model, const Tensor& phi, const std::vector<TokenSeq>& targets) {
    return eval_phi_loss(model, phi, [&](Expr p) { return token_ce_loss_expr(model, std::move(p), targets); });
}

double riemann_ce_loss(const RegressionModel& model, const Tensor& phi, const std::vector<int64_t>& bins) {
    return eval_phi_loss(model, phi, [&](Expr p) { return riemann_ce_loss_expr(model, std::move(p), bins); });
}

double mse_loss(const RegressionModel& model, const Tensor& phi, const std::vector<double>& targets) {
    return eval_phi_loss(model, phi, [&](Expr p) { return mse_loss_expr(model, std::move(p), targets); });
}

double mdn_nll_loss(const RegressionModel& model, const Tensor& phi, const std::vector<double>& targets) {
    return eval_phi_loss(model, phi, [&](Expr p) { return mdn_nll_loss_expr(model, std::move(p), targets); });
}

// ---------------------------------------------------------------------------
// fit
// ---------------------------------------------------------------------------

namespace {

struct PreparedTargets {
    std::vector<TokenSeq> seqs;    // decoder
    std::vector<int64_t> bins;     // riemann
    std::vector<double> values;    // pointwise / mdn
};

PreparedTargets prepare_targets(const RegressionModel& model, const std::vector<double>& y,
                                const NormalizerStats& stats, bool normalize_targets) {
    PreparedTargets out;
    const auto head = model.config().head;
    switch (head) {
        case HeadKind::kDecoder: {
            const auto& scheme = *model.config().scheme;
            out.seqs.reserve(y.size());
            const bool unit_domain = scheme_is_normalized_domain(scheme);
            for (double v : y) {
                double t = v;
                if (unit_domain) {
                    if (normalize_targets) t = stats.apply_y(t);
                    t = clamp_unit_interval(t);
                }
                out.seqs.push_back(scheme.encode(t));
            }
            return out;
        }
        case HeadKind::kRiemann: {
            const int64_t bins = model.config().bins;
            out.bins.reserve(y.size());
            for (double v : y) {
                const double t = clamp_unit_interval(normalize_targets ? stats.apply_y(v) : v);
                out.bins.push_back(std::min<int64_t>(static_cast<int64_t>(t * bins), bins - 1));
            }
            return out;
        }
        case HeadKind::kPointwise:
        case HeadKind::kMdn: {
            out.values.reserve(y.size());
            for (double v : y) out.values.push_back(normalize_targets ? stats.apply_y(v) : v);
            return out;
        }
    }
    throw UsageError("unknown head kind");
}

Expr batch_loss_expr(const RegressionModel& model, Expr phi, const PreparedTargets& t,
                     const std::vector<int64_t>& rows) {
    switch (model.config().head) {
        case HeadKind::kDecoder: {
            std::vector<TokenSeq> seqs;
            seqs.reserve(rows.size());
            for (int64_t r : rows) seqs.push_back(t.seqs[static_cast<size_t>(r)]);
            return token_ce_loss_expr(model, std::move(phi), seqs);
        }
        case HeadKind::kRiemann: {
            std::vector<int64_t> bins;
            bins.reserve(rows.size());
            for (int64_t r : rows) bins.push_back(t.bins[static_cast<size_t>(r)]);
            return riemann_ce_loss_expr(model, std::move(phi), bins);
        }
        case HeadKind::kPointwise:
        case HeadKind::kMdn: {
            std::vector<double> vals;
            vals.reserve(rows.size());
            for (int64_t r : rows) vals.push_back(t.values[static_cast<size_t>(r)]);
            return model.config().head == HeadKind::kPointwise
                       ? mse_loss_expr(model, std::move(phi), vals)
                       : mdn_nll_loss_expr(model, std::move(phi), vals);
        }
    }
    throw UsageError("unknown head kind");
}

Tensor gather_rows(const Tensor& x, const std::vector<int64_t>& rows) {
    const int64_t p = x.dim(1);
    Tensor out({static_cast<int64_t>(rows.size()), p});
    for (size_t i = 0; i < rows.size(); ++i)
        std::copy_n(x.data() + rows[i] * p, p, out.data() + static_cast<int64_t>(i) * p);
    return out;
}

}  // namespace

FitResult fit(RegressionModel& model, const SampleBatch& batch, const TrainConfig& config,
              std::mt19937_64& rng) {
    config.validate();
    batch.validate();
    const int64_t n = batch.size();
    if (n < 2) throw UsageError("fit requires at least 2 samples");

    NormalizerStats stats = fit_normalizers(batch);
    const auto head = model.config().head;
    if (head == HeadKind::kMdn || (head == HeadKind::kPointwise && !model.config().sigmoid_output))
        stats.y_shift = 0.5;  // center into [-0.5, 0.5]
    bool normalize_targets = config.normalize_targets;
    if (head == HeadKind::kDecoder && !scheme_is_normalized_domain(*model.config().scheme))
        normalize_targets = false;  // unnormalized codec consumes raw targets
    model.set_normalizer(stats);

    FitResult result;
    if (config.max_epochs == 0) return result;

    const Tensor xn = apply_x(stats, batch.x);
    NormalizerStats target_stats = stats;
    if (!normalize_targets) {
        target_stats.y_min = 0.0;
        target_stats.y_max = 1.0;
        target_stats.y_shift = 0.0;
    }
    const PreparedTargets targets = prepare_targets(model, batch.y, target_stats, normalize_targets);

    std::vector<int64_t> idx(static_cast<size_t>(n));
    std::iota(idx.begin(), idx.end(), 0);
    std::shuffle(idx.begin(), idx.end(), rng);
    const int64_t n_val =
        std::clamp<int64_t>(std::llround(config.val_fraction * static_cast<double>(n)), 1, n - 1);
    std::vector<int64_t> val_rows(idx.begin(), idx.begin() + n_val);
    std::vector<int64_t> train_rows(idx.begin() + n_val, idx.end());
    const int64_t n_train = static_cast<int64_t>(train_rows.size());
    const int64_t bs = n_train < 256 ? n_train : config.batch_size;

    const Tensor x_val = gather_rows(xn, val_rows);
    const auto wrt = model.params().names();

    auto batch_loss_value = [&](const Tensor& x, const std::vector<int64_t>& rows) {
        Bindings b;
        model.params().bind_into(b);
        b["x"] = x;
        Expr loss = batch_loss_expr(model, model.features_expr(input("x", x.shape())), targets, rows);
        return evaluate(loss, b).item();
    };

    double best_val = std::numeric_limits<double>::infinity();
    std::map<std::string, Tensor> best_params = model.params().snapshot();
    int bad_epochs = 0;

    for (int epoch = 1; epoch <= config.max_epochs; ++epoch) {
        std::shuffle(train_rows.begin(), train_rows.end(), rng);
        double train_loss_acc = 0.0;
        int64_t seen = 0;
        for (int64_t start = 0, bidx = 0; start < n_train; start += bs, ++bidx) {
            const int64_t m = std::min(bs, n_train - start);
            std::vector<int64_t> rows(train_rows.begin() + start, train_rows.begin() + start + m);
            Tensor xb = gather_rows(xn, rows);
            Bindings b;
            model.params().bind_into(b);
            b["x"] = xb;
            Expr loss = batch_loss_expr(model, model.features_expr(input("x", xb.shape())), targets, rows);
            double loss_value = 0.0;
            auto grads = gradient(loss, b, wrt, &loss_value);
            if (!std::isfinite(loss_value))
                throw DataError("non-finite training loss at epoch " + std::to_string(epoch) +
                                ", batch " + std::to_string(bidx));
            adam_step(model.params(), grads, config.lr, 0.9, 0.999, 1e-8, config.weight_decay);
            train_loss_acc += loss_value * static_cast<double>(m);
            seen += m;
        }
        const double train_loss = train_loss_acc / static_cast<double>(seen);
        const double val_loss = batch_loss_value(x_val, val_rows);
        if (!std::isfinite(val_loss))
            throw DataError("non-finite validation loss at epoch " + std::to_string(epoch));
        result.history.push_back({epoch, train_loss, val_loss});

        if (val_loss < best_val) {
            best_val = val_loss;
            best_params = model.params().snapshot();
            result.best_epoch = epoch;
            bad_epochs = 0;
        } else {
            ++bad_epochs;
            if (bad_epochs >= config.patience) break;
        }
    }

    model.params().restore(best_params);
    result.best_val = best_val;
    return result;
}

}  // namespace decreg
