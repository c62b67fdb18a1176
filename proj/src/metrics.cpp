#include "decreg/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <numeric>

#include "decreg/decoding.hpp"
#include "decreg/numerics.hpp"
#include "decreg/training.hpp"

namespace decreg {

namespace {

// Merge-sort count of strict inversions (pairs i < j with v[i] > v[j]).
int64_t count_inversions(std::vector<double>& v, std::vector<double>& buf, size_t lo, size_t hi) {
    if (hi - lo < 2) return 0;
    const size_t mid = lo + (hi - lo) / 2;
    int64_t inv = count_inversions(v, buf, lo, mid) + count_inversions(v, buf, mid, hi);
    size_t i = lo, j = mid, k = lo;
    while (i < mid && j < hi) {
        if (v[j] < v[i]) {
            inv += static_cast<int64_t>(mid - i);
            buf[k++] = v[j++];
        } else {
            buf[k++] = v[i++];
        }
    }
    while (i < mid) buf[k++] = v[i++];
    while (j < hi) buf[k++] = v[j++];
    std::copy(buf.begin() + static_cast<int64_t>(lo), buf.begin() + static_cast<int64_t>(hi),
              v.begin() + static_cast<int64_t>(lo));
    return inv;
}

int64_t tie_pairs(const std::vector<double>& sorted) {
    int64_t total = 0;
    size_t i = 0;
    while (i < sorted.size()) {
        size_t j = i;
        while (j < sorted.size() && sorted[j] == sorted[i]) ++j;
        const int64_t t = static_cast<int64_t>(j - i);
        total += t * (t - 1) / 2;
        i = j;
    }
    return total;
}

}  // namespace

double kendall_tau(const std::vector<double>& preds, const std::vector<double>& targets) {
    const size_t n = preds.size();
    if (n != targets.size()) throw UsageError("kendall_tau: length mismatch");
    if (n < 2) throw UsageError("kendall_tau requires at least 2 points");
    for (double v : preds)
        if (!std::isfinite(v)) throw DataError("kendall_tau: non-finite prediction");
    for (double v : targets)
        if (!std::isfinite(v)) throw DataError("kendall_tau: non-finite target");

    std::vector<size_t> order(n);
    std::iota(order.begin(), order.end(), 0);
    std::sort(order.begin(), order.end(), [&](size_t a, size_t b) {
        if (preds[a] != preds[b]) return preds[a] < preds[b];
        return targets[a] < targets[b];
    });

    const int64_t n0 = static_cast<int64_t>(n) * (static_cast<int64_t>(n) - 1) / 2;
    // Ties in x, and joint ties, from runs of the x-sorted order.
    int64_t xtie = 0, xytie = 0;
    {
        size_t i = 0;
        while (i < n) {
            size_t j = i;
            while (j < n && preds[order[j]] == preds[order[i]]) ++j;
            const int64_t t = static_cast<int64_t>(j - i);
            xtie += t * (t - 1) / 2;
            size_t a = i;
            while (a < j) {
                size_t b = a;
                while (b < j && targets[order[b]] == targets[order[a]]) ++b;
                const int64_t u = static_cast<int64_t>(b - a);
                xytie += u * (u - 1) / 2;
                a = b;
            }
            i = j;
        }
    }
    std::vector<double> ys(n);
    for (size_t i = 0; i < n; ++i) ys[i] = targets[order[i]];
    std::vector<double> buf(n);
    const int64_t discordant = count_inversions(ys, buf, 0, n);
    std::sort(ys.begin(), ys.end());
    const int64_t ytie = tie_pairs(ys);

    const double den_x = static_cast<double>(n0 - xtie);
    const double den_y = static_cast<double>(n0 - ytie);
    if (den_x <= 0.0 || den_y <= 0.0)
        throw DataError("kendall_tau undefined: one input is entirely tied");
    const double num = static_cast<double>(n0 - xtie - ytie + xytie - 2 * discordant);
    return num / std::sqrt(den_x * den_y);
}

double relative_mse(const std::vector<double>& preds, const std::vector<double>& targets) {
    const size_t n = preds.size();
    if (n != targets.size()) throw UsageError("relative_mse: length mismatch");
    if (n < 2) throw UsageError("relative_mse requires at least 2 points");
    double mean = 0.0;
    for (double t : targets) mean += t;
    mean /= static_cast<double>(n);
    double var = 0.0, mse = 0.0;
    for (size_t i = 0; i < n; ++i) {
        var += (targets[i] - mean) * (targets[i] - mean);
        mse += (preds[i] - targets[i]) * (preds[i] - targets[i]);
    }
    if (var <= 0.0) throw DataError("relative_mse undefined: targets have zero variance");
    return mse / var;
}

double continuous_nll(const RegressionModel& model, const Tensor& x_row, double y) {
    if (!model.normalizer()) throw UsageError("continuous_nll requires a fitted model");
    const NormalizerStats& stats = *model.normalizer();
    Tensor xn({1, x_row.numel()}, x_row.vec());
    xn = apply_x(stats, xn);
    const Tensor phi = model.encode_features(Tensor({x_row.numel()}, xn.vec()));

    constexpr double kInf = std::numeric_limits<double>::infinity();
    switch (model.config().head) {
        case HeadKind::kDecoder: {
            const SchemePtr& scheme = model.config().scheme;
            const bool unit_domain = scheme_is_normalized_domain(*scheme);
            double ym = y;
            if (unit_domain) ym = clamp_unit_interval(stats.apply_y(y));
            const TokenSeq seq = scheme->encode(ym);
            const double logp = sequence_log_prob(model, phi, scheme, seq);
            if (!std::isfinite(logp)) return kInf;

            const Scheme* base = scheme.get();
            if (const auto* rep = dynamic_cast<const RepetitionScheme*>(base)) base = rep->inner().get();
            double log_width;
            if (const auto* norm = dynamic_cast<const NormalizedScheme*>(base)) {
                log_width = -norm->digits() * std::log(static_cast<double>(norm->base()));
            } else if (const auto* ham = dynamic_cast<const HammingScheme*>(base)) {
                log_width = -ham->bits() * std::log(2.0);
            } else {
                const auto* un = dynamic_cast<const UnnormalizedScheme*>(base);
                const int64_t e = un->exponent_of(ym);
                log_width = static_cast<double>(e - (un->mantissa_digits() - 1)) *
                            std::log(static_cast<double>(un->base()));
            }
            return -(logp - log_width);
        }
        case HeadKind::kRiemann: {
            const double ym = clamp_unit_interval(stats.apply_y(y));
            const int64_t bins = model.config().bins;
            const int64_t bin = std::min<int64_t>(static_cast<int64_t>(ym * bins), bins - 1);
            const Tensor probs = model.riemann_probs(phi);
            const double p = probs[bin];
            if (!(p > 0.0)) return kInf;
            return -std::log(p * static_cast<double>(bins));
        }
        case HeadKind::kMdn: {
            const double ym = stats.apply_y(y);
            const auto mp = model.mdn_params(phi);
            double best = -kInf;
            std::vector<double> logs(mp.pi.size());
            for (size_t i = 0; i < mp.pi.size(); ++i) {
                const double z = (ym - mp.mu[i]) / mp.sigma[i];
                logs[i] = std::log(mp.pi[i]) - 0.5 * z * z - std::log(mp.sigma[i]) -
                          0.5 * std::log(2.0 * std::numbers::pi);
                best = std::max(best, logs[i]);
            }
            if (!std::isfinite(best)) return kInf;
            double acc = 0.0;
            for (double l : logs) acc += std::exp(l - best);
            return -(best + std::log(acc));
        }
        case HeadKind::kPointwise:
            throw UsageError("continuous_nll: the pointwise head has no density");
    }
    throw UsageError("unknown head kind");
}

}  // namespace decreg
