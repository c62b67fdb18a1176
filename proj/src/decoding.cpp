#include "decreg/decoding.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <numeric>

#include "decreg/numerics.hpp"

namespace decreg {

namespace {

constexpr double kNegInf = -std::numeric_limits<double>::infinity();

void check_scheme(const RegressionModel& model, const SchemePtr& scheme) {
    if (!scheme) throw UsageError("a token scheme is required");
    if (model.config().head != HeadKind::kDecoder)
        throw UsageError("sequence decoding requires a decoder head");
    if (scheme->vocab_size() > model.config().scheme->vocab_size())
        throw UsageError("scheme vocabulary exceeds the head vocabulary");
    if (scheme->length() > model.config().scheme->length())
        throw UsageError("scheme length exceeds the head's trained length");
}

// Masked renormalized log-probabilities at temperature 1 for the valid set.
std::vector<double> masked_log_probs(const Tensor& logits, const std::vector<int>& valid) {
    double m = kNegInf;
    for (int t : valid) m = std::max(m, logits[t]);
    double z = 0.0;
    for (int t : valid) z += std::exp(logits[t] - m);
    const double lz = m + std::log(z);
    std::vector<double> out(valid.size());
    for (size_t i = 0; i < valid.size(); ++i) out[i] = logits[valid[i]] - lz;
    return out;
}

// mask -> temperature -> top-k -> top-p -> renormalize.
std::vector<double> filtered_probs(const Tensor& logits, const std::vector<int>& valid,
                                   const SamplerConfig& cfg) {
    double m = kNegInf;
    for (int t : valid) m = std::max(m, logits[t]);
    std::vector<double> w(valid.size());
    double z = 0.0;
    for (size_t i = 0; i < valid.size(); ++i) {
        w[i] = std::exp((logits[valid[i]] - m) / cfg.temperature);
        z += w[i];
    }
    for (double& x : w) x /= z;

    std::vector<size_t> order(valid.size());
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), [&](size_t a, size_t b) { return w[a] > w[b]; });

    size_t keep = valid.size();
    if (cfg.top_k > 0) keep = std::min<size_t>(keep, static_cast<size_t>(cfg.top_k));
    if (cfg.top_p < 1.0) {
        double cum = 0.0;
        size_t k = 0;
        while (k < keep) {
            cum += w[order[k]];
            ++k;
            if (cum >= cfg.top_p) break;
        }
        keep = std::max<size_t>(k, 1);
    }
    keep = std::max<size_t>(keep, 1);

    std::vector<double> probs(valid.size(), 0.0);
    double total = 0.0;
    for (size_t i = 0; i < keep; ++i) total += w[order[i]];
    if (total <= 0.0) {
        // Filtered set carries no mass; fall back to the masked distribution.
        return w;
    }
    for (size_t i = 0; i < keep; ++i) probs[order[i]] = w[order[i]] / total;
    return probs;
}

int sample_index(const std::vector<double>& probs, std::mt19937_64& rng) {
    std::uniform_real_distribution<double> u(0.0, 1.0);
    const double r = u(rng);
    double cum = 0.0;
    for (size_t i = 0; i < probs.size(); ++i) {
        cum += probs[i];
        if (r < cum) return static_cast<int>(i);
    }
    for (size_t i = probs.size(); i-- > 0;)
        if (probs[i] > 0.0) return static_cast<int>(i);
    return 0;
}

// Next-token logits for a batch of equal-length prefixes under one phi.
std::vector<Tensor> batch_next_logits(const RegressionModel& model, const Tensor& phi_row,
                                      const std::vector<TokenSeq>& prefixes) {
    const int64_t n = static_cast<int64_t>(prefixes.size());
    const int64_t steps = static_cast<int64_t>(prefixes[0].size()) + 1;
    const int64_t d = model.config().encoder.out_dim;
    const int64_t v = model.config().scheme->vocab_size();

    std::vector<double> phis;
    phis.reserve(static_cast<size_t>(n * d));
    for (int64_t i = 0; i < n; ++i)
        phis.insert(phis.end(), phi_row.vec().begin(), phi_row.vec().end());
    std::vector<int64_t> tokens;
    tokens.reserve(static_cast<size_t>(n * (steps - 1)));
    for (const auto& p : prefixes) tokens.insert(tokens.end(), p.begin(), p.end());

    Bindings b;
    model.params().bind_into(b);
    b["phi"] = Tensor({n, d}, std::move(phis));
    Tensor all = evaluate(model.decoder_logits_expr(input("phi", {n, d}), tokens, n, steps), b);

    std::vector<Tensor> out;
    out.reserve(static_cast<size_t>(n));
    for (int64_t i = 0; i < n; ++i) {
        std::vector<double> row(all.vec().begin() + (i * steps + steps - 1) * v,
                                all.vec().begin() + (i * steps + steps) * v);
        out.emplace_back(std::vector<int64_t>{v}, std::move(row));
    }
    return out;
}

}  // namespace

std::vector<std::pair<int, double>> next_token_distribution(const RegressionModel& model,
                                                            const Tensor& phi_row,
                                                            const SchemePtr& scheme,
                                                            const TokenSeq& prefix,
                                                            const SamplerConfig& config) {
    config.validate();
    check_scheme(model, scheme);
    const Tensor logits = model.decoder_logits(phi_row, prefix);
    const auto valid = scheme->valid_next(prefix);
    const auto probs = filtered_probs(logits, valid, config);
    std::vector<std::pair<int, double>> out;
    out.reserve(valid.size());
    for (size_t i = 0; i < valid.size(); ++i) out.emplace_back(valid[i], probs[i]);
    return out;
}

void SamplerConfig::validate() const {
    if (!(temperature > 0.0)) throw ConfigError("sampler temperature must be positive");
    if (top_k < 0) throw ConfigError("top_k must be >= 0");
    if (!(top_p > 0.0 && top_p <= 1.0)) throw ConfigError("top_p must be in (0, 1]");
    if (beam_width < 1) throw ConfigError("beam width must be >= 1");
    if (samples < 1) throw ConfigError("sample count must be >= 1");
}

std::vector<TokenSeq> sample_sequences(const RegressionModel& model, const Tensor& phi_row,
                                       const SchemePtr& scheme, const SamplerConfig& config,
                                       std::mt19937_64& rng, int count) {
    config.validate();
    check_scheme(model, scheme);
    if (count < 1) throw UsageError("sample count must be >= 1");
    std::vector<TokenSeq> seqs(static_cast<size_t>(count));
    const int length = scheme->length();
    for (int pos = 0; pos < length; ++pos) {
        auto logits = batch_next_logits(model, phi_row, seqs);
        for (int i = 0; i < count; ++i) {
            const auto valid = scheme->valid_next(seqs[static_cast<size_t>(i)]);
            const auto probs = filtered_probs(logits[static_cast<size_t>(i)], valid, config);
            seqs[static_cast<size_t>(i)].push_back(valid[static_cast<size_t>(sample_index(probs, rng))]);
        }
    }
    return seqs;
}

TokenSeq sample_sequence(const RegressionModel& model, const Tensor& phi_row,
                         const SchemePtr& scheme, const SamplerConfig& config,
                         std::mt19937_64& rng) {
    return sample_sequences(model, phi_row, scheme, config, rng, 1)[0];
}

TokenSeq beam_search_mode(const RegressionModel& model, const Tensor& phi_row,
                          const SchemePtr& scheme, int beam_width) {
    check_scheme(model, scheme);
    if (beam_width < 1) throw UsageError("beam width must be >= 1");
    struct Item {
        TokenSeq seq;
        double logp;
    };
    std::vector<Item> beam = {{{}, 0.0}};
    const int length = scheme->length();
    for (int pos = 0; pos < length; ++pos) {
        std::vector<TokenSeq> prefixes;
        prefixes.reserve(beam.size());
        for (const auto& it : beam) prefixes.push_back(it.seq);
        auto logits = batch_next_logits(model, phi_row, prefixes);
        std::vector<Item> candidates;
        for (size_t i = 0; i < beam.size(); ++i) {
            const auto valid = scheme->valid_next(beam[i].seq);
            const auto lp = masked_log_probs(logits[i], valid);
            for (size_t j = 0; j < valid.size(); ++j) {
                TokenSeq next = beam[i].seq;
                next.push_back(valid[j]);
                candidates.push_back({std::move(next), beam[i].logp + lp[j]});
            }
        }
        const size_t keep = std::min<size_t>(candidates.size(), static_cast<size_t>(beam_width));
        std::stable_sort(candidates.begin(), candidates.end(),
                         [](const Item& a, const Item& b) { return a.logp > b.logp; });
        candidates.resize(keep);
        beam = std::move(candidates);
    }
    return beam.front().seq;
}

std::vector<std::pair<TokenSeq, double>> exact_distribution(const RegressionModel& model,
                                                            const Tensor& phi_row,
                                                            const SchemePtr& scheme) {
    check_scheme(model, scheme);
    if (scheme->sequence_count(1e6 + 1) > 1e6)
        throw UsageError("sequence space exceeds 1e6; use sampling instead");
    std::vector<std::pair<TokenSeq, double>> out;
    TokenSeq prefix;
    std::function<void(double)> rec = [&](double logp) {
        if (static_cast<int>(prefix.size()) == scheme->length()) {
            out.emplace_back(prefix, std::exp(logp));
            return;
        }
        const Tensor logits = model.decoder_logits(phi_row, prefix);
        const auto valid = scheme->valid_next(prefix);
        const auto lp = masked_log_probs(logits, valid);
        for (size_t j = 0; j < valid.size(); ++j) {
            prefix.push_back(valid[j]);
            rec(logp + lp[j]);
            prefix.pop_back();
        }
    };
    rec(0.0);
    return out;
}

double sequence_log_prob(const RegressionModel& model, const Tensor& phi_row,
                         const SchemePtr& scheme, const TokenSeq& seq) {
    check_scheme(model, scheme);
    if (static_cast<int>(seq.size()) != scheme->length())
        throw UsageError("sequence length does not match the scheme");
    double logp = 0.0;
    TokenSeq prefix;
    for (int t : seq) {
        const Tensor logits = model.decoder_logits(phi_row, prefix);
        const auto valid = scheme->valid_next(prefix);
        const auto lp = masked_log_probs(logits, valid);
        const auto it = std::find(valid.begin(), valid.end(), t);
        if (it == valid.end()) return kNegInf;
        logp += lp[static_cast<size_t>(it - valid.begin())];
        prefix.push_back(t);
    }
    return logp;
}

double mean_estimate(const std::vector<double>& samples) {
    if (samples.empty()) throw UsageError("mean of an empty sample set");
    double s = 0.0;
    for (double v : samples) s += v;
    return s / static_cast<double>(samples.size());
}

std::vector<double> harrell_davis_weights(int n) {
    if (n < 1) throw UsageError("harrell_davis_weights requires n >= 1");
    const double a = (n + 1) / 2.0;
    std::vector<double> w(static_cast<size_t>(n));
    double prev = 0.0;
    for (int i = 1; i <= n; ++i) {
        const double cur =
            i == n ? 1.0 : regularized_incomplete_beta(a, a, static_cast<double>(i) / n);
        w[static_cast<size_t>(i - 1)] = cur - prev;
        prev = cur;
    }
    return w;
}

double median_harrell_davis(std::vector<double> samples) {
    if (samples.empty()) throw UsageError("median of an empty sample set");
    std::sort(samples.begin(), samples.end());
    const auto w = harrell_davis_weights(static_cast<int>(samples.size()));
    double out = 0.0;
    for (size_t i = 0; i < samples.size(); ++i) out += w[i] * samples[i];
    return out;
}

double raft_mean(const RegressionModel& model, const Tensor& phi_row, const SchemePtr& scheme,
                 const std::vector<double>& grid) {
    check_scheme(model, scheme);
    constexpr double kEnumCap = 1 << 20;
    if (grid.empty()) {
        if (scheme->sequence_count(kEnumCap + 1) <= kEnumCap && scheme->sequence_count(1e6 + 1) <= 1e6) {
            const auto dist = exact_distribution(model, phi_row, scheme);
            double total = 0.0, acc = 0.0;
            for (const auto& [seq, p] : dist) {
                total += p;
                acc += p * scheme->decode(seq);
            }
            return acc / total;
        }
        const bool normalized_domain = dynamic_cast<const UnnormalizedScheme*>(scheme.get()) == nullptr;
        if (!normalized_domain)
            throw UsageError("raft_mean needs an explicit evaluation grid for non-enumerable unnormalized schemes");
        std::vector<double> unit_grid(1024);
        for (size_t i = 0; i < unit_grid.size(); ++i)
            unit_grid[i] = (static_cast<double>(i) + 0.5) / static_cast<double>(unit_grid.size());
        return raft_mean(model, phi_row, scheme, unit_grid);
    }
    double total = 0.0, acc = 0.0;
    for (double y : grid) {
        TokenSeq seq;
        try {
            seq = scheme->encode(y);
        } catch (const RangeError& e) {
            throw ConfigError("raft_mean: grid value not encodable: " + std::string(e.what()));
        }
        const double p = std::exp(sequence_log_prob(model, phi_row, scheme, seq));
        total += p;
        acc += p * y;
    }
    if (total <= 0.0) throw UsageError("raft_mean: the evaluation grid carries no probability mass");
    return acc / total;
}

std::string statistic_name(Statistic s) {
    switch (s) {
        case Statistic::kMean: return "mean";
        case Statistic::kMedian: return "median";
        case Statistic::kMode: return "mode";
        case Statistic::kRaft: return "raft";
    }
    return "?";
}

Statistic statistic_from_name(const std::string& name) {
    if (name == "mean") return Statistic::kMean;
    if (name == "median") return Statistic::kMedian;
    if (name == "mode") return Statistic::kMode;
    if (name == "raft") return Statistic::kRaft;
    throw ConfigError("unknown statistic '" + name + "' (mean|median|mode|raft)");
}

double estimate(const RegressionModel& model, const Tensor& phi_row, const SchemePtr& scheme,
                Statistic statistic, const SamplerConfig& config, std::mt19937_64& rng) {
    config.validate();
    switch (statistic) {
        case Statistic::kMean:
        case Statistic::kMedian: {
            const auto seqs = sample_sequences(model, phi_row, scheme, config, rng, config.samples);
            std::vector<double> values;
            values.reserve(seqs.size());
            for (const auto& s : seqs) values.push_back(scheme->decode(s));
            return statistic == Statistic::kMean ? mean_estimate(values)
                                                 : median_harrell_davis(std::move(values));
        }
        case Statistic::kMode:
            return scheme->decode(beam_search_mode(model, phi_row, scheme, config.beam_width));
        case Statistic::kRaft:
            return raft_mean(model, phi_row, scheme);
    }
    throw UsageError("unknown statistic");
}

}  // namespace decreg
