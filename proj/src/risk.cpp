#include "decreg/risk.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <thread>

#include "decreg/decoding.hpp"
#include "decreg/numerics.hpp"

namespace decreg {

Density1D::Density1D(std::function<double(double)> pdf, std::function<double(double)> dpdf,
                     std::function<double(std::mt19937_64&)> sample)
    : pdf_(std::move(pdf)), dpdf_(std::move(dpdf)), sample_(std::move(sample)) {
    if (!pdf_ || !dpdf_ || !sample_) throw ConfigError("density requires pdf, derivative, and sampler");
    const double mass = gauss_legendre([this](double y) { return pdf_(y); }, 0.0, 1.0, 64);
    if (std::abs(mass - 1.0) > 1e-6)
        throw ConfigError("density does not integrate to 1 on [0,1]: got " + std::to_string(mass));
    for (int i = 0; i <= 64; ++i)
        if (pdf_(i / 64.0) < 0.0) throw ConfigError("density is negative on [0,1]");
}

std::vector<double> histogram_mle(const std::vector<double>& samples, int k) {
    if (samples.empty()) throw UsageError("histogram_mle on an empty sample set");
    if (k < 0 || k > 30) throw UsageError("histogram_mle requires 0 <= k <= 30");
    const int64_t bins = int64_t{1} << k;
    std::vector<double> probs(static_cast<size_t>(bins), 0.0);
    const double w = 1.0 / static_cast<double>(samples.size());
    for (double s : samples) {
        if (!(s >= 0.0 && s < 1.0)) throw UsageError("histogram_mle samples must lie in [0,1)");
        int64_t b = static_cast<int64_t>(s * static_cast<double>(bins));
        b = std::clamp<int64_t>(b, 0, bins - 1);
        probs[static_cast<size_t>(b)] += w;
    }
    return probs;
}

std::vector<double> probs_to_density(const std::vector<double>& probs) {
    std::vector<double> density(probs.size());
    const double bins = static_cast<double>(probs.size());
    for (size_t i = 0; i < probs.size(); ++i) density[i] = probs[i] * bins;
    return density;
}

double mise(const Density1D& f, const std::vector<double>& density_bins) {
    if (density_bins.empty()) throw UsageError("mise requires a piecewise-constant estimator");
    const size_t bins = density_bins.size();
    const double width = 1.0 / static_cast<double>(bins);
    double total = 0.0;
    for (size_t j = 0; j < bins; ++j) {
        const double c = density_bins[j];
        total += gauss_legendre(
            [&](double y) {
                const double d = f.pdf(y) - c;
                return d * d;
            },
            j * width, (j + 1) * width, 1);
    }
    return total;
}

RiskTerms theoretical_risk(const Density1D& f, int k, int64_t n) {
    if (n < 1) throw UsageError("theoretical_risk requires n >= 1");
    const double i2 = adaptive_simpson(
        [&](double y) {
            const double d = f.dpdf(y);
            return d * d;
        },
        0.0, 1.0, 1e-8);
    RiskTerms t;
    t.bias = ipow(2.0, -2 * int64_t{k}) / 12.0 * i2;
    t.variance = ipow(2.0, k) / static_cast<double>(n);
    return t;
}

std::string risk_estimator_name(RiskEstimator e) {
    switch (e) {
        case RiskEstimator::kHistogram: return "histogram";
        case RiskEstimator::kDecoder: return "decoder";
        case RiskEstimator::kRiemann: return "riemann";
    }
    return "?";
}

RiskEstimator risk_estimator_from_name(const std::string& name) {
    if (name == "histogram") return RiskEstimator::kHistogram;
    if (name == "decoder") return RiskEstimator::kDecoder;
    if (name == "riemann") return RiskEstimator::kRiemann;
    throw ConfigError("unknown risk estimator '" + name + "' (histogram|decoder|riemann)");
}

const RiskCell& RiskReport::cell(int k, int64_t n) const {
    for (const auto& c : cells)
        if (c.k == k && c.n == n) return c;
    throw UsageError("risk report has no cell for the requested (k, N)");
}

namespace {

// Bin probabilities at truncation k for a trained estimator at resolution K.
std::vector<double> marginalize(const std::vector<double>& fine, int k) {
    const size_t coarse_bins = size_t{1} << k;
    const size_t group = fine.size() / coarse_bins;
    std::vector<double> out(coarse_bins, 0.0);
    for (size_t i = 0; i < fine.size(); ++i) out[i / group] += fine[i];
    return out;
}

std::vector<double> model_bin_probs(const Density1D& /*f*/, const std::vector<double>& samples,
                                    int max_k, const RiskOptions& options, std::mt19937_64& rng) {
    const int64_t n = static_cast<int64_t>(samples.size());
    SampleBatch batch;
    batch.x = Tensor({n, 1});  // unconditional density: constant input
    batch.y = samples;

    ModelConfig mc;
    mc.encoder.input_dim = 1;
    mc.encoder.layers = options.encoder_layers;
    mc.encoder.hidden = options.encoder_hidden;
    mc.encoder.out_dim = options.encoder_out;
    TrainConfig tc = options.train;
    tc.normalize_targets = false;  // the samples already live in [0,1)

    if (options.estimator == RiskEstimator::kDecoder) {
        mc.head = HeadKind::kDecoder;
        mc.scheme = std::make_shared<NormalizedScheme>(2, max_k);
        mc.decoder = options.decoder;
        RegressionModel model(mc, rng);
        fit(model, batch, tc, rng);
        const Tensor phi = model.encode_features(Tensor({1}, {0.0}));
        const auto dist = exact_distribution(model, phi, mc.scheme);
        std::vector<double> probs(size_t{1} << max_k, 0.0);
        for (const auto& [seq, p] : dist) {
            size_t idx = 0;
            for (int t : seq) idx = idx * 2 + static_cast<size_t>(t);
            probs[idx] += p;
        }
        return probs;
    }

    mc.head = HeadKind::kRiemann;
    mc.bins = int64_t{1} << max_k;
    RegressionModel model(mc, rng);
    fit(model, batch, tc, rng);
    const Tensor phi = model.encode_features(Tensor({1}, {0.0}));
    const Tensor probs = model.riemann_probs(phi);
    return probs.vec();
}

}  // namespace

RiskReport risk_experiment(const Density1D& f, const std::vector<int>& ks,
                           const std::vector<int64_t>& ns, const RiskOptions& options) {
    if (ks.empty() || ns.empty()) throw UsageError("risk_experiment requires nonempty k and N ranges");
    if (options.runs < 1) throw UsageError("risk_experiment requires runs >= 1");
    const int max_k = *std::max_element(ks.begin(), ks.end());
    for (int k : ks)
        if (k < 1 || k > 20) throw UsageError("risk_experiment requires 1 <= k <= 20");
    if (options.estimator != RiskEstimator::kHistogram && max_k > 14)
        throw UsageError("model-backed risk estimators enumerate up to k = 14");

    struct Job {
        size_t n_idx;
        int run;
    };
    std::vector<Job> jobs;
    for (size_t ni = 0; ni < ns.size(); ++ni)
        for (int run = 0; run < options.runs; ++run) jobs.push_back({ni, run});

    // mises[(n_idx * runs + run) * ks.size() + k_idx]
    std::vector<double> mises(jobs.size() * ks.size(), 0.0);

    auto run_job = [&](const Job& job) {
        const int64_t n = ns[job.n_idx];
        std::seed_seq seq{options.seed, static_cast<uint64_t>(n), static_cast<uint64_t>(job.run + 1)};
        std::mt19937_64 rng(seq);
        std::vector<double> samples(static_cast<size_t>(n));
        for (auto& s : samples) {
            s = f.sample(rng);
            if (!(s >= 0.0 && s < 1.0)) s = std::min(std::nextafter(1.0, 0.0), std::max(0.0, s));
        }
        const size_t base = (job.n_idx * static_cast<size_t>(options.runs) + static_cast<size_t>(job.run)) * ks.size();
        if (options.estimator == RiskEstimator::kHistogram) {
            for (size_t ki = 0; ki < ks.size(); ++ki)
                mises[base + ki] = mise(f, probs_to_density(histogram_mle(samples, ks[ki])));
        } else {
            const auto fine = model_bin_probs(f, samples, max_k, options, rng);
            for (size_t ki = 0; ki < ks.size(); ++ki)
                mises[base + ki] = mise(f, probs_to_density(marginalize(fine, ks[ki])));
        }
    };

    const int threads = std::max(1, options.threads);
    if (threads == 1) {
        for (const auto& job : jobs) run_job(job);
    } else {
        std::atomic<size_t> next{0};
        std::vector<std::thread> pool;
        for (int t = 0; t < threads; ++t)
            pool.emplace_back([&] {
                for (size_t i = next.fetch_add(1); i < jobs.size(); i = next.fetch_add(1)) run_job(jobs[i]);
            });
        for (auto& th : pool) th.join();
    }

    RiskReport report;
    for (size_t ni = 0; ni < ns.size(); ++ni) {
        for (size_t ki = 0; ki < ks.size(); ++ki) {
            RiskCell cell;
            cell.k = ks[ki];
            cell.n = ns[ni];
            double sum = 0.0, sum2 = 0.0;
            for (int run = 0; run < options.runs; ++run) {
                const double m =
                    mises[(ni * static_cast<size_t>(options.runs) + static_cast<size_t>(run)) * ks.size() + ki];
                report.points.push_back({ks[ki], ns[ni], run, m});
                sum += m;
                sum2 += m * m;
            }
            cell.emp_mean = sum / options.runs;
            cell.emp_std = options.runs > 1
                               ? std::sqrt(std::max(0.0, sum2 / options.runs - cell.emp_mean * cell.emp_mean))
                               : 0.0;
            const RiskTerms t = theoretical_risk(f, ks[ki], ns[ni]);
            cell.bias = t.bias;
            cell.variance = t.variance;
            report.cells.push_back(cell);
        }
    }
    return report;
}

}  // namespace decreg
