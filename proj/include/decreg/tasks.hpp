#pragma once

#include <functional>
#include <random>
#include <string>
#include <vector>

#include "decreg/data.hpp"
#include "decreg/risk.hpp"

namespace decreg {

// Synthetic generator: uniform x over a box, y from a deterministic target
// plus optional Gaussian noise, or from a conditional sampler.
struct SyntheticTask {
    std::string name;
    int64_t input_dim = 1;
    std::vector<std::pair<double, double>> box;
    std::function<double(const std::vector<double>&)> target;  // may be empty for pure samplers
    std::function<double(const std::vector<double>&, std::mt19937_64&)> cond_sampler;
    double noise_std = 0.0;

    SampleBatch sample(int64_t n, std::mt19937_64& rng) const;
};

// 1-D curve suite: sinusoid | sawtooth | exp_growth | asymptote.
// The shapes follow the curve-fitting suite's spirit; exact formulas are this
// registry's own documented choices.
SyntheticTask make_curve(const std::string& name);

// Truncated normal N_[0,1](mu, sigma^2) with analytic pdf derivative and a
// rejection sampler.
Density1D truncated_gaussian(double mu, double sigma);

// Raw BBOB-style objectives on [-5,5]^dim, no instance transformations:
// sphere | rastrigin | rosenbrock | griewank_rosenbrock | lin_slope |
// discus | bent_cigar | weierstrass.
SyntheticTask make_bbob(const std::string& name, int dim);

// Conditional density shapes: bimodal | fan | ring | step_mixture.
SyntheticTask make_density_shape(const std::string& name);

struct TabularDataset {
    std::vector<std::string> columns;  // feature column names
    std::string target_column;
    Tensor features;  // [n, p]
    std::vector<double> targets;
    std::vector<int64_t> train_idx;
    std::vector<int64_t> test_idx;
    int64_t dropped_rows = 0;

    SampleBatch train_batch() const;
    SampleBatch test_batch() const;
};

// Comma-delimited numeric text with a mandatory header. Rows with any
// unparseable cell are dropped and counted; the train/test split is a
// deterministic shuffle of the retained rows.
TabularDataset load_csv(const std::string& path, const std::string& target_column,
                        double test_fraction, uint64_t seed);

std::vector<std::string> curve_names();
std::vector<std::string> bbob_names();
std::vector<std::string> density_shape_names();

}  // namespace decreg
