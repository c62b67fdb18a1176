#include "decreg/tasks.hpp"

#include "decreg/numerics.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numbers>
#include <numeric>
#include <sstream>

namespace decreg {

namespace {

constexpr double kPi = std::numbers::pi;

std::string join_names(const std::vector<std::string>& names) {
    std::string out;
    for (size_t i = 0; i < names.size(); ++i) {
        if (i) out += ", ";
        out += names[i];
    }
    return out;
}

}  // namespace

SampleBatch SyntheticTask::sample(int64_t n, std::mt19937_64& rng) const {
    if (n < 1) throw UsageError("task sample count must be >= 1");
    if (static_cast<int64_t>(box.size()) != input_dim)
        throw ConfigError("task box does not match the input dimension");
    SampleBatch out;
    out.x = Tensor({n, input_dim});
    out.y.resize(static_cast<size_t>(n));
    std::vector<double> row(static_cast<size_t>(input_dim));
    std::normal_distribution<double> noise(0.0, 1.0);
    for (int64_t i = 0; i < n; ++i) {
        for (int64_t j = 0; j < input_dim; ++j) {
            std::uniform_real_distribution<double> u(box[static_cast<size_t>(j)].first,
                                                     box[static_cast<size_t>(j)].second);
            row[static_cast<size_t>(j)] = u(rng);
            out.x[i * input_dim + j] = row[static_cast<size_t>(j)];
        }
        double y;
        if (cond_sampler) {
            y = cond_sampler(row, rng);
        } else {
            if (!target) throw ConfigError("task '" + name + "' has no target or sampler");
            y = target(row);
            if (noise_std > 0.0) y += noise_std * noise(rng);
        }
        out.y[static_cast<size_t>(i)] = y;
    }
    return out;
}

std::vector<std::string> curve_names() { return {"sinusoid", "sawtooth", "exp_growth", "asymptote"}; }

SyntheticTask make_curve(const std::string& name) {
    SyntheticTask t;
    t.name = name;
    t.input_dim = 1;
    if (name == "sinusoid") {
        t.box = {{0.0, 1.0}};
        t.target = [](const std::vector<double>& x) { return std::sin(2.0 * kPi * x[0]); };
        return t;
    }
    if (name == "sawtooth") {
        // High-Lipschitz: four teeth over the unit interval.
        t.box = {{0.0, 1.0}};
        t.target = [](const std::vector<double>& x) {
            const double u = x[0] * 4.0;
            return 2.0 * (u - std::floor(u)) - 1.0;
        };
        return t;
    }
    if (name == "exp_growth") {
        t.box = {{0.0, 1.0}};
        t.target = [](const std::vector<double>& x) { return std::exp(6.0 * x[0]); };
        return t;
    }
    if (name == "asymptote") {
        // tan(x) up to 1e-7 from the poles; |y| tops out near 1e7.
        const double edge = kPi / 2.0 - 1e-7;
        t.box = {{-edge, edge}};
        t.target = [](const std::vector<double>& x) { return std::tan(x[0]); };
        return t;
    }
    throw ConfigError("unknown curve '" + name + "'; options: " + join_names(curve_names()));
}

Density1D truncated_gaussian(double mu, double sigma) {
    if (!(sigma > 0.0)) throw ConfigError("truncated_gaussian requires sigma > 0");
    const double z = normal_cdf((1.0 - mu) / sigma) - normal_cdf((0.0 - mu) / sigma);
    if (!(z > 0.0)) throw ConfigError("truncated_gaussian has no mass in [0,1]");
    const double norm = 1.0 / (sigma * std::sqrt(2.0 * kPi) * z);
    auto pdf = [=](double y) {
        if (y < 0.0 || y > 1.0) return 0.0;
        const double u = (y - mu) / sigma;
        return norm * std::exp(-0.5 * u * u);
    };
    auto dpdf = [=](double y) {
        if (y < 0.0 || y > 1.0) return 0.0;
        const double u = (y - mu) / sigma;
        return -u / sigma * norm * std::exp(-0.5 * u * u);
    };
    auto sample = [=](std::mt19937_64& rng) {
        std::normal_distribution<double> g(mu, sigma);
        for (int tries = 0; tries < 100000; ++tries) {
            const double y = g(rng);
            if (y >= 0.0 && y < 1.0) return y;
        }
        throw DataError("truncated_gaussian rejection sampler failed to land in [0,1)");
    };
    return Density1D(pdf, dpdf, sample);
}

std::vector<std::string> bbob_names() {
    return {"sphere", "rastrigin", "rosenbrock", "griewank_rosenbrock",
            "lin_slope", "discus", "bent_cigar", "weierstrass"};
}

SyntheticTask make_bbob(const std::string& name, int dim) {
    if (dim < 1) throw ConfigError("bbob functions require dim >= 1");
    SyntheticTask t;
    t.name = name;
    t.input_dim = dim;
    t.box.assign(static_cast<size_t>(dim), {-5.0, 5.0});
    if (name == "sphere") {
        t.target = [](const std::vector<double>& x) {
            double s = 0.0;
            for (double v : x) s += v * v;
            return s;
        };
        return t;
    }
    if (name == "rastrigin") {
        t.target = [](const std::vector<double>& x) {
            double s = 10.0 * static_cast<double>(x.size());
            for (double v : x) s += v * v - 10.0 * std::cos(2.0 * kPi * v);
            return s;
        };
        return t;
    }
    if (name == "rosenbrock") {
        if (dim < 2) throw ConfigError("rosenbrock is undefined for dim < 2");
        t.target = [](const std::vector<double>& x) {
            double s = 0.0;
            for (size_t i = 0; i + 1 < x.size(); ++i) {
                const double a = x[i + 1] - x[i] * x[i];
                const double b = 1.0 - x[i];
                s += 100.0 * a * a + b * b;
            }
            return s;
        };
        return t;
    }
    if (name == "griewank_rosenbrock") {
        if (dim < 2) throw ConfigError("griewank_rosenbrock is undefined for dim < 2");
        t.target = [dim](const std::vector<double>& x) {
            double s = 0.0;
            for (size_t i = 0; i + 1 < x.size(); ++i) {
                const double si = 100.0 * std::pow(x[i] * x[i] - x[i + 1], 2) + std::pow(x[i] - 1.0, 2);
                s += si / 4000.0 - std::cos(si);
            }
            return 10.0 / (2.0 * (dim - 1)) * s + 10.0;
        };
        return t;
    }
    if (name == "lin_slope") {
        t.target = [dim](const std::vector<double>& x) {
            double s = 0.0;
            for (size_t i = 0; i < x.size(); ++i) {
                const double si = std::pow(10.0, static_cast<double>(i) / std::max(1, dim - 1));
                s += 5.0 * si - si * x[i];
            }
            return s;
        };
        return t;
    }
    if (name == "discus") {
        t.target = [](const std::vector<double>& x) {
            double s = 1e6 * x[0] * x[0];
            for (size_t i = 1; i < x.size(); ++i) s += x[i] * x[i];
            return s;
        };
        return t;
    }
    if (name == "bent_cigar") {
        t.target = [](const std::vector<double>& x) {
            double s = x[0] * x[0];
            for (size_t i = 1; i < x.size(); ++i) s += 1e6 * x[i] * x[i];
            return s;
        };
        return t;
    }
    if (name == "weierstrass") {
        t.target = [](const std::vector<double>& x) {
            constexpr double a = 0.5, b = 3.0;
            constexpr int kmax = 12;
            double f0 = 0.0;
            double ap = 1.0, bp = 1.0;
            for (int k = 0; k <= kmax; ++k) {
                f0 += ap * std::cos(kPi * bp);
                ap *= a;
                bp *= b;
            }
            double s = 0.0;
            for (double v : x) {
                ap = 1.0;
                bp = 1.0;
                for (int k = 0; k <= kmax; ++k) {
                    s += ap * std::cos(2.0 * kPi * bp * (v + 0.5));
                    ap *= a;
                    bp *= b;
                }
            }
            return s - static_cast<double>(x.size()) * f0;
        };
        return t;
    }
    throw ConfigError("unknown bbob function '" + name + "'; options: " + join_names(bbob_names()));
}

std::vector<std::string> density_shape_names() { return {"bimodal", "fan", "ring", "step_mixture"}; }

SyntheticTask make_density_shape(const std::string& name) {
    SyntheticTask t;
    t.name = name;
    t.input_dim = 1;
    if (name == "bimodal") {
        // Two branches tracking sin(2 pi x) +- 3.
        t.box = {{0.0, 1.0}};
        t.cond_sampler = [](const std::vector<double>& x, std::mt19937_64& rng) {
            std::bernoulli_distribution pick(0.5);
            std::normal_distribution<double> g(0.0, 0.3);
            const double mid = std::sin(2.0 * kPi * x[0]);
            return mid + (pick(rng) ? 3.0 : -3.0) + g(rng);
        };
        return t;
    }
    if (name == "fan") {
        // Heteroscedastic: std grows linearly with x.
        t.box = {{0.0, 1.0}};
        t.cond_sampler = [](const std::vector<double>& x, std::mt19937_64& rng) {
            std::normal_distribution<double> g(0.0, 1.0);
            return (0.1 + 2.0 * x[0]) * g(rng);
        };
        return t;
    }
    if (name == "ring") {
        t.box = {{-1.0, 1.0}};
        t.cond_sampler = [](const std::vector<double>& x, std::mt19937_64& rng) {
            std::bernoulli_distribution pick(0.5);
            std::normal_distribution<double> g(0.0, 0.05);
            const double arc = std::sqrt(std::max(0.0, 1.0 - x[0] * x[0]));
            return (pick(rng) ? arc : -arc) + g(rng);
        };
        return t;
    }
    if (name == "step_mixture") {
        // Mode weight steps at x = 0.5 between branches at -2 and +2.
        t.box = {{0.0, 1.0}};
        t.cond_sampler = [](const std::vector<double>& x, std::mt19937_64& rng) {
            const double w = x[0] < 0.5 ? 0.9 : 0.1;
            std::bernoulli_distribution pick(w);
            std::normal_distribution<double> g(0.0, 0.2);
            return (pick(rng) ? 2.0 : -2.0) + g(rng);
        };
        return t;
    }
    throw ConfigError("unknown density shape '" + name + "'; options: " + join_names(density_shape_names()));
}

SampleBatch TabularDataset::train_batch() const {
    SampleBatch b;
    const int64_t p = features.dim(1);
    b.x = Tensor({static_cast<int64_t>(train_idx.size()), p});
    b.y.reserve(train_idx.size());
    for (size_t i = 0; i < train_idx.size(); ++i) {
        std::copy_n(features.data() + train_idx[i] * p, p, b.x.data() + static_cast<int64_t>(i) * p);
        b.y.push_back(targets[static_cast<size_t>(train_idx[i])]);
    }
    return b;
}

SampleBatch TabularDataset::test_batch() const {
    SampleBatch b;
    const int64_t p = features.dim(1);
    b.x = Tensor({static_cast<int64_t>(test_idx.size()), p});
    b.y.reserve(test_idx.size());
    for (size_t i = 0; i < test_idx.size(); ++i) {
        std::copy_n(features.data() + test_idx[i] * p, p, b.x.data() + static_cast<int64_t>(i) * p);
        b.y.push_back(targets[static_cast<size_t>(test_idx[i])]);
    }
    return b;
}

TabularDataset load_csv(const std::string& path, const std::string& target_column,
                        double test_fraction, uint64_t seed) {
    if (!(test_fraction > 0.0 && test_fraction < 1.0))
        throw ConfigError("test fraction must be in (0, 1)");
    std::ifstream in(path);
    if (!in) throw DataError("cannot open csv file: " + path);
    std::string line;
    if (!std::getline(in, line)) throw DataError("empty csv file: " + path);
    if (!line.empty() && line.back() == '\r') line.pop_back();

    std::vector<std::string> header;
    {
        std::stringstream ss(line);
        std::string cell;
        while (std::getline(ss, cell, ',')) header.push_back(cell);
    }
    if (header.empty()) throw DataError("csv header has no columns: " + path);
    int64_t target_idx = -1;
    for (size_t i = 0; i < header.size(); ++i)
        if (header[i] == target_column) target_idx = static_cast<int64_t>(i);
    if (target_idx < 0)
        throw DataError("target column '" + target_column + "' not found in " + path);

    std::vector<std::vector<double>> rows;
    int64_t dropped = 0;
    int64_t line_no = 1;
    while (std::getline(in, line)) {
        ++line_no;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        std::stringstream ss(line);
        std::string cell;
        std::vector<double> row;
        bool ok = true;
        while (std::getline(ss, cell, ',')) {
            try {
                size_t pos = 0;
                const double v = std::stod(cell, &pos);
                while (pos < cell.size() && std::isspace(static_cast<unsigned char>(cell[pos]))) ++pos;
                if (pos != cell.size() || !std::isfinite(v)) throw std::invalid_argument(cell);
                row.push_back(v);
            } catch (const std::exception&) {
                ok = false;
                break;
            }
        }
        if (!ok || row.size() != header.size()) {
            ++dropped;
            continue;
        }
        rows.push_back(std::move(row));
    }
    if (rows.empty()) throw DataError("csv file has no usable data rows: " + path);

    TabularDataset ds;
    ds.target_column = target_column;
    ds.dropped_rows = dropped;
    const int64_t n = static_cast<int64_t>(rows.size());
    const int64_t p = static_cast<int64_t>(header.size()) - 1;
    if (p < 1) throw DataError("csv needs at least one feature column besides the target");
    for (size_t i = 0; i < header.size(); ++i)
        if (static_cast<int64_t>(i) != target_idx) ds.columns.push_back(header[i]);
    ds.features = Tensor({n, p});
    ds.targets.resize(static_cast<size_t>(n));
    for (int64_t i = 0; i < n; ++i) {
        int64_t jj = 0;
        for (int64_t j = 0; j < static_cast<int64_t>(header.size()); ++j) {
            const double v = rows[static_cast<size_t>(i)][static_cast<size_t>(j)];
            if (j == target_idx)
                ds.targets[static_cast<size_t>(i)] = v;
            else
                ds.features[i * p + jj++] = v;
        }
    }

    std::vector<int64_t> idx(static_cast<size_t>(n));
    std::iota(idx.begin(), idx.end(), 0);
    std::mt19937_64 rng(seed);
    std::shuffle(idx.begin(), idx.end(), rng);
    const int64_t n_test = std::clamp<int64_t>(std::llround(test_fraction * static_cast<double>(n)), 1, n - 1);
    ds.test_idx.assign(idx.begin(), idx.begin() + n_test);
    ds.train_idx.assign(idx.begin() + n_test, idx.end());
    return ds;
}

}  // namespace decreg
