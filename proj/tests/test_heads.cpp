#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <cstdio>
#include <random>

#include "decreg/checkpoint.hpp"
#include "decreg/heads.hpp"

using namespace decreg;

namespace {

ModelConfig tiny_decoder_config(int64_t d = 6, int layers = 1, int heads = 1, int64_t width = 8) {
    ModelConfig c;
    c.encoder = {2, 1, 4, d};
    c.head = HeadKind::kDecoder;
    c.scheme = std::make_shared<NormalizedScheme>(2, 4);
    c.decoder = {layers, heads, width};
    return c;
}

void zero_params(RegressionModel& m) {
    for (const auto& name : m.params().names()) {
        Tensor& t = m.params().at(name);
        for (int64_t i = 0; i < t.numel(); ++i) t[i] = 0.0;
    }
}

}  // namespace

TEST_CASE("encoder features") {
    std::mt19937_64 rng(1);
    SUBCASE("zero weights give the zero vector") {
        ModelConfig c;
        c.encoder = {3, 2, 5, 4};
        RegressionModel m(c, rng);
        zero_params(m);
        Tensor phi = m.encode_features(Tensor({3}, {1.0, -2.0, 0.5}));
        REQUIRE(phi.shape() == std::vector<int64_t>{4});
        for (int64_t i = 0; i < 4; ++i) CHECK(phi[i] == 0.0);
    }
    SUBCASE("output width equals the configured representation width") {
        for (int layers : {1, 2, 3, 5}) {
            for (int64_t d : {1, 7, 16}) {
                ModelConfig c;
                c.encoder = {4, layers, 8, d};
                RegressionModel m(c, rng);
                Tensor x({2, 4}, {0.1, 0.2, 0.3, 0.4, -1.0, 0.0, 1.0, 2.0});
                CHECK(m.encode_features(x).shape() == std::vector<int64_t>{2, d});
            }
        }
    }
    SUBCASE("hand-set integer weights reproduce hand-computed activations") {
        ModelConfig c;
        c.encoder = {2, 2, 2, 1};
        RegressionModel m(c, rng);
        zero_params(m);
        // h1 = relu(x W0 + b0), W0 = [[1,2],[3,-1]], b0 = (0, 1)
        m.params().at("enc.w0") = Tensor({2, 2}, {1, 2, 3, -1});
        m.params().at("enc.b0") = Tensor({2}, {0, 1});
        // h2 = relu(h1 W1), W1 = [[1,-1],[2,1]]
        m.params().at("enc.w1") = Tensor({2, 2}, {1, -1, 2, 1});
        // phi = h2 Wout, Wout = [[2],[3]]
        m.params().at("enc.wout") = Tensor({2, 1}, {2, 3});
        // x=(1,1): h1 = relu(4, 2) = (4,2); h2 = relu(4+4, -4+2) = (8,0); phi = 16.
        Tensor phi = m.encode_features(Tensor({2}, {1.0, 1.0}));
        CHECK(phi[0] == doctest::Approx(16.0));
    }
    SUBCASE("dimension mismatch is a configuration error") {
        ModelConfig c;
        c.encoder = {3, 1, 4, 2};
        RegressionModel m(c, rng);
        CHECK_THROWS_AS(m.encode_features(Tensor({2}, {1.0, 2.0})), ConfigError);
    }
}

TEST_CASE("decoder logits") {
    std::mt19937_64 rng(2);
    RegressionModel m(tiny_decoder_config(), rng);
    Tensor phi = m.encode_features(Tensor({2}, {0.3, -0.7}));

    SUBCASE("empty prefix conditions on phi only") {
        Tensor logits = m.decoder_logits(phi, {});
        REQUIRE(logits.shape() == std::vector<int64_t>{2});
        CHECK(logits.all_finite());
    }
    SUBCASE("prefix at full length is a usage error") {
        CHECK_THROWS_AS(m.decoder_logits(phi, {0, 1, 0, 1}), UsageError);
    }
    SUBCASE("zero output projection gives a uniform next-token distribution") {
        RegressionModel z(tiny_decoder_config(), rng);
        Tensor& w = z.params().at("head.out.w");
        Tensor& b = z.params().at("head.out.b");
        for (int64_t i = 0; i < w.numel(); ++i) w[i] = 0.0;
        for (int64_t i = 0; i < b.numel(); ++i) b[i] = 0.0;
        Tensor logits = z.decoder_logits(phi, {1});
        CHECK(logits[0] == doctest::Approx(logits[1]));
    }
}

TEST_CASE("decoder causality: perturbing token j leaves earlier logits unchanged") {
    std::mt19937_64 rng(3);
    for (int heads : {1, 2}) {
        RegressionModel m(tiny_decoder_config(6, 2, heads, 8), rng);
        Tensor phi = m.encode_features(Tensor({2}, {0.5, 0.25}));
        const int64_t k = 4, v = 2;
        auto all_logits = [&](const std::vector<int64_t>& toks) {
            Bindings b;
            m.params().bind_into(b);
            b["phi"] = Tensor({1, 6}, phi.vec());
            return evaluate(m.decoder_logits_expr(input("phi", {1, 6}), toks, 1, k), b);
        };
        // Exhaustive over all 8 base sequences and every perturbed position.
        for (int base = 0; base < 8; ++base) {
            std::vector<int64_t> toks = {(base >> 2) & 1, (base >> 1) & 1, base & 1};
            Tensor ref = all_logits(toks);
            for (size_t j = 0; j < toks.size(); ++j) {
                std::vector<int64_t> mod = toks;
                mod[j] = 1 - mod[j];
                Tensor got = all_logits(mod);
                // Positions 0..j (inputs before the changed embedding) agree;
                // the changed input enters at position j+1.
                for (int64_t pos = 0; pos <= static_cast<int64_t>(j); ++pos)
                    for (int64_t t = 0; t < v; ++t)
                        CHECK(ref[pos * v + t] == doctest::Approx(got[pos * v + t]).epsilon(1e-12));
                bool differs = false;
                for (int64_t pos = static_cast<int64_t>(j) + 1; pos < k; ++pos)
                    for (int64_t t = 0; t < v; ++t)
                        if (std::abs(ref[pos * v + t] - got[pos * v + t]) > 1e-9) differs = true;
                CHECK(differs);
            }
        }
    }
}

TEST_CASE("riemann probabilities") {
    std::mt19937_64 rng(4);
    ModelConfig c;
    c.encoder = {2, 1, 4, 3};
    c.head = HeadKind::kRiemann;
    c.bins = 4;
    RegressionModel m(c, rng);
    Tensor phi({3}, {0.2, -0.1, 0.4});

    SUBCASE("zero logits are uniform") {
        zero_params(m);
        Tensor p = m.riemann_probs(phi);
        for (int64_t i = 0; i < 4; ++i) CHECK(p[i] == doctest::Approx(0.25));
    }
    SUBCASE("softmax shift invariance") {
        Tensor p1 = m.riemann_probs(phi);
        Tensor& b = m.params().at("head.b");
        for (int64_t i = 0; i < b.numel(); ++i) b[i] += 3.7;
        Tensor p2 = m.riemann_probs(phi);
        for (int64_t i = 0; i < 4; ++i) CHECK(p1[i] == doctest::Approx(p2[i]).epsilon(1e-12));
    }
    SUBCASE("hand softmax for two bins") {
        ModelConfig c2;
        c2.encoder = {2, 1, 4, 3};
        c2.head = HeadKind::kRiemann;
        c2.bins = 2;
        RegressionModel m2(c2, rng);
        zero_params(m2);
        m2.params().at("head.b") = Tensor({2}, {std::log(3.0), 0.0});
        Tensor p = m2.riemann_probs(phi);
        CHECK(p[0] == doctest::Approx(0.75));
        CHECK(p[1] == doctest::Approx(0.25));
    }
    SUBCASE("probabilities sum to one") {
        Tensor p = m.riemann_probs(phi);
        double s = 0.0;
        for (int64_t i = 0; i < 4; ++i) {
            CHECK(p[i] > 0.0);
            s += p[i];
        }
        CHECK(std::abs(s - 1.0) < 1e-12);
    }
}

TEST_CASE("pointwise predictions") {
    std::mt19937_64 rng(5);
    ModelConfig c;
    c.encoder = {2, 1, 4, 3};
    c.head = HeadKind::kPointwise;
    Tensor phi({3}, {1.0, 2.0, 3.0});

    SUBCASE("zero weights with sigmoid give 0.5") {
        c.sigmoid_output = true;
        RegressionModel m(c, rng);
        zero_params(m);
        CHECK(m.pointwise_predict(phi) == doctest::Approx(0.5));
    }
    SUBCASE("zero weights without sigmoid give 0") {
        c.sigmoid_output = false;
        RegressionModel m(c, rng);
        zero_params(m);
        CHECK(m.pointwise_predict(phi) == 0.0);
    }
    SUBCASE("hand-set weights reproduce the dot product") {
        c.sigmoid_output = false;
        RegressionModel m(c, rng);
        zero_params(m);
        m.params().at("head.w") = Tensor({3, 1}, {0.5, -1.0, 2.0});
        m.params().at("head.b") = Tensor({1}, {0.25});
        CHECK(m.pointwise_predict(phi) == doctest::Approx(0.5 - 2.0 + 6.0 + 0.25));
    }
}

TEST_CASE("mdn parameters") {
    std::mt19937_64 rng(6);
    ModelConfig c;
    c.encoder = {2, 1, 4, 3};
    c.head = HeadKind::kMdn;
    c.mixtures = 2;
    Tensor phi({3}, {0.3, 0.1, -0.2});

    SUBCASE("zero pre-activations: uniform pi, sigma = 1") {
        RegressionModel m(c, rng);
        zero_params(m);
        auto p = m.mdn_params(phi);
        CHECK(p.pi[0] == doctest::Approx(0.5));
        CHECK(p.pi[1] == doctest::Approx(0.5));
        CHECK(p.sigma[0] == doctest::Approx(1.0));
        CHECK(p.mu[0] == 0.0);
    }
    SUBCASE("very negative sigma pre-activation stays strictly positive") {
        RegressionModel m(c, rng);
        zero_params(m);
        m.params().at("head.sigma.b") = Tensor({2}, {-20.0, -20.0});
        auto p = m.mdn_params(phi);
        CHECK(p.sigma[0] > 0.0);
        CHECK(p.sigma[0] == doctest::Approx(std::expm1(-20.0) + 1.0));
    }
    SUBCASE("hand-set parameters reproduce a fixed triple") {
        RegressionModel m(c, rng);
        zero_params(m);
        m.params().at("head.pi.b") = Tensor({2}, {std::log(4.0), 0.0});
        m.params().at("head.mu.b") = Tensor({2}, {-1.0, 2.0});
        m.params().at("head.sigma.b") = Tensor({2}, {1.0, 0.0});
        auto p = m.mdn_params(phi);
        CHECK(p.pi[0] == doctest::Approx(0.8));
        CHECK(p.pi[1] == doctest::Approx(0.2));
        CHECK(p.mu[0] == doctest::Approx(-1.0));
        CHECK(p.mu[1] == doctest::Approx(2.0));
        CHECK(p.sigma[0] == doctest::Approx(2.0));
        CHECK(p.sigma[1] == doctest::Approx(1.0));
    }
}

TEST_CASE("head parameter share is under 10% at benchmark defaults") {
    std::mt19937_64 rng(7);
    ModelConfig c;
    c.encoder = {10, 3, 512, 512};
    c.head = HeadKind::kDecoder;
    c.scheme = std::make_shared<UnnormalizedScheme>(10, 1, 4);
    c.decoder = {1, 1, 32};
    RegressionModel m(c, rng);
    const int64_t total = m.param_count();
    const int64_t enc = m.param_count("enc.");
    const int64_t head = m.param_count("head.");
    CHECK(enc + head == total);
    CHECK(static_cast<double>(head) < 0.10 * static_cast<double>(total));
}

TEST_CASE("all head outputs stay finite over random parameter draws") {
    std::mt19937_64 rng(8);
    std::uniform_real_distribution<double> u(-2.0, 2.0);
    for (int draw = 0; draw < 10000; ++draw) {
        const int which = draw % 4;
        ModelConfig c;
        c.encoder = {2, 1, 3, 4};
        Tensor phi({4}, {u(rng), u(rng), u(rng), u(rng)});
        if (which == 0) {
            c.head = HeadKind::kDecoder;
            c.scheme = std::make_shared<NormalizedScheme>(2, 3);
            c.decoder = {1, 1, 4};
            RegressionModel m(c, rng);
            CHECK(m.decoder_logits(phi, {1}).all_finite());
        } else if (which == 1) {
            c.head = HeadKind::kRiemann;
            c.bins = 8;
            RegressionModel m(c, rng);
            CHECK(m.riemann_probs(phi).all_finite());
        } else if (which == 2) {
            c.head = HeadKind::kPointwise;
            RegressionModel m(c, rng);
            CHECK(std::isfinite(m.pointwise_predict(phi)));
        } else {
            c.head = HeadKind::kMdn;
            c.mixtures = 3;
            RegressionModel m(c, rng);
            auto p = m.mdn_params(phi);
            for (double v : p.pi) CHECK(std::isfinite(v));
            for (double v : p.mu) CHECK(std::isfinite(v));
            for (double v : p.sigma) CHECK(v > 0.0);
        }
    }
}

TEST_CASE("checkpoint round trip preserves parameters, config, and stats") {
    std::mt19937_64 rng(9);
    ModelConfig c = tiny_decoder_config();
    c.scheme = std::make_shared<RepetitionScheme>(std::make_shared<UnnormalizedScheme>(4, 1, 2), 2);
    RegressionModel m(c, rng);
    NormalizerStats stats;
    stats.x_mean = {0.5, -1.0};
    stats.x_std = {2.0, 1.0};
    stats.y_min = -3.0;
    stats.y_max = 7.0;
    m.set_normalizer(stats);

    const std::string path = "/tmp/decreg_ckpt_test.bin";
    save_checkpoint(m, path);
    RegressionModel loaded = load_checkpoint(path);
    std::remove(path.c_str());

    CHECK(loaded.config().head == HeadKind::kDecoder);
    const auto* rep = dynamic_cast<const RepetitionScheme*>(loaded.config().scheme.get());
    REQUIRE(rep != nullptr);
    CHECK(rep->repeats() == 2);
    CHECK(loaded.normalizer()->y_max == 7.0);
    for (const auto& name : m.params().names()) {
        const Tensor& a = m.params().at(name);
        const Tensor& b = loaded.params().at(name);
        REQUIRE(a.shape() == b.shape());
        for (int64_t i = 0; i < a.numel(); ++i) CHECK(a[i] == b[i]);
    }
    Tensor phi = m.encode_features(Tensor({2}, {0.1, 0.9}));
    Tensor l1 = m.decoder_logits(phi, {rep->inner()->valid_next({})[0]});
    Tensor l2 = loaded.decoder_logits(phi, {rep->inner()->valid_next({})[0]});
    for (int64_t i = 0; i < l1.numel(); ++i) CHECK(l1[i] == l2[i]);
}
