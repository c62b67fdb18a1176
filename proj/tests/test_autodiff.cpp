#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <random>

#include "decreg/expr.hpp"
#include "decreg/optim.hpp"

using namespace decreg;

namespace {

Tensor random_tensor(std::vector<int64_t> shape, std::mt19937_64& rng, double lo = -2.0,
                     double hi = 2.0) {
    std::uniform_real_distribution<double> dist(lo, hi);
    Tensor t(std::move(shape));
    for (int64_t i = 0; i < t.numel(); ++i) t[i] = dist(rng);
    return t;
}

// Contract to a scalar through a fixed random weighting so every output entry
// contributes a distinct gradient path.
Expr to_scalar(Expr e, std::mt19937_64& rng) {
    Tensor w = random_tensor(e->shape, rng);
    Expr out = mul(std::move(e), constant(std::move(w)));
    while (!out->shape.empty()) out = reduce_sum(out, 0);
    return out;
}

}  // namespace

TEST_CASE("evaluate basics") {
    Bindings b;
    b["a"] = Tensor({1}, {2.0});
    b["b"] = Tensor({1}, {3.0});
    Expr prod = mul(input("a", {1}), input("b", {1}));
    CHECK(evaluate(prod, b).item() == doctest::Approx(6.0));

    Bindings s;
    s["z"] = Tensor({2}, {0.0, 0.0});
    Tensor sm = evaluate(softmax_last(input("z", {2})), s);
    CHECK(sm[0] == doctest::Approx(0.5));
    CHECK(sm[1] == doctest::Approx(0.5));
}

TEST_CASE("matmul against hand-computed dot products") {
    // A = [[1,2,3],[4,5,6]], B = 3x4 of 1..12
    Bindings b;
    b["A"] = Tensor({2, 3}, {1, 2, 3, 4, 5, 6});
    b["B"] = Tensor({3, 4}, {1, 2, 3, 4, 5, 6, 7, 8, 9, 10, 11, 12});
    Tensor c = evaluate(matmul(input("A", {2, 3}), input("B", {3, 4})), b);
    REQUIRE(c.shape() == std::vector<int64_t>{2, 4});
    const double expect[8] = {38, 44, 50, 56, 83, 98, 113, 128};
    for (int i = 0; i < 8; ++i) CHECK(c[i] == doctest::Approx(expect[i]));
}

TEST_CASE("evaluate is pure") {
    std::mt19937_64 rng(7);
    Bindings b;
    b["x"] = random_tensor({4, 5}, rng);
    Expr e = softmax_last(relu(input("x", {4, 5})));
    Tensor r1 = evaluate(e, b);
    Tensor r2 = evaluate(e, b);
    for (int64_t i = 0; i < r1.numel(); ++i) CHECK(r1[i] == r2[i]);
}

TEST_CASE("evaluate reports unbound and mismatched leaves") {
    Bindings b;
    b["x"] = Tensor({2}, {1.0, 2.0});
    CHECK_THROWS_AS(evaluate(input("y", {2}), b), ConfigError);
    CHECK_THROWS_AS(evaluate(input("x", {3}), b), ConfigError);
    CHECK_THROWS_AS(matmul(input("a", {2, 3}), input("b", {4, 2})), ConfigError);
}

TEST_CASE("gradient of sum of squares") {
    Bindings b;
    b["x"] = Tensor({2}, {1.0, 2.0});
    Expr x = input("x", {2});
    Expr loss = reduce_sum(mul(x, x), 0);
    auto g = gradient(loss, b, {"x"});
    CHECK(g.at("x")[0] == doctest::Approx(2.0));
    CHECK(g.at("x")[1] == doctest::Approx(4.0));
}

TEST_CASE("relu gradient vanishes on the inactive side") {
    Bindings b;
    b["x"] = Tensor({1}, {-1.0});
    auto g = gradient(reduce_sum(relu(input("x", {1})), 0), b, {"x"});
    CHECK(g.at("x")[0] == 0.0);
}

TEST_CASE("gradient requires a scalar root") {
    Bindings b;
    b["x"] = Tensor({2}, {1.0, 2.0});
    CHECK_THROWS_AS(gradient(input("x", {2}), b, {"x"}), UsageError);
}

TEST_CASE("two-layer MLP matches finite differences") {
    std::mt19937_64 rng(11);
    Bindings b;
    b["x"] = random_tensor({3, 4}, rng);
    b["w1"] = random_tensor({4, 5}, rng, -0.8, 0.8);
    b["b1"] = random_tensor({5}, rng, -0.2, 0.2);
    b["w2"] = random_tensor({5, 1}, rng, -0.8, 0.8);
    b["b2"] = random_tensor({1}, rng, -0.2, 0.2);
    Expr h = relu(add(matmul(input("x", {3, 4}), input("w1", {4, 5})), input("b1", {5})));
    Expr out = add(matmul(h, input("w2", {5, 1})), input("b2", {1}));
    Expr loss = reduce_mean(reduce_sum(mul(out, out), 1), 0);
    CHECK(grad_check(loss, b, {"w1", "b1", "w2", "b2"}) < 1e-4);
}

TEST_CASE("grad_check is near-exact for linear maps") {
    Bindings b;
    b["x"] = Tensor({3}, {0.5, -1.25, 2.0});
    Expr lin = reduce_sum(mul(input("x", {3}), constant(Tensor({3}, {3.0, -2.0, 0.5}))), 0);
    CHECK(grad_check(lin, b, {"x"}) < 1e-10);
}

TEST_CASE("softmax cross-entropy composite matches finite differences") {
    std::mt19937_64 rng(13);
    Bindings b;
    b["z"] = random_tensor({4, 6}, rng);
    Expr lsm = log_softmax_last(input("z", {4, 6}));
    Expr picked = gather_last(lsm, {1, 0, 5, 2});
    Expr loss = scale(reduce_mean(picked, 0), -1.0);
    CHECK(grad_check(loss, b, {"z"}) < 1e-4);
}

TEST_CASE("attention block composite matches finite differences") {
    std::mt19937_64 rng(17);
    const int64_t t = 3, d = 4;
    Bindings b;
    b["x"] = random_tensor({2, t, d}, rng, -1.0, 1.0);
    b["wq"] = random_tensor({d, d}, rng, -0.7, 0.7);
    b["wk"] = random_tensor({d, d}, rng, -0.7, 0.7);
    b["wv"] = random_tensor({d, d}, rng, -0.7, 0.7);
    b["g"] = Tensor::full({d}, 1.0);
    b["beta"] = Tensor({d});

    Tensor mask({t, t});
    for (int64_t i = 0; i < t; ++i)
        for (int64_t j = 0; j < t; ++j) mask[i * t + j] = j <= i ? 0.0 : -1e30;

    Expr x = layer_norm(input("x", {2, t, d}), input("g", {d}), input("beta", {d}));
    Expr q = matmul(x, input("wq", {d, d}));
    Expr k = matmul(x, input("wk", {d, d}));
    Expr v = matmul(x, input("wv", {d, d}));
    Expr scores = add(scale(matmul(q, transpose_last2(k)), 1.0 / std::sqrt(double(d))),
                      constant(std::move(mask)));
    Expr out = matmul(softmax_last(scores), v);
    Expr loss = to_scalar(out, rng);
    CHECK(grad_check(loss, b, {"x", "wq", "wk", "wv", "g", "beta"}) < 1e-4);
}

TEST_CASE("every primitive matches finite differences on random inputs") {
    std::mt19937_64 rng(19);
    auto check = [&](Expr e, Bindings b, std::vector<std::string> wrt) {
        Expr loss = to_scalar(std::move(e), rng);
        const double err = grad_check(loss, b, std::move(wrt));
        CHECK(err < 1e-4);
    };

    {
        Bindings b;
        b["a"] = random_tensor({3, 4}, rng);
        b["c"] = random_tensor({4}, rng);
        check(add(input("a", {3, 4}), input("c", {4})), b, {"a", "c"});
        check(mul(input("a", {3, 4}), input("c", {4})), b, {"a", "c"});
        check(scale(input("a", {3, 4}), -1.7), b, {"a"});
        check(add_scalar(input("a", {3, 4}), 0.3), b, {"a"});
    }
    {
        Bindings b;
        b["a"] = random_tensor({2, 3}, rng);
        b["d"] = random_tensor({2, 3}, rng, 0.5, 2.0);  // away from zero
        check(div(input("a", {2, 3}), input("d", {2, 3})), b, {"a", "d"});
    }
    {
        Bindings b;
        b["m"] = random_tensor({2, 3}, rng);
        b["n"] = random_tensor({3, 4}, rng);
        b["p3"] = random_tensor({2, 4, 3}, rng);
        b["q3"] = random_tensor({2, 3, 2}, rng);
        check(matmul(input("m", {2, 3}), input("n", {3, 4})), b, {"m", "n"});
        check(matmul(input("p3", {2, 4, 3}), input("n", {3, 4})), b, {"p3", "n"});
        check(matmul(input("p3", {2, 4, 3}), input("q3", {2, 3, 2})), b, {"p3", "q3"});
        check(transpose_last2(input("p3", {2, 4, 3})), b, {"p3"});
    }
    {
        Bindings b;
        b["x"] = Tensor({6}, {-1.5, -0.6, 0.4, 0.9, 1.7, -1.9});  // away from the relu kink
        check(relu(input("x", {6})), b, {"x"});
        check(sigmoid(input("x", {6})), b, {"x"});
        check(elu(input("x", {6})), b, {"x"});
        check(exp(input("x", {6})), b, {"x"});
    }
    {
        Bindings b;
        b["p"] = random_tensor({5}, rng, 0.2, 2.0);
        check(log(input("p", {5})), b, {"p"});
    }
    {
        Bindings b;
        b["z"] = random_tensor({3, 5}, rng);
        check(softmax_last(input("z", {3, 5})), b, {"z"});
        check(log_softmax_last(input("z", {3, 5})), b, {"z"});
        check(logsumexp_last(input("z", {3, 5})), b, {"z"});
    }
    {
        Bindings b;
        b["x"] = random_tensor({4, 6}, rng);
        b["g"] = random_tensor({6}, rng, 0.5, 1.5);
        b["bb"] = random_tensor({6}, rng, -0.3, 0.3);
        check(layer_norm(input("x", {4, 6}), input("g", {6}), input("bb", {6})), b,
              {"x", "g", "bb"});
    }
    {
        Bindings b;
        b["tbl"] = random_tensor({7, 3}, rng);
        check(embedding(input("tbl", {7, 3}), {2, 0, 6, 2}, {2, 2}), b, {"tbl"});
    }
    {
        Bindings b;
        b["u"] = random_tensor({2, 2, 3}, rng);
        b["v"] = random_tensor({2, 1, 3}, rng);
        check(concat({input("u", {2, 2, 3}), input("v", {2, 1, 3})}, 1), b, {"u", "v"});
        check(slice(input("u", {2, 2, 3}), 2, 1, 2), b, {"u"});
        check(reshape(input("u", {2, 2, 3}), {4, 3}), b, {"u"});
        check(reduce_sum(input("u", {2, 2, 3}), 1), b, {"u"});
        check(reduce_mean(input("u", {2, 2, 3}), 2), b, {"u"});
    }
    {
        Bindings b;
        b["x"] = random_tensor({3, 4}, rng);
        check(gather_last(input("x", {3, 4}), {3, 1, 0}), b, {"x"});
    }
}

TEST_CASE("softmax output is a strict distribution") {
    std::mt19937_64 rng(23);
    for (int trial = 0; trial < 50; ++trial) {
        Bindings b;
        b["z"] = random_tensor({4, 9}, rng, -30.0, 30.0);
        Tensor s = evaluate(softmax_last(input("z", {4, 9})), b);
        for (int64_t r = 0; r < 4; ++r) {
            double sum = 0.0;
            for (int64_t j = 0; j < 9; ++j) {
                CHECK(s[r * 9 + j] > 0.0);
                sum += s[r * 9 + j];
            }
            CHECK(std::abs(sum - 1.0) < 1e-12);
        }
    }
}

TEST_CASE("adam step") {
    SUBCASE("zero gradient leaves parameters unchanged and bumps the step") {
        ParamStore store;
        store.add("w", Tensor({2}, {0.3, -0.7}));
        std::map<std::string, Tensor> grads;
        grads.emplace("w", Tensor({2}));
        adam_step(store, grads, 1e-3);
        CHECK(store.at("w")[0] == 0.3);
        CHECK(store.at("w")[1] == -0.7);
        CHECK(store.state("w").step == 1);
    }
    SUBCASE("first step reproduces the hand-executed recurrence") {
        // g=1: m_hat=1, v_hat=1, update = lr * 1/(1+eps).
        ParamStore store;
        store.add("w", Tensor({1}, {0.5}));
        std::map<std::string, Tensor> grads;
        grads.emplace("w", Tensor({1}, {1.0}));
        const double lr = 1e-3, eps = 1e-8;
        adam_step(store, grads, lr, 0.9, 0.999, eps);
        const double expected = 0.5 - lr * 1.0 / (1.0 + eps);
        CHECK(store.at("w")[0] == doctest::Approx(expected).epsilon(1e-12));
    }
    SUBCASE("identical calls from identical state give identical results") {
        auto run = [] {
            ParamStore store;
            store.add("w", Tensor({3}, {0.1, 0.2, 0.3}));
            std::map<std::string, Tensor> grads;
            grads.emplace("w", Tensor({3}, {0.4, -0.2, 0.05}));
            for (int i = 0; i < 5; ++i) adam_step(store, grads, 5e-4);
            return store.at("w");
        };
        Tensor a = run(), b = run();
        for (int64_t i = 0; i < 3; ++i) CHECK(a[i] == b[i]);
    }
    SUBCASE("missing gradient key is a usage error") {
        ParamStore store;
        store.add("w", Tensor({1}, {0.0}));
        store.add("v", Tensor({1}, {0.0}));
        std::map<std::string, Tensor> grads;
        grads.emplace("w", Tensor({1}, {1.0}));
        CHECK_THROWS_AS(adam_step(store, grads, 1e-3), UsageError);
    }
}
