#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cfloat>
#include <cmath>
#include <functional>
#include <map>
#include <random>
#include <set>

#include "decreg/numerics.hpp"
#include "decreg/tokenizer.hpp"

using namespace decreg;

namespace {

// Every full sequence accepted by a left-to-right valid_next walk.
std::vector<TokenSeq> walk_all(const Scheme& s) {
    std::vector<TokenSeq> out;
    TokenSeq prefix;
    std::function<void()> rec = [&] {
        if (static_cast<int>(prefix.size()) == s.length()) {
            out.push_back(prefix);
            return;
        }
        for (int t : s.valid_next(prefix)) {
            prefix.push_back(t);
            rec();
            prefix.pop_back();
        }
    };
    rec();
    return out;
}

}  // namespace

TEST_CASE("normalized encode matches the base-2 expansion") {
    NormalizedScheme s(2, 3);
    CHECK(s.encode(0.375) == TokenSeq{0, 1, 1});
    CHECK(s.encode(0.0) == TokenSeq{0, 0, 0});
    CHECK(s.decode({0, 1, 1}, BinMode::kLeft) == doctest::Approx(0.375).epsilon(1e-15));
    CHECK(s.decode({0, 0, 0}, BinMode::kMid) == doctest::Approx(0.0625).epsilon(1e-15));

    NormalizedScheme dec(10, 2);
    CHECK(dec.encode(0.7) == TokenSeq{7, 0});
    CHECK(dec.encode(0.0) == TokenSeq{0, 0});

    CHECK_THROWS_AS(s.encode(1.0), RangeError);
    CHECK_THROWS_AS(s.encode(-0.1), RangeError);
    CHECK_THROWS_AS(s.decode({0, 1, 2}, BinMode::kLeft), CodecError);
}

TEST_CASE("normalized roundtrip bounds over 1e5 uniform draws") {
    std::mt19937_64 rng(101);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    for (auto [base, len] : std::vector<std::pair<int, int>>{{2, 8}, {10, 3}}) {
        NormalizedScheme s(base, len);
        const double width = ipow(double(base), -int64_t(len));
        double worst_left = 0.0, worst_mid = 0.0;
        for (int i = 0; i < 100000; ++i) {
            const double y = u(rng);
            if (y >= 1.0) continue;
            const TokenSeq seq = s.encode(y);
            worst_left = std::max(worst_left, std::abs(y - s.decode(seq, BinMode::kLeft)));
            worst_mid = std::max(worst_mid, std::abs(y - s.decode(seq, BinMode::kMid)));
        }
        CHECK(worst_left <= width);
        CHECK(worst_mid <= width / 2 + 1e-15);
    }
}

TEST_CASE("normalized encode is lexicographically monotone") {
    std::mt19937_64 rng(102);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    NormalizedScheme s(3, 5);
    for (int i = 0; i < 20000; ++i) {
        double a = u(rng), b = u(rng);
        if (a > b) std::swap(a, b);
        CHECK(s.encode(a) <= s.encode(b));
    }
}

TEST_CASE("unnormalized encoding matches the worked example") {
    UnnormalizedScheme s(10, 3, 4);
    const int P = s.plus_token(), M = s.minus_token();
    CHECK(s.encode(1.23456789e-222) == TokenSeq{P, M, 2, 2, 2, 1, 2, 3, 4});
    CHECK(s.render(s.encode(1.23456789e-222)) == "<+><-><2><2><2><1><2><3><4>");
    CHECK(s.decode({P, M, 2, 2, 2, 1, 2, 3, 4}) == doctest::Approx(1.234e-222).epsilon(1e-12));

    // canonical zero
    CHECK(s.encode(0.0) == TokenSeq{P, M, 9, 9, 9, 0, 0, 0, 0});
    CHECK(s.decode(s.encode(0.0)) == 0.0);

    UnnormalizedScheme s2(10, 1, 2);
    const int P2 = s2.plus_token(), M2 = s2.minus_token();
    CHECK(s2.encode(-2.5) == TokenSeq{M2, P2, 0, 2, 5});
    CHECK(s2.decode({M2, P2, 0, 2, 5}) == doctest::Approx(-2.5).epsilon(1e-15));

    CHECK_THROWS_AS(s.encode(std::nan("")), RangeError);
    CHECK_THROWS_AS(s2.decode({M2, P2, 0, 2}), CodecError);
    CHECK_THROWS_AS(s2.decode({M2, P2, 0, 2, 11}), CodecError);
}

TEST_CASE("unnormalized encode is exact at powers of the base") {
    UnnormalizedScheme s(10, 2, 3);
    for (int e = -20; e <= 20; ++e) {
        const double y = std::pow(10.0, e);
        CHECK(s.decode(s.encode(y)) == doctest::Approx(y).epsilon(1e-14));
    }
    UnnormalizedScheme b2(2, 3, 4);
    for (int e = -6; e <= 6; ++e) {
        const double y = ipow(2.0, e);
        CHECK(b2.decode(b2.encode(y)) == y);
    }
}

TEST_CASE("unnormalized saturates out-of-range magnitudes") {
    UnnormalizedScheme s(10, 1, 2);  // representable magnitudes [1e-9, 9.9e9]
    const int P = s.plus_token(), M = s.minus_token();
    CHECK(s.encode(1e15) == TokenSeq{P, P, 9, 9, 9});
    CHECK(s.encode(-1e15) == TokenSeq{M, P, 9, 9, 9});
    CHECK(s.encode(1e-15) == TokenSeq{P, M, 9, 1, 0});
    CHECK(s.decode(s.encode(1e15)) == doctest::Approx(9.9e9));
    CHECK(s.decode(s.encode(1e-15)) == doctest::Approx(1e-9));
}

TEST_CASE("unnormalized roundtrip relative error over 1e5 log-uniform draws") {
    std::mt19937_64 rng(103);
    for (auto [base, e, m] : std::vector<std::array<int, 3>>{{10, 1, 4}, {4, 2, 3}}) {
        UnnormalizedScheme s(base, e, m);
        const double bound = ipow(double(base), -int64_t(m - 1));
        const double max_mag = static_cast<double>(s.max_exponent()) * std::log(double(base));
        std::uniform_real_distribution<double> logmag(-max_mag, max_mag);
        std::uniform_real_distribution<double> u(0.0, 1.0);
        double worst = 0.0;
        for (int i = 0; i < 100000; ++i) {
            double y = std::exp(logmag(rng)) * (u(rng) < 0.5 ? -1.0 : 1.0);
            const double back = s.decode(s.encode(y));
            worst = std::max(worst, std::abs(back - y) / std::abs(y));
        }
        CHECK(worst <= bound + 1e-12);
    }
}

TEST_CASE("valid_next walk is sound and complete for small schemes") {
    std::vector<SchemePtr> schemes = {
        std::make_shared<NormalizedScheme>(2, 6),
        std::make_shared<NormalizedScheme>(4, 3),
        std::make_shared<UnnormalizedScheme>(2, 1, 2),
        std::make_shared<UnnormalizedScheme>(3, 1, 2),
        std::make_shared<UnnormalizedScheme>(4, 1, 2),
        std::make_shared<UnnormalizedScheme>(3, 1, 2, /*dedicated=*/false),
        std::make_shared<HammingScheme>(6),
    };
    for (const auto& s : schemes) {
        auto all = walk_all(*s);
        CHECK(static_cast<double>(all.size()) == s->sequence_count());
        std::set<TokenSeq> accepted(all.begin(), all.end());
        // Every accepted sequence decodes without error.
        for (const auto& seq : all) CHECK_NOTHROW((void)s->decode(seq));
        // Every encoded value is accepted by the walk.
        std::mt19937_64 rng(104);
        std::uniform_real_distribution<double> u(0.0, 1.0);
        std::uniform_real_distribution<double> wide(-50.0, 50.0);
        for (int i = 0; i < 2000; ++i) {
            const bool normalized_domain =
                dynamic_cast<const UnnormalizedScheme*>(s.get()) == nullptr;
            const double y = normalized_domain ? u(rng) : wide(rng);
            if (normalized_domain && y >= 1.0) continue;
            CHECK(accepted.count(s->encode(y)) == 1);
        }
        CHECK(accepted.count(s->encode(0.0)) == 1);
    }
}

TEST_CASE("valid_next matches the enumerate-and-filter oracle") {
    // Oracle: a token extends a prefix iff some accepted full sequence has
    // that prefix. Checked exhaustively against the walk on a small scheme.
    UnnormalizedScheme s(3, 1, 2);
    auto all = walk_all(s);
    std::function<void(const TokenSeq&)> verify = [&](const TokenSeq& prefix) {
        if (static_cast<int>(prefix.size()) == s.length()) return;
        std::set<int> oracle;
        for (const auto& seq : all)
            if (std::equal(prefix.begin(), prefix.end(), seq.begin()))
                oracle.insert(seq[prefix.size()]);
        auto got = s.valid_next(prefix);
        CHECK(std::set<int>(got.begin(), got.end()) == oracle);
        CHECK(!got.empty());
        for (int t : got) {
            TokenSeq next = prefix;
            next.push_back(t);
            verify(next);
        }
    };
    verify({});
}

TEST_CASE("unnormalized valid_next admits zero mantissa only on the canonical path") {
    UnnormalizedScheme s(10, 3, 4);
    const int P = s.plus_token(), M = s.minus_token();
    CHECK(s.valid_next({}) == std::vector<int>{P, M});
    // Canonical-zero prefix: digit 0 is still completable.
    auto v = s.valid_next({P, M, 9, 9, 9});
    CHECK(std::count(v.begin(), v.end(), 0) == 1);
    CHECK(v.size() == 10);
    // Any other exponent forbids a leading mantissa zero.
    auto w = s.valid_next({P, M, 9, 9, 8});
    CHECK(std::count(w.begin(), w.end(), 0) == 0);
    CHECK(w.size() == 9);
    // After the zero path begins, only zeros remain.
    CHECK(s.valid_next({P, M, 9, 9, 9, 0}) == std::vector<int>{0});
    CHECK(s.valid_next({P, M, 9, 9, 9, 0, 0}) == std::vector<int>{0});
    NormalizedScheme n(5, 3);
    CHECK(n.valid_next({4, 4}).size() == 5);
    CHECK_THROWS_AS(n.valid_next({1, 2, 3}), UsageError);
}

TEST_CASE("hamming codec follows the popcount ordering") {
    // Appendix listing for K=3: 000,001,010,100,011,101,110,111.
    const std::vector<TokenSeq> expected = {{0, 0, 0}, {0, 0, 1}, {0, 1, 0}, {1, 0, 0},
                                            {0, 1, 1}, {1, 0, 1}, {1, 1, 0}, {1, 1, 1}};
    for (uint64_t r = 0; r < 8; ++r) CHECK(hamming_rank_to_word(r, 3) == expected[r]);
    CHECK(hamming_rank_to_word(3, 3) == TokenSeq{1, 0, 0});
    CHECK(hamming_rank_to_word(0, 5) == TokenSeq{0, 0, 0, 0, 0});
    CHECK(hamming_rank_to_word(31, 5) == TokenSeq{1, 1, 1, 1, 1});
    CHECK_THROWS_AS(hamming_rank_to_word(8, 3), RangeError);

    for (uint64_t r = 0; r < 256; ++r) CHECK(hamming_word_to_rank(hamming_rank_to_word(r, 8)) == r);
}

TEST_CASE("hamming codec is a bijection for K <= 12") {
    for (int k = 1; k <= 12; ++k) {
        std::set<TokenSeq> words;
        for (uint64_t r = 0; r < (uint64_t{1} << k); ++r) {
            TokenSeq w = hamming_rank_to_word(r, k);
            CHECK(hamming_word_to_rank(w) == r);
            words.insert(std::move(w));
        }
        CHECK(words.size() == (size_t{1} << k));
    }
}

TEST_CASE("hamming scheme is a drop-in binary codec") {
    HammingScheme s(6);
    std::mt19937_64 rng(105);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    for (int i = 0; i < 20000; ++i) {
        const double y = u(rng);
        if (y >= 1.0) continue;
        CHECK(std::abs(s.decode(s.encode(y)) - y) <= 0.5 / 64 + 1e-15);
    }
}

TEST_CASE("majority vote takes the per-position plurality") {
    auto inner = std::make_shared<NormalizedScheme>(5, 2);
    RepetitionScheme rep(inner, 3);
    // repeats (1,2),(1,3),(4,2) -> (1,2)
    CHECK(majority_vote({1, 2, 1, 3, 4, 2}, rep) == TokenSeq{1, 2});

    RepetitionScheme one(inner, 1);
    CHECK(majority_vote({3, 4}, one) == TokenSeq{3, 4});
    CHECK(one.encode(0.5) == inner->encode(0.5));

    CHECK_THROWS_AS(majority_vote({1, 2, 3}, rep), CodecError);
}

TEST_CASE("single corruption never changes an R=3 vote") {
    auto inner = std::make_shared<NormalizedScheme>(3, 3);
    RepetitionScheme rep(inner, 3);
    std::mt19937_64 rng(106);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    for (int trial = 0; trial < 200; ++trial) {
        const double y = u(rng);
        if (y >= 1.0) continue;
        const TokenSeq clean = rep.encode(y);
        const TokenSeq voted = majority_vote(clean, rep);
        for (size_t pos = 0; pos < clean.size(); ++pos) {
            for (int t = 0; t < 3; ++t) {
                TokenSeq corrupted = clean;
                corrupted[pos] = t;
                CHECK(majority_vote(corrupted, rep) == voted);
            }
        }
    }
}

TEST_CASE("repetition valid_next constrains each repeat independently") {
    auto inner = std::make_shared<UnnormalizedScheme>(10, 1, 2);
    RepetitionScheme rep(inner, 2);
    CHECK(rep.length() == 10);
    const int P = inner->plus_token(), M = inner->minus_token();
    // First repeat complete; second starts at the sign again.
    TokenSeq prefix = {P, M, 9, 0, 0};
    CHECK(rep.valid_next(prefix) == std::vector<int>{P, M});
    prefix.push_back(M);
    CHECK(rep.valid_next(prefix) == std::vector<int>{P, M});
    // Decode of two disagreeing repeats majority-votes per position (ties
    // break to the first repeat).
    TokenSeq two = {P, P, 1, 2, 5, P, P, 1, 3, 5};
    CHECK(rep.decode(two) == doctest::Approx(25.0));
}
