#include "decreg/tokenizer.hpp"

#include <algorithm>
#include <cfloat>
#include <cmath>
#include <numeric>

#include "decreg/numerics.hpp"

namespace decreg {

namespace {

constexpr double kMaxExactIndex = 9007199254740992.0;  // 2^53

std::vector<int> all_digits(int base) {
    std::vector<int> d(static_cast<size_t>(base));
    std::iota(d.begin(), d.end(), 0);
    return d;
}

uint64_t binom(int n, int k) {
    if (k < 0 || k > n) return 0;
    k = std::min(k, n - k);
    uint64_t r = 1;
    for (int i = 1; i <= k; ++i) r = r * static_cast<uint64_t>(n - k + i) / static_cast<uint64_t>(i);
    return r;
}

}  // namespace

std::string Scheme::render(const TokenSeq& seq) const {
    std::string out;
    for (int t : seq) {
        out += '<';
        out += token_name(t);
        out += '>';
    }
    return out;
}

// ---------------------------------------------------------------------------
// NormalizedScheme
// ---------------------------------------------------------------------------

NormalizedScheme::NormalizedScheme(int base, int digits) : base_(base), digits_(digits) {
    if (base < 2) throw ConfigError("normalized scheme requires base >= 2");
    if (digits < 1) throw ConfigError("normalized scheme requires length >= 1");
    scale_ = ipow(static_cast<double>(base), digits);
    if (scale_ > kMaxExactIndex)
        throw ConfigError("normalized scheme base^length exceeds exact integer range");
}

int64_t NormalizedScheme::bin_index(double y) const {
    if (!(y >= 0.0 && y < 1.0)) throw RangeError("normalized encode requires y in [0,1)");
    double idx = std::floor(y * scale_);
    if (idx >= scale_) idx = scale_ - 1.0;  // guard the rounding edge at y -> 1
    if (idx < 0.0) idx = 0.0;
    return static_cast<int64_t>(idx);
}

TokenSeq NormalizedScheme::encode(double y) const {
    int64_t idx = bin_index(y);
    TokenSeq seq(static_cast<size_t>(digits_));
    for (int i = digits_ - 1; i >= 0; --i) {
        seq[static_cast<size_t>(i)] = static_cast<int>(idx % base_);
        idx /= base_;
    }
    return seq;
}

double NormalizedScheme::decode(const TokenSeq& seq, BinMode mode) const {
    if (static_cast<int>(seq.size()) != digits_)
        throw CodecError("normalized decode: expected " + std::to_string(digits_) + " tokens");
    double idx = 0.0;
    for (size_t i = 0; i < seq.size(); ++i) {
        if (seq[i] < 0 || seq[i] >= base_)
            throw CodecError("normalized decode: invalid token at position " + std::to_string(i));
        idx = idx * base_ + seq[i];
    }
    const double left = idx / scale_;
    return mode == BinMode::kLeft ? left : left + 0.5 / scale_;
}

std::vector<int> NormalizedScheme::valid_next(const TokenSeq& prefix) const {
    if (static_cast<int>(prefix.size()) >= digits_)
        throw UsageError("valid_next: prefix is already a complete sequence");
    for (size_t i = 0; i < prefix.size(); ++i)
        if (prefix[i] < 0 || prefix[i] >= base_)
            throw CodecError("valid_next: invalid token at position " + std::to_string(i));
    return all_digits(base_);
}

std::string NormalizedScheme::token_name(int id) const {
    if (id < 0 || id >= base_) throw CodecError("unknown token id");
    return std::to_string(id);
}

double NormalizedScheme::sequence_count(double cap) const { return std::min(scale_, cap); }

// ---------------------------------------------------------------------------
// UnnormalizedScheme
// ---------------------------------------------------------------------------

UnnormalizedScheme::UnnormalizedScheme(int base, int exp_digits, int mantissa_digits,
                                       bool dedicated_signs)
    : base_(base), exp_digits_(exp_digits), mant_digits_(mantissa_digits), dedicated_(dedicated_signs) {
    if (base < 2) throw ConfigError("unnormalized scheme requires base >= 2");
    if (exp_digits < 1) throw ConfigError("unnormalized scheme requires at least one exponent digit");
    if (mantissa_digits < 1) throw ConfigError("unnormalized scheme requires at least one mantissa digit");
    const double me = ipow(static_cast<double>(base), exp_digits) - 1.0;
    if (me > 9e15) throw ConfigError("unnormalized scheme exponent range too large");
    max_exp_ = static_cast<int64_t>(me);
    if (ipow(static_cast<double>(base), mantissa_digits) > kMaxExactIndex)
        throw ConfigError("unnormalized scheme mantissa too long for exact indexing");
}

int64_t UnnormalizedScheme::exponent_of(double y) const {
    double a = std::abs(y);
    if (a == 0.0) return -max_exp_;
    int64_t e = 0;
    while (a >= base_ && e < max_exp_ + 1) {
        a /= base_;
        ++e;
    }
    while (a < 1.0 && e > -(max_exp_ + 1)) {
        a *= base_;
        --e;
    }
    return std::clamp(e, -max_exp_, max_exp_);
}

TokenSeq UnnormalizedScheme::encode(double y) const {
    if (!std::isfinite(y)) throw RangeError("unnormalized encode requires a finite value");
    const int plus = plus_token(), minus = minus_token();
    TokenSeq seq;
    seq.reserve(static_cast<size_t>(length()));

    int64_t exp_value;    // signed exponent e
    int64_t mant_index;   // mantissa digits as integer in [B^(M-1), B^M - 1], or 0
    int sign = plus;

    if (y == 0.0) {
        exp_value = -max_exp_;
        mant_index = 0;
    } else {
        sign = y < 0.0 ? minus : plus;
        double a = std::abs(y);
        int64_t e = 0;
        while (a >= base_) {
            a /= base_;
            ++e;
            if (e > max_exp_) break;
        }
        while (a < 1.0) {
            a *= base_;
            --e;
            if (e < -max_exp_) break;
        }
        const double mant_scale = ipow(static_cast<double>(base_), mant_digits_ - 1);
        if (e > max_exp_ || (e == max_exp_ && a >= base_)) {
            // overflow: largest representable magnitude
            exp_value = max_exp_;
            mant_index = static_cast<int64_t>(mant_scale) * base_ - 1;
        } else if (e < -max_exp_ || (e == -max_exp_ && a < 1.0)) {
            // underflow: smallest positive magnitude
            exp_value = -max_exp_;
            mant_index = static_cast<int64_t>(mant_scale);
        } else {
            exp_value = e;
            double d = std::floor(a * mant_scale);
            if (d < mant_scale) d = mant_scale;  // rounding guard, keep m1 != 0
            if (d >= mant_scale * base_) {
                // rounding pushed the mantissa to B.000...: carry into the exponent
                if (exp_value < max_exp_) {
                    ++exp_value;
                    d = mant_scale;
                } else {
                    d = mant_scale * base_ - 1;
                }
            }
            mant_index = static_cast<int64_t>(d);
        }
    }

    seq.push_back(sign);
    seq.push_back(exp_value < 0 ? minus : plus);
    int64_t x = std::llabs(exp_value);
    TokenSeq exp_digits(static_cast<size_t>(exp_digits_));
    for (int i = exp_digits_ - 1; i >= 0; --i) {
        exp_digits[static_cast<size_t>(i)] = static_cast<int>(x % base_);
        x /= base_;
    }
    seq.insert(seq.end(), exp_digits.begin(), exp_digits.end());
    TokenSeq mant(static_cast<size_t>(mant_digits_));
    int64_t m = mant_index;
    for (int i = mant_digits_ - 1; i >= 0; --i) {
        mant[static_cast<size_t>(i)] = static_cast<int>(m % base_);
        m /= base_;
    }
    seq.insert(seq.end(), mant.begin(), mant.end());
    return seq;
}

double UnnormalizedScheme::decode(const TokenSeq& seq) const {
    if (static_cast<int>(seq.size()) != length())
        throw CodecError("unnormalized decode: expected " + std::to_string(length()) + " tokens");
    const int plus = plus_token(), minus = minus_token();
    auto check_sign = [&](size_t pos) {
        if (seq[pos] != plus && seq[pos] != minus)
            throw CodecError("unnormalized decode: invalid token at position " + std::to_string(pos));
        return seq[pos] == minus ? -1.0 : 1.0;
    };
    const double sign = check_sign(0);
    const double exp_sign = check_sign(1);
    int64_t x = 0;
    for (int i = 0; i < exp_digits_; ++i) {
        const size_t pos = static_cast<size_t>(2 + i);
        if (seq[pos] < 0 || seq[pos] >= base_)
            throw CodecError("unnormalized decode: invalid token at position " + std::to_string(pos));
        x = x * base_ + seq[pos];
    }
    double mant = 0.0;
    bool mant_zero = true;
    for (int i = 0; i < mant_digits_; ++i) {
        const size_t pos = static_cast<size_t>(2 + exp_digits_ + i);
        if (seq[pos] < 0 || seq[pos] >= base_)
            throw CodecError("unnormalized decode: invalid token at position " + std::to_string(pos));
        if (seq[pos] != 0) mant_zero = false;
        mant += seq[pos] * ipow(static_cast<double>(base_), -static_cast<int64_t>(i));
    }
    if (mant_zero) return 0.0;
    const int64_t e = static_cast<int64_t>(exp_sign) * x;
    double value = mant * ipow(static_cast<double>(base_), e);
    if (std::isinf(value)) value = DBL_MAX;            // beyond double range: saturate
    if (value == 0.0) value = DBL_MIN;                 // underflow of a nonzero mantissa
    return sign * value;
}

bool UnnormalizedScheme::is_canonical_zero_prefix(const TokenSeq& prefix, int upto) const {
    // Canonical zero: <+><-><B-1>...<B-1><0>...<0>.
    for (int i = 0; i < upto && i < static_cast<int>(prefix.size()); ++i) {
        const int t = prefix[static_cast<size_t>(i)];
        if (i == 0 && t != plus_token()) return false;
        if (i == 1 && t != minus_token()) return false;
        if (i >= 2 && i < 2 + exp_digits_ && t != base_ - 1) return false;
        if (i >= 2 + exp_digits_ && t != 0) return false;
    }
    return true;
}

std::vector<int> UnnormalizedScheme::valid_next(const TokenSeq& prefix) const {
    const int pos = static_cast<int>(prefix.size());
    if (pos >= length()) throw UsageError("valid_next: prefix is already a complete sequence");
    // Validate the prefix itself before extending it.
    for (int i = 0; i < pos; ++i) {
        const int t = prefix[static_cast<size_t>(i)];
        const bool sign_pos = i < 2;
        if (sign_pos) {
            if (t != plus_token() && t != minus_token())
                throw CodecError("valid_next: invalid token at position " + std::to_string(i));
        } else if (t < 0 || t >= base_) {
            throw CodecError("valid_next: invalid token at position " + std::to_string(i));
        }
        if (i == 2 + exp_digits_ && t == 0 && !is_canonical_zero_prefix(prefix, i + 1))
            throw CodecError("valid_next: zero leading mantissa digit outside the canonical zero pattern");
        if (i > 2 + exp_digits_ && prefix[static_cast<size_t>(2 + exp_digits_)] == 0 && t != 0)
            throw CodecError("valid_next: canonical zero mantissa must stay zero");
    }

    if (pos < 2) return {plus_token(), minus_token()};
    if (pos < 2 + exp_digits_) return all_digits(base_);
    if (pos == 2 + exp_digits_) {
        std::vector<int> out;
        if (is_canonical_zero_prefix(prefix, pos)) out.push_back(0);
        for (int d = 1; d < base_; ++d) out.push_back(d);
        return out;
    }
    // Later mantissa digits: forced to zero on the canonical-zero path.
    if (prefix[static_cast<size_t>(2 + exp_digits_)] == 0) return {0};
    return all_digits(base_);
}

std::string UnnormalizedScheme::token_name(int id) const {
    if (dedicated_) {
        if (id == base_) return "+";
        if (id == base_ + 1) return "-";
    }
    if (id < 0 || id >= base_) throw CodecError("unknown token id");
    return std::to_string(id);
}

double UnnormalizedScheme::sequence_count(double cap) const {
    // sign x exp-sign x B^E exponents x (B-1) B^(M-1) mantissas, plus one zero
    // pattern (the all-(B-1) negative exponent admits the zero mantissa).
    const double exps = ipow(static_cast<double>(base_), exp_digits_);
    const double mants = (base_ - 1) * ipow(static_cast<double>(base_), mant_digits_ - 1);
    const double total = 4.0 * exps * mants + 1.0;
    return std::min(total, cap);
}

// ---------------------------------------------------------------------------
// HammingScheme
// ---------------------------------------------------------------------------

TokenSeq hamming_rank_to_word(uint64_t rank, int bits) {
    if (bits < 1 || bits > 53) throw ConfigError("hamming word length must be in [1, 53]");
    if (rank >= (uint64_t{1} << bits)) throw RangeError("hamming rank out of range");
    // Find the popcount class.
    int c = 0;
    uint64_t idx = rank;
    while (idx >= binom(bits, c)) {
        idx -= binom(bits, c);
        ++c;
    }
    // idx-th smallest (by numeric value, MSB first) word with popcount c.
    TokenSeq word(static_cast<size_t>(bits), 0);
    int remaining = c;
    for (int i = 0; i < bits; ++i) {
        const int rest = bits - i - 1;
        const uint64_t with_zero = binom(rest, remaining);
        if (idx < with_zero) {
            word[static_cast<size_t>(i)] = 0;
        } else {
            idx -= with_zero;
            word[static_cast<size_t>(i)] = 1;
            --remaining;
        }
    }
    return word;
}

uint64_t hamming_word_to_rank(const TokenSeq& word) {
    const int bits = static_cast<int>(word.size());
    if (bits < 1 || bits > 53) throw ConfigError("hamming word length must be in [1, 53]");
    int c = 0;
    for (size_t i = 0; i < word.size(); ++i) {
        if (word[i] != 0 && word[i] != 1)
            throw CodecError("hamming word: invalid token at position " + std::to_string(i));
        c += word[i];
    }
    uint64_t rank = 0;
    for (int cc = 0; cc < c; ++cc) rank += binom(bits, cc);
    int remaining = c;
    for (int i = 0; i < bits; ++i) {
        const int rest = bits - i - 1;
        if (word[static_cast<size_t>(i)] == 1) {
            rank += binom(rest, remaining);
            --remaining;
        }
    }
    return rank;
}

HammingScheme::HammingScheme(int bits) : bits_(bits) {
    if (bits < 1 || bits > 53) throw ConfigError("hamming scheme requires bits in [1, 53]");
}

TokenSeq HammingScheme::encode(double y) const {
    if (!(y >= 0.0 && y < 1.0)) throw RangeError("hamming encode requires y in [0,1)");
    const double scale = ipow(2.0, bits_);
    double idx = std::floor(y * scale);
    if (idx >= scale) idx = scale - 1.0;
    if (idx < 0.0) idx = 0.0;
    return hamming_rank_to_word(static_cast<uint64_t>(idx), bits_);
}

double HammingScheme::decode(const TokenSeq& seq, BinMode mode) const {
    if (static_cast<int>(seq.size()) != bits_)
        throw CodecError("hamming decode: expected " + std::to_string(bits_) + " tokens");
    const double scale = ipow(2.0, bits_);
    const double left = static_cast<double>(hamming_word_to_rank(seq)) / scale;
    return mode == BinMode::kLeft ? left : left + 0.5 / scale;
}

std::vector<int> HammingScheme::valid_next(const TokenSeq& prefix) const {
    if (static_cast<int>(prefix.size()) >= bits_)
        throw UsageError("valid_next: prefix is already a complete sequence");
    for (size_t i = 0; i < prefix.size(); ++i)
        if (prefix[i] != 0 && prefix[i] != 1)
            throw CodecError("valid_next: invalid token at position " + std::to_string(i));
    return {0, 1};
}

std::string HammingScheme::token_name(int id) const {
    if (id != 0 && id != 1) throw CodecError("unknown token id");
    return std::to_string(id);
}

double HammingScheme::sequence_count(double cap) const { return std::min(ipow(2.0, bits_), cap); }

// ---------------------------------------------------------------------------
// RepetitionScheme
// ---------------------------------------------------------------------------

RepetitionScheme::RepetitionScheme(SchemePtr inner, int repeats)
    : inner_(std::move(inner)), repeats_(repeats) {
    if (!inner_) throw ConfigError("repetition scheme requires an inner scheme");
    if (repeats < 1) throw ConfigError("repetition scheme requires repeats >= 1");
    if (dynamic_cast<const RepetitionScheme*>(inner_.get()))
        throw ConfigError("repetition schemes do not nest");
}

TokenSeq RepetitionScheme::encode(double y) const {
    const TokenSeq one = inner_->encode(y);
    TokenSeq out;
    out.reserve(one.size() * static_cast<size_t>(repeats_));
    for (int r = 0; r < repeats_; ++r) out.insert(out.end(), one.begin(), one.end());
    return out;
}

double RepetitionScheme::decode(const TokenSeq& seq) const {
    return inner_->decode(majority_vote(seq, *this));
}

std::vector<int> RepetitionScheme::valid_next(const TokenSeq& prefix) const {
    if (static_cast<int>(prefix.size()) >= length())
        throw UsageError("valid_next: prefix is already a complete sequence");
    const int l = inner_->length();
    const int seg_start = (static_cast<int>(prefix.size()) / l) * l;
    TokenSeq segment(prefix.begin() + seg_start, prefix.end());
    return inner_->valid_next(segment);
}

double RepetitionScheme::sequence_count(double cap) const {
    double total = 1.0;
    for (int r = 0; r < repeats_; ++r) {
        total *= inner_->sequence_count(cap);
        if (total >= cap) return cap;
    }
    return total;
}

TokenSeq majority_vote(const TokenSeq& seq, const RepetitionScheme& scheme) {
    const int l = scheme.inner()->length();
    const int r = scheme.repeats();
    if (static_cast<int>(seq.size()) != l * r)
        throw CodecError("majority_vote: expected " + std::to_string(l * r) + " tokens");
    TokenSeq out(static_cast<size_t>(l));
    const int vocab = scheme.vocab_size();
    std::vector<int> counts(static_cast<size_t>(vocab));
    for (int k = 0; k < l; ++k) {
        std::fill(counts.begin(), counts.end(), 0);
        for (int rep = 0; rep < r; ++rep) {
            const int t = seq[static_cast<size_t>(rep * l + k)];
            if (t < 0 || t >= vocab)
                throw CodecError("majority_vote: invalid token at position " + std::to_string(rep * l + k));
            ++counts[static_cast<size_t>(t)];
        }
        int best = seq[static_cast<size_t>(k)];  // earliest repeat wins ties
        for (int rep = 0; rep < r; ++rep) {
            const int t = seq[static_cast<size_t>(rep * l + k)];
            if (counts[static_cast<size_t>(t)] > counts[static_cast<size_t>(best)]) best = t;
        }
        out[static_cast<size_t>(k)] = best;
    }
    return out;
}

}  // namespace decreg
