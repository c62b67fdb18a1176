#pragma once

#include <cstdint>
#include <memory>
#include <string>
#include <vector>

#include "decreg/errors.hpp"

namespace decreg {

using TokenSeq = std::vector<int>;

enum class BinMode { kLeft, kMid };

// A fixed-length bidirectional codec between reals and token sequences.
// Schemes are immutable; every operation is pure.
class Scheme {
  public:
    virtual ~Scheme() = default;

    virtual int length() const = 0;
    virtual int vocab_size() const = 0;
    virtual TokenSeq encode(double y) const = 0;
    virtual double decode(const TokenSeq& seq) const = 0;

    // Exactly the tokens that extend `prefix` to some valid full sequence.
    virtual std::vector<int> valid_next(const TokenSeq& prefix) const = 0;

    virtual std::string token_name(int id) const = 0;

    // Debug rendering: "<+><-><2><2>...".
    std::string render(const TokenSeq& seq) const;

    // Count of full sequences accepted by the valid_next walk, saturating at cap.
    virtual double sequence_count(double cap = 1e18) const = 0;
};

using SchemePtr = std::shared_ptr<const Scheme>;

// Base-B expansion of y in [0,1) truncated to K digits.
class NormalizedScheme : public Scheme {
  public:
    NormalizedScheme(int base, int digits);
    int base() const { return base_; }
    int digits() const { return digits_; }

    int length() const override { return digits_; }
    int vocab_size() const override { return base_; }
    TokenSeq encode(double y) const override;
    double decode(const TokenSeq& seq) const override { return decode(seq, BinMode::kMid); }
    double decode(const TokenSeq& seq, BinMode mode) const;
    std::vector<int> valid_next(const TokenSeq& prefix) const override;
    std::string token_name(int id) const override;
    double sequence_count(double cap = 1e18) const override;

    // Index of y's bin among base^digits uniform bins of [0,1).
    int64_t bin_index(double y) const;

  private:
    int base_;
    int digits_;
    double scale_;  // base^digits
};

// Sign / exponent-sign / exponent-digits / mantissa-digits generalization of
// floating point. With dedicated sign tokens the vocabulary is the B digits
// plus '+' (id B) and '-' (id B+1); in reuse mode digit 0 stands for '+' and
// digit 1 for '-'.
class UnnormalizedScheme : public Scheme {
  public:
    UnnormalizedScheme(int base, int exp_digits, int mantissa_digits, bool dedicated_signs = true);
    int base() const { return base_; }
    int exp_digits() const { return exp_digits_; }
    int mantissa_digits() const { return mant_digits_; }
    bool dedicated_signs() const { return dedicated_; }
    int plus_token() const { return dedicated_ ? base_ : 0; }
    int minus_token() const { return dedicated_ ? base_ + 1 : 1; }
    int64_t max_exponent() const { return max_exp_; }

    int length() const override { return 2 + exp_digits_ + mant_digits_; }
    int vocab_size() const override { return dedicated_ ? base_ + 2 : base_; }
    TokenSeq encode(double y) const override;
    double decode(const TokenSeq& seq) const override;
    std::vector<int> valid_next(const TokenSeq& prefix) const override;
    std::string token_name(int id) const override;
    double sequence_count(double cap = 1e18) const override;

    // floor(log_B |y|) clamped to the representable exponent range.
    int64_t exponent_of(double y) const;

  private:
    bool is_canonical_zero_prefix(const TokenSeq& prefix, int upto) const;
    int base_;
    int exp_digits_;
    int mant_digits_;
    bool dedicated_;
    int64_t max_exp_;  // base^exp_digits - 1
};

// Binary codec whose rank<->word map is ordered by (popcount, value);
// rank r stands for the bin [r/2^K, (r+1)/2^K).
class HammingScheme : public Scheme {
  public:
    explicit HammingScheme(int bits);
    int bits() const { return bits_; }

    int length() const override { return bits_; }
    int vocab_size() const override { return 2; }
    TokenSeq encode(double y) const override;
    double decode(const TokenSeq& seq) const override { return decode(seq, BinMode::kMid); }
    double decode(const TokenSeq& seq, BinMode mode) const;
    std::vector<int> valid_next(const TokenSeq& prefix) const override;
    std::string token_name(int id) const override;
    double sequence_count(double cap = 1e18) const override;

  private:
    int bits_;
};

// Inner scheme repeated R times; decoding majority-votes per position.
class RepetitionScheme : public Scheme {
  public:
    RepetitionScheme(SchemePtr inner, int repeats);
    const SchemePtr& inner() const { return inner_; }
    int repeats() const { return repeats_; }

    int length() const override { return repeats_ * inner_->length(); }
    int vocab_size() const override { return inner_->vocab_size(); }
    TokenSeq encode(double y) const override;
    double decode(const TokenSeq& seq) const override;
    std::vector<int> valid_next(const TokenSeq& prefix) const override;
    std::string token_name(int id) const override { return inner_->token_name(id); }
    double sequence_count(double cap = 1e18) const override;

  private:
    SchemePtr inner_;
    int repeats_;
};

// Position-wise plurality over the R repeats; ties go to the earliest repeat.
TokenSeq majority_vote(const TokenSeq& seq, const RepetitionScheme& scheme);

// Rank <-> word bijection under (popcount, numeric value) ordering.
TokenSeq hamming_rank_to_word(uint64_t rank, int bits);
uint64_t hamming_word_to_rank(const TokenSeq& word);

}  // namespace decreg
