// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <string>
#include <vector>

#include "seqgen/oracle.hpp"
#include "seqgen/rng.hpp"
#include "seqgen/vocabulary.hpp"

namespace seqgen::fx {

/// <s>, </s>, <unk>, then stem0, stem1, ...
Vocabulary word_vocab(std::size_t n_words, const std::string& stem = "w");

struct OracleShape {
  std::size_t words = 3;  // non-sentinel tokens
  std::size_t classes = 2;
  std::size_t prompts = 4;
  std::size_t prompt_len = 2;
  bool one_hot = false;  // every row deterministic
  double zero_fraction = 0.0;  // fraction of non-EOS entries forced to zero
  bool uniform_prior = true;
  bool emit_all = false;  // SOS and UNK are also emitted
};

/// Oracle plus an independent copy of its table for brute-force checks.
struct OracleFixture {
  OracleModel model;
  TransitionTable table;
  std::vector<WeightedPrompt> prompts;
};

OracleFixture random_oracle(Rng& rng, const OracleShape& shape);

/// Direct table product for log P(target | source); -inf on a zero factor.
double brute_log_prob(const OracleFixture& f, const TokenSequence& source,
                      const TokenSequence& target);

/// Every SOS ... EOS sequence with 1..max_len predicted tokens and no
/// interior EOS, over tokens [0, vocab_size).
std::vector<TokenSequence> enumerate_targets(std::size_t vocab_size, TokenId sos, TokenId eos,
                                             std::size_t max_len);

struct EntropyRate {
  double nll_per_pair = 0.0;    // E[-log P(y|x)]
  double tokens_per_pair = 0.0;  // E[#predicted tokens]
  double per_token() const { return nll_per_pair / tokens_per_pair; }
};

/// Exact expectations over the prompt prior by solving the absorbing-chain
/// equations h = r + P h for each class.
EntropyRate entropy_rate(const OracleFixture& f);

}  // namespace seqgen::fx
