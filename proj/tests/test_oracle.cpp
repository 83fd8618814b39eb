// SPDX-License-Identifier: Apache-2.0
#include <gtest/gtest.h>

#include <cmath>
#include <map>
#include <numeric>

#include "fixtures.hpp"
#include "seqgen/error.hpp"
#include "seqgen/logmath.hpp"
#include "seqgen/oracle.hpp"

using namespace seqgen;
using fx::OracleShape;

namespace {

OracleModel two_word_oracle(double p_eos_from_sos, std::vector<WeightedPrompt> prompts = {}) {
  auto vocab = fx::word_vocab(2);
  const std::size_t V = vocab.size();
  TransitionTable t(1, std::vector<std::vector<double>>(V));
  for (TokenId prev = 0; prev < V; ++prev) {
    if (prev == 1) continue;
    t[0][prev] = {0, 0.5, 0, 0.25, 0.25};
  }
  t[0][0] = {0, p_eos_from_sos, 0, 1 - p_eos_from_sos, 0};
  if (prompts.empty()) prompts = {{{3}, 1.0}};
  return OracleModel(vocab, 1, t, prompts);
}

}  // namespace

TEST(Oracle, RowsMustSumToOne) {
  auto vocab = fx::word_vocab(1);
  TransitionTable t(1, std::vector<std::vector<double>>(4));
  t[0][0] = {0, 0.5, 0, 0.4};
  t[0][2] = {0, 1, 0, 0};
  t[0][3] = {0, 1, 0, 0};
  EXPECT_THROW(OracleModel(vocab, 1, t, {{{3}, 1.0}}), InvalidInput);
}

TEST(Oracle, PriorMustSumToOne) {
  EXPECT_THROW(two_word_oracle(0.5, {{{3}, 0.5}, {{4}, 0.4}}), InvalidInput);
  EXPECT_NO_THROW(two_word_oracle(0.5, {{{3}, 0.5}, {{4}, 0.5}}));
}

TEST(Oracle, EosMustBeReachable) {
  auto vocab = fx::word_vocab(1);
  TransitionTable t(1, std::vector<std::vector<double>>(4));
  t[0][0] = {0, 0, 0, 1};
  t[0][2] = {0, 1, 0, 0};
  t[0][3] = {0, 0, 0, 1};  // self-loop forever
  EXPECT_THROW(OracleModel(vocab, 1, t, {{{3}, 1.0}}), InvalidInput);
}

TEST(Oracle, PromptsRejectSentinelsAndEmpty) {
  EXPECT_THROW(two_word_oracle(0.5, {{{0, 3}, 1.0}}), InvalidInput);
  EXPECT_THROW(two_word_oracle(0.5, {{{}, 1.0}}), InvalidInput);
}

TEST(Oracle, DistributionReadsTable) {
  auto o = two_word_oracle(0.2);
  auto d = o.next_token_distribution(TokenSequence{3}, TokenSequence{0});
  EXPECT_DOUBLE_EQ(d[1], 0.2);
  EXPECT_DOUBLE_EQ(d[3], 0.8);
  EXPECT_THROW(o.next_token_distribution(TokenSequence{3}, TokenSequence{0, 3, 1}),
               CompletedSequence);
}

TEST(Oracle, SequenceLogProbMatchesHandProduct) {
  auto o = two_word_oracle(0.2);
  // SOS -> w0 (0.8) -> w1 (0.25) -> EOS (0.5)
  EXPECT_NEAR(sequence_log_prob(o, TokenSequence{3}, TokenSequence{0, 3, 4, 1}),
              std::log(0.8 * 0.25 * 0.5), 1e-14);
  EXPECT_TRUE(is_log_zero(sequence_log_prob(o, TokenSequence{3}, TokenSequence{0, 4, 1})));
}

TEST(Oracle, ContinuationOverrideMatchesStepwiseWalk) {
  Rng rng(5);
  for (int trial = 0; trial < 20; ++trial) {
    auto f = fx::random_oracle(rng, OracleShape{4, 3, 5, 2, false, 0.3});
    const auto& x = f.prompts[rng.uniform_index(f.prompts.size())].tokens;
    auto y = f.model.sample(x, rng, 8);
    const TokenSequence prefix{y.front()};
    const TokenSequence cont(y.begin() + 1, y.end());
    auto fast = f.model.continuation_log_probs(x, prefix, cont);
    auto slow = f.model.ConditionalSequenceModel::continuation_log_probs(x, prefix, cont);
    ASSERT_EQ(fast.size(), slow.size());
    for (std::size_t i = 0; i < fast.size(); ++i) EXPECT_EQ(fast[i], slow[i]);
  }
}

TEST(Oracle, LogProbMatchesBruteForceTable) {
  Rng rng(17);
  for (int trial = 0; trial < 20; ++trial) {
    auto f = fx::random_oracle(rng, OracleShape{3, 2, 4, 2, false, 0.3});
    for (const auto& y : fx::enumerate_targets(f.model.vocab_size(), 0, 1, 4)) {
      const auto& x = f.prompts[trial % f.prompts.size()].tokens;
      const double a = sequence_log_prob(f.model, x, y);
      const double b = fx::brute_log_prob(f, x, y);
      if (std::isinf(b))
        EXPECT_TRUE(is_log_zero(a));
      else
        EXPECT_NEAR(a, b, 1e-12);
    }
  }
}

TEST(Oracle, MarginalIsPriorWeightedSum) {
  Rng rng(23);
  auto f = fx::random_oracle(rng, OracleShape{3, 3, 6, 2, false, 0.2, false});
  for (const auto& y : fx::enumerate_targets(f.model.vocab_size(), 0, 1, 3)) {
    double expect = 0.0;
    for (const auto& p : f.prompts) expect += p.prior * std::exp(fx::brute_log_prob(f, p.tokens, y));
    EXPECT_NEAR(f.model.marginal(y), expect, 1e-14);
    if (expect > 0) EXPECT_NEAR(f.model.log_marginal(y), std::log(expect), 1e-12);
  }
}

TEST(Oracle, ProbabilityMassOverEnumerationApproachesOne) {
  // EOS has probability 0.5 at every step, so exactly 2^-12 of the mass lies beyond length 12.
  auto o = two_word_oracle(0.5);
  double total = 0.0;
  for (const auto& y : fx::enumerate_targets(o.vocab_size(), 0, 1, 12))
    total += std::exp(sequence_log_prob(o, TokenSequence{3}, y));
  EXPECT_NEAR(total, 1.0 - std::pow(0.5, 12), 1e-12);
}

TEST(Oracle, JsonRoundTrip) {
  Rng rng(31);
  auto f = fx::random_oracle(rng, OracleShape{4, 2, 3, 2, false, 0.1, false});
  auto text = f.model.to_json_text();
  auto back = OracleModel::from_json_text(text);
  EXPECT_EQ(back.to_json_text(), text);
  for (const auto& y : fx::enumerate_targets(f.model.vocab_size(), 0, 1, 3))
    EXPECT_EQ(back.marginal(y), f.model.marginal(y));
}

TEST(Oracle, MalformedJsonIsInvalidInput) {
  EXPECT_THROW(OracleModel::from_json_text("{"), InvalidInput);
  EXPECT_THROW(OracleModel::from_json_text("{\"vocab\": [\"<s>\"]}"), InvalidInput);
}

TEST(Oracle, SampleFrequenciesMatchProbabilities) {
  auto o = two_word_oracle(0.3);
  Rng rng(99);
  const int n = 20000;
  std::map<TokenSequence, int> counts;
  for (int i = 0; i < n; ++i) ++counts[o.sample(TokenSequence{3}, rng, 50)];
  for (const auto& y : fx::enumerate_targets(o.vocab_size(), 0, 1, 3)) {
    const double p = std::exp(sequence_log_prob(o, TokenSequence{3}, y));
    const double sigma = std::sqrt(p * (1 - p) / n);
    EXPECT_NEAR(counts[y] / double(n), p, 4 * sigma + 1e-12);
  }
}

TEST(Oracle, SampleForcesEosAtMaxLen) {
  auto o = two_word_oracle(0.0);
  Rng rng(1);
  for (int i = 0; i < 200; ++i) {
    auto y = o.sample(TokenSequence{3}, rng, 2);
    ASSERT_LE(y.size(), 3u);
    EXPECT_EQ(y.back(), 1u);
    EXPECT_TRUE(is_complete(y, 0, 1));
  }
  EXPECT_THROW(o.sample(TokenSequence{3}, rng, 1), InvalidInput);
}

TEST(Oracle, SamplePromptFollowsPrior) {
  auto o = two_word_oracle(0.5, {{{3}, 0.2}, {{4}, 0.8}});
  Rng rng(4);
  int first = 0;
  const int n = 10000;
  for (int i = 0; i < n; ++i) first += o.sample_prompt(rng) == 0;
  EXPECT_NEAR(first / double(n), 0.2, 3 * std::sqrt(0.16 / n));
}

TEST(Oracle, SourceClassIsTokenSumModulo) {
  Rng rng(2);
  auto f = fx::random_oracle(rng, OracleShape{3, 3, 4});
  EXPECT_EQ(f.model.source_class(TokenSequence{3, 4}), 7u % 3u);
  EXPECT_EQ(f.model.source_class(TokenSequence{}), 0u);
}
