// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <string>
#include <vector>

#include "seqgen/rng.hpp"
#include "seqgen/sequence_model.hpp"
#include "seqgen/vocabulary.hpp"

namespace seqgen {

struct WeightedPrompt {
  TokenSequence tokens;
  double prior = 0.0;
};

/// Row-stochastic table indexed [class][previous token] -> distribution.
/// An empty row means the state is never entered (only allowed for EOS).
using TransitionTable = std::vector<std::vector<std::vector<double>>>;

/// Exactly enumerable first-order conditional model.
///
/// The source enters only through source_class(), the sum of its token ids
/// modulo the class count. Invariants checked at construction: each stored
/// row and the prompt prior sum to 1 within 1e-9, and EOS is reachable from
/// every (class, token) state.
class OracleModel final : public ConditionalSequenceModel {
 public:
  OracleModel(Vocabulary vocab, std::size_t num_classes, TransitionTable transitions,
              std::vector<WeightedPrompt> prompts);

  static OracleModel load(const std::string& path);
  static OracleModel from_json_text(const std::string& text);
  std::string to_json_text() const;

  std::size_t vocab_size() const override { return vocab_.size(); }
  TokenId sos_id() const override { return vocab_.sos_id(); }
  TokenId eos_id() const override { return vocab_.eos_id(); }

  std::vector<double> next_token_distribution(
      std::span<const TokenId> source, std::span<const TokenId> prefix) const override;
  std::vector<double> continuation_log_probs(
      std::span<const TokenId> source, std::span<const TokenId> prefix,
      std::span<const TokenId> continuation) const override;

  std::size_t source_class(std::span<const TokenId> source) const;
  std::size_t num_classes() const { return transitions_.size(); }
  const Vocabulary& vocab() const { return vocab_; }
  const std::vector<WeightedPrompt>& prompts() const { return prompts_; }
  const std::vector<double>& row(std::size_t cls, TokenId prev) const;

  /// sum over the prompt support of prior(x) * P(target | x), by enumeration.
  double marginal(std::span<const TokenId> target) const;
  double log_marginal(std::span<const TokenId> target) const;

  /// Index into prompts() drawn from the prior.
  std::size_t sample_prompt(Rng& rng) const;

  /// Complete sequence drawn stepwise; the max_len-th predicted symbol is a
  /// forced EOS if the walk has not ended by then. max_len >= 2.
  TokenSequence sample(std::span<const TokenId> source, Rng& rng, std::size_t max_len) const;

 private:
  Vocabulary vocab_;
  TransitionTable transitions_;
  std::vector<WeightedPrompt> prompts_;
};

}  // namespace seqgen
