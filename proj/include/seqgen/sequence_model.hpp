// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <span>
#include <vector>

#include "seqgen/vocabulary.hpp"

namespace seqgen {

/// Next-token distribution P(y_i | y[0:i-1]; x) shared by every model.
///
/// Implementations are immutable after construction; all methods are const
/// and safe to call concurrently. Models never sample: decoders own the
/// randomness.
class ConditionalSequenceModel {
 public:
  virtual ~ConditionalSequenceModel() = default;

  virtual std::size_t vocab_size() const = 0;
  virtual TokenId sos_id() const = 0;
  virtual TokenId eos_id() const = 0;

  /// Probability vector of length vocab_size(). prefix must start with SOS
  /// and must not end in EOS.
  virtual std::vector<double> next_token_distribution(
      std::span<const TokenId> source, std::span<const TokenId> prefix) const = 0;

  /// Natural-log probability of each token of `continuation` given
  /// (source, prefix). The default walks next_token_distribution.
  virtual std::vector<double> continuation_log_probs(
      std::span<const TokenId> source, std::span<const TokenId> prefix,
      std::span<const TokenId> continuation) const;

  /// Throws CompletedSequence / DimensionMismatch on a bad prefix.
  void check_prefix(std::span<const TokenId> source,
                    std::span<const TokenId> prefix) const;
};

/// sum_i log P(y_i | y[0:i-1]; x) for a complete target. kLogZero if any
/// factor is exactly zero.
double sequence_log_prob(const ConditionalSequenceModel& model,
                         std::span<const TokenId> source,
                         std::span<const TokenId> target);

/// log P(continuation | source, prefix).
double continuation_log_prob(const ConditionalSequenceModel& model,
                             std::span<const TokenId> source,
                             std::span<const TokenId> prefix,
                             std::span<const TokenId> continuation);

/// Uniform over the vocabulary regardless of input. Used as a control.
class UniformModel final : public ConditionalSequenceModel {
 public:
  UniformModel(std::size_t vocab_size, TokenId sos, TokenId eos)
      : size_(vocab_size), sos_(sos), eos_(eos) {}

  std::size_t vocab_size() const override { return size_; }
  TokenId sos_id() const override { return sos_; }
  TokenId eos_id() const override { return eos_; }
  std::vector<double> next_token_distribution(
      std::span<const TokenId> source, std::span<const TokenId> prefix) const override;

 private:
  std::size_t size_;
  TokenId sos_;
  TokenId eos_;
};

}  // namespace seqgen
