// SPDX-License-Identifier: Apache-2.0
#include "seqgen/sequence_model.hpp"

#include <numeric>

#include "seqgen/error.hpp"
#include "seqgen/logmath.hpp"

namespace seqgen {

void ConditionalSequenceModel::check_prefix(std::span<const TokenId> source,
                                            std::span<const TokenId> prefix) const {
  check_ids(source, vocab_size());
  check_ids(prefix, vocab_size());
  if (prefix.empty() || prefix.front() != sos_id())
    throw DimensionMismatch("prefix must begin with the start-of-sequence token");
  if (prefix.back() == eos_id()) throw CompletedSequence("prefix already ends in EOS");
  for (TokenId t : prefix)
    if (t == eos_id()) throw DimensionMismatch("EOS inside prefix");
}

std::vector<double> ConditionalSequenceModel::continuation_log_probs(
    std::span<const TokenId> source, std::span<const TokenId> prefix,
    std::span<const TokenId> continuation) const {
  check_ids(continuation, vocab_size());
  std::vector<TokenId> running(prefix.begin(), prefix.end());
  std::vector<double> out;
  out.reserve(continuation.size());
  for (TokenId t : continuation) {
    auto dist = next_token_distribution(source, running);
    out.push_back(safe_log(dist[t]));
    running.push_back(t);
  }
  return out;
}

double continuation_log_prob(const ConditionalSequenceModel& model,
                             std::span<const TokenId> source,
                             std::span<const TokenId> prefix,
                             std::span<const TokenId> continuation) {
  double total = 0.0;
  for (double lp : model.continuation_log_probs(source, prefix, continuation)) {
    if (is_log_zero(lp)) return kLogZero;
    total += lp;
  }
  return total;
}

double sequence_log_prob(const ConditionalSequenceModel& model,
                         std::span<const TokenId> source,
                         std::span<const TokenId> target) {
  check_ids(target, model.vocab_size());
  if (target.empty() || target.front() != model.sos_id())
    throw DimensionMismatch("target must begin with the start-of-sequence token");
  if (target.size() < 2 || target.back() != model.eos_id())
    throw DimensionMismatch("target must end with the end-of-sequence token");
  return continuation_log_prob(model, source, target.first(1), target.subspan(1));
}

std::vector<double> UniformModel::next_token_distribution(
    std::span<const TokenId> source, std::span<const TokenId> prefix) const {
  check_prefix(source, prefix);
  return std::vector<double>(size_, 1.0 / static_cast<double>(size_));
}

}  // namespace seqgen
