// SPDX-License-Identifier: Apache-2.0
#include "seqgen/glimpse.hpp"

#include <cmath>
#include <limits>

#include "seqgen/error.hpp"
#include "seqgen/logmath.hpp"

namespace seqgen {
namespace {

void check_pair(std::span<const TokenId> source, std::span<const TokenId> target,
                Sentinels sentinels) {
  if (source.empty()) throw DimensionMismatch("glimpse: empty source");
  if (target.size() < 2) throw EmptyTarget("glimpse: target has no predicted symbols");
  if (!is_complete(target, sentinels.sos, sentinels.eos))
    throw DimensionMismatch("glimpse: target must be SOS ... EOS");
}

template <typename Example>
void shuffle_examples(std::vector<Example>& items, Rng& rng) {
  shuffle_in_place(std::span<Example>(items), rng);
}

}  // namespace

std::vector<GlimpseExample> split_into_glimpses(std::span<const TokenId> source,
                                                std::span<const TokenId> target,
                                                const GlimpseConfig& cfg, Sentinels sentinels) {
  if (cfg.k == 0) throw InvalidInput("glimpse length K must be >= 1");
  check_pair(source, target, sentinels);
  const std::size_t n = target.size() - 1;
  std::vector<GlimpseExample> out;
  out.reserve((n + cfg.k - 1) / cfg.k);
  for (std::size_t start = 0; start < n; start += cfg.k) {
    const std::size_t end = std::min(start + cfg.k, n);
    GlimpseExample ex;
    ex.encoder_input = assemble_encoder_input(source, target, start, sentinels.eos);
    ex.decoder_input.assign(target.begin() + static_cast<std::ptrdiff_t>(start),
                            target.begin() + static_cast<std::ptrdiff_t>(end));
    ex.decoder_output.assign(target.begin() + static_cast<std::ptrdiff_t>(start + 1),
                             target.begin() + static_cast<std::ptrdiff_t>(end + 1));
    out.push_back(std::move(ex));
  }
  return out;
}

GlimpseExample vanilla_example(std::span<const TokenId> source, std::span<const TokenId> target,
                               Sentinels sentinels) {
  check_pair(source, target, sentinels);
  GlimpseExample ex;
  ex.encoder_input.assign(source.begin(), source.end());
  ex.encoder_input.push_back(sentinels.eos);
  ex.decoder_input.assign(target.begin(), target.end() - 1);
  ex.decoder_output.assign(target.begin() + 1, target.end());
  return ex;
}

std::vector<GlimpseExample> make_training_stream(std::span<const TokenPair> pairs,
                                                 const GlimpseConfig& cfg, Sentinels sentinels,
                                                 Rng& rng) {
  std::vector<GlimpseExample> stream;
  for (const auto& p : pairs) {
    auto glimpses = split_into_glimpses(p.source, p.target, cfg, sentinels);
    for (auto& g : glimpses) stream.push_back(std::move(g));
  }
  shuffle_examples(stream, rng);
  return stream;
}

std::vector<GlimpseExample> make_vanilla_stream(std::span<const TokenPair> pairs,
                                                Sentinels sentinels, Rng& rng) {
  std::vector<GlimpseExample> stream;
  stream.reserve(pairs.size());
  for (const auto& p : pairs) stream.push_back(vanilla_example(p.source, p.target, sentinels));
  shuffle_examples(stream, rng);
  return stream;
}

double perplexity(const ConditionalSequenceModel& model, std::span<const TokenPair> pairs) {
  long double total_log_prob = 0.0L;
  std::size_t tokens = 0;
  for (const auto& p : pairs) {
    const double lp = sequence_log_prob(model, p.source, p.target);
    if (is_log_zero(lp)) return std::numeric_limits<double>::infinity();
    total_log_prob += lp;
    tokens += p.target.size() - 1;
  }
  if (tokens == 0) throw EmptyTarget("perplexity: no predicted tokens");
  return std::exp(static_cast<double>(-total_log_prob / static_cast<long double>(tokens)));
}

}  // namespace seqgen
