// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <span>
#include <vector>

#include "seqgen/neural_net.hpp"
#include "seqgen/rng.hpp"
#include "seqgen/sequence_model.hpp"

namespace seqgen {

struct GlimpseConfig {
  std::size_t k = 10;  // decoder steps per glimpse
};

/// (encoder input, decoder input, decoder output) for one glimpse.
using GlimpseExample = TrainingExample;

/// Splits a complete target into ceil(N/K) contiguous decoder glimpses.
///
/// Glimpse j covers decoder positions [jK, jK+K): its decoder input is
/// target[jK : jK+K], its output is the same window shifted by one, and its
/// encoder input is source ++ target[1 : jK] ++ EOS. The target's SOS only
/// ever appears as the first decoder input of glimpse 0.
std::vector<GlimpseExample> split_into_glimpses(std::span<const TokenId> source,
                                                std::span<const TokenId> target,
                                                const GlimpseConfig& cfg, Sentinels sentinels);

/// The plain seq2seq example: source ++ EOS -> full target.
GlimpseExample vanilla_example(std::span<const TokenId> source, std::span<const TokenId> target,
                               Sentinels sentinels);

/// One epoch of glimpse examples over every pair, shuffled by rng.
std::vector<GlimpseExample> make_training_stream(std::span<const TokenPair> pairs,
                                                 const GlimpseConfig& cfg, Sentinels sentinels,
                                                 Rng& rng);

/// One epoch of vanilla examples, shuffled identically to make_training_stream.
std::vector<GlimpseExample> make_vanilla_stream(std::span<const TokenPair> pairs,
                                                Sentinels sentinels, Rng& rng);

/// exp(-sum log P / sum predicted tokens) over full sequences. +infinity if
/// any target has probability zero.
double perplexity(const ConditionalSequenceModel& model, std::span<const TokenPair> pairs);

}  // namespace seqgen
