// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "seqgen/oracle.hpp"
#include "seqgen/rng.hpp"
#include "seqgen/vocabulary.hpp"

namespace seqgen {

struct ThreadMessage {
  std::string id;
  std::optional<std::string> parent_id;
  std::string text;
};

struct Pair {
  std::string prompt;
  std::string response;

  bool operator==(const Pair&) const = default;
};

struct ExtractStats {
  std::size_t malformed_rows = 0;
  std::size_t duplicate_ids = 0;
  std::size_t dangling_parents = 0;
  std::size_t unreachable = 0;  // members of parent cycles
  std::size_t empty_text = 0;
};

/// One JSON object per line: {"id", "parent_id", "text"}. Malformed rows
/// are counted and skipped.
std::vector<ThreadMessage> read_threads(std::istream& in, ExtractStats& stats);

/// One pair per (parent, child) edge, in depth-first order with roots and
/// siblings sorted by id. A dangling parent reference makes the message a
/// root. Pairs whose normalized prompt or response is empty are skipped.
std::vector<Pair> extract_pairs(std::span<const ThreadMessage> messages,
                                ExtractStats* stats = nullptr);

/// Lowercased word tokens; each ASCII punctuation character is its own token.
std::vector<std::string> split_tokens(std::string_view text);

/// Joins tokens with single spaces, except that punctuation tokens attach
/// to the preceding token.
std::string join_tokens(std::span<const std::string> tokens);

/// join_tokens(split_tokens(text)).
std::string normalize_text(std::string_view text);

TokenSequence tokenize(std::string_view text, const Vocabulary& vocab);

/// Sentinels are dropped; unknown ids render as the UNK string.
std::string detokenize(std::span<const TokenId> ids, const Vocabulary& vocab);

/// Number of UTF-8 code points.
std::size_t char_length(std::string_view utf8);

/// Most frequent tokens over prompts and responses (ties lexicographic),
/// after the sentinels <s>, </s>, <unk> at ids 0, 1, 2. max_size >= 4.
Vocabulary build_vocab(std::span<const Pair> pairs, std::size_t max_size);

/// Target sequence SOS ++ tokens ++ EOS.
TokenPair to_token_pair(const Pair& pair, const Vocabulary& vocab);

struct SynthPair {
  Pair text;
  TokenPair tokens;
  std::size_t prompt_index = 0;
};

/// Prompts drawn from the oracle prior, responses by oracle sampling.
std::vector<SynthPair> synth_corpus(const OracleModel& oracle, std::size_t n_pairs, Rng& rng,
                                    std::size_t max_len = 200);

/// {"prompt", "response"} per line.
void write_pairs(std::ostream& out, std::span<const Pair> pairs);
std::vector<Pair> read_pairs(std::istream& in);

}  // namespace seqgen
