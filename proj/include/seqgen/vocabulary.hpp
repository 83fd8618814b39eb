// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

namespace seqgen {

using TokenId = std::uint32_t;

/// Sequence of vocabulary ids. Complete targets are SOS ... EOS; sources
/// carry no sentinels.
using TokenSequence = std::vector<TokenId>;

inline constexpr std::string_view kSosToken = "<s>";
inline constexpr std::string_view kEosToken = "</s>";
inline constexpr std::string_view kUnkToken = "<unk>";

class Vocabulary {
 public:
  /// Sentinels are looked up by their reserved strings, which must be present.
  explicit Vocabulary(std::vector<std::string> tokens);

  std::size_t size() const { return tokens_.size(); }
  TokenId sos_id() const { return sos_; }
  TokenId eos_id() const { return eos_; }
  TokenId unk_id() const { return unk_; }

  const std::string& token(TokenId id) const;
  /// Out-of-vocabulary strings map to unk_id().
  TokenId lookup(std::string_view token) const;
  bool contains(std::string_view token) const;
  const std::vector<std::string>& tokens() const { return tokens_; }

  bool valid(TokenId id) const { return id < tokens_.size(); }

  /// One token per line; line number is the id.
  void save(const std::string& path) const;
  static Vocabulary load(const std::string& path);

  bool operator==(const Vocabulary& other) const { return tokens_ == other.tokens_; }

 private:
  std::vector<std::string> tokens_;
  std::unordered_map<std::string, TokenId> index_;
  TokenId sos_ = 0;
  TokenId eos_ = 0;
  TokenId unk_ = 0;
};

/// Throws DimensionMismatch if any id is outside the vocabulary.
void check_ids(std::span<const TokenId> ids, std::size_t vocab_size);

/// True when seq is SOS ... EOS with no interior EOS.
bool is_complete(std::span<const TokenId> seq, TokenId sos, TokenId eos);

}  // namespace seqgen

namespace seqgen {

/// Tokenized (source, target) pair; target is complete.
struct TokenPair {
  TokenSequence source;
  TokenSequence target;

  bool operator==(const TokenPair&) const = default;
};

struct Sentinels {
  TokenId sos = 0;
  TokenId eos = 1;
};

}  // namespace seqgen
