// SPDX-License-Identifier: Apache-2.0
#include "seqgen/vocabulary.hpp"

#include <fstream>

#include "seqgen/error.hpp"

namespace seqgen {

Vocabulary::Vocabulary(std::vector<std::string> tokens) : tokens_(std::move(tokens)) {
  index_.reserve(tokens_.size());
  for (std::size_t i = 0; i < tokens_.size(); ++i) {
    auto [it, inserted] = index_.emplace(tokens_[i], static_cast<TokenId>(i));
    if (!inserted) throw InvalidInput("vocabulary: duplicate token '" + tokens_[i] + "'");
  }
  auto find = [this](std::string_view s) {
    auto it = index_.find(std::string(s));
    if (it == index_.end())
      throw InvalidInput("vocabulary: missing sentinel " + std::string(s));
    return it->second;
  };
  sos_ = find(kSosToken);
  eos_ = find(kEosToken);
  unk_ = find(kUnkToken);
}

const std::string& Vocabulary::token(TokenId id) const {
  if (!valid(id)) throw DimensionMismatch("token id " + std::to_string(id) + " out of range");
  return tokens_[id];
}

TokenId Vocabulary::lookup(std::string_view token) const {
  auto it = index_.find(std::string(token));
  return it == index_.end() ? unk_ : it->second;
}

bool Vocabulary::contains(std::string_view token) const {
  return index_.count(std::string(token)) > 0;
}

void Vocabulary::save(const std::string& path) const {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw InvalidInput("cannot write " + path);
  for (const auto& t : tokens_) out << t << '\n';
}

Vocabulary Vocabulary::load(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw InvalidInput("cannot read " + path);
  std::vector<std::string> tokens;
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    tokens.push_back(line);
  }
  return Vocabulary(std::move(tokens));
}

void check_ids(std::span<const TokenId> ids, std::size_t vocab_size) {
  for (TokenId id : ids)
    if (id >= vocab_size)
      throw DimensionMismatch("token id " + std::to_string(id) + " outside vocabulary of size " +
                              std::to_string(vocab_size));
}

bool is_complete(std::span<const TokenId> seq, TokenId sos, TokenId eos) {
  if (seq.size() < 2 || seq.front() != sos || seq.back() != eos) return false;
  for (std::size_t i = 1; i + 1 < seq.size(); ++i)
    if (seq[i] == eos) return false;
  return true;
}

}  // namespace seqgen
