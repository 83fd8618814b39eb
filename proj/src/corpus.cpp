// SPDX-License-Identifier: Apache-2.0
#include "seqgen/corpus.hpp"

#include <algorithm>
#include <istream>
#include <map>
#include <ostream>
#include <unordered_map>

#include <json.hpp>

#include "seqgen/error.hpp"

namespace seqgen {
namespace {

bool is_space(unsigned char c) { return c == ' ' || (c >= '\t' && c <= '\r'); }
bool is_punct(unsigned char c) { return c < 128 && std::ispunct(c); }
char lower(unsigned char c) { return c < 128 ? static_cast<char>(std::tolower(c)) : static_cast<char>(c); }

}  // namespace

std::vector<ThreadMessage> read_threads(std::istream& in, ExtractStats& stats) {
  std::vector<ThreadMessage> out;
  std::string line;
  while (std::getline(in, line)) {
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      auto j = nlohmann::json::parse(line);
      ThreadMessage m;
      m.id = j.at("id").get<std::string>();
      if (j.contains("parent_id") && !j["parent_id"].is_null())
        m.parent_id = j["parent_id"].get<std::string>();
      m.text = j.at("text").get<std::string>();
      out.push_back(std::move(m));
    } catch (const nlohmann::json::exception&) {
      ++stats.malformed_rows;
    }
  }
  return out;
}

std::vector<Pair> extract_pairs(std::span<const ThreadMessage> messages, ExtractStats* stats) {
  ExtractStats local;
  ExtractStats& st = stats ? *stats : local;

  // First occurrence of an id wins.
  std::map<std::string, const ThreadMessage*> by_id;
  for (const auto& m : messages)
    if (!by_id.emplace(m.id, &m).second) ++st.duplicate_ids;

  // std::map keeps roots and sibling lists in id order.
  std::map<std::string, std::vector<const ThreadMessage*>> children;
  std::vector<const ThreadMessage*> roots;
  for (const auto& [id, m] : by_id) {
    if (m->parent_id && by_id.count(*m->parent_id)) {
      children[*m->parent_id].push_back(m);
    } else {
      if (m->parent_id) ++st.dangling_parents;
      roots.push_back(m);
    }
  }

  std::vector<Pair> pairs;
  std::size_t visited = 0;
  std::vector<const ThreadMessage*> stack(roots.rbegin(), roots.rend());
  while (!stack.empty()) {
    const ThreadMessage* m = stack.back();
    stack.pop_back();
    ++visited;
    auto it = children.find(m->id);
    if (it == children.end()) continue;
    const std::string prompt = normalize_text(m->text);
    for (const ThreadMessage* child : it->second) {
      Pair p{prompt, normalize_text(child->text)};
      if (p.prompt.empty() || p.response.empty())
        ++st.empty_text;
      else
        pairs.push_back(std::move(p));
    }
    for (auto c = it->second.rbegin(); c != it->second.rend(); ++c) stack.push_back(*c);
  }
  st.unreachable += by_id.size() - visited;
  return pairs;
}

std::vector<std::string> split_tokens(std::string_view text) {
  std::vector<std::string> out;
  std::string word;
  auto flush = [&] {
    if (!word.empty()) out.push_back(std::move(word));
    word.clear();
  };
  for (unsigned char c : text) {
    if (is_space(c)) {
      flush();
    } else if (is_punct(c)) {
      flush();
      out.emplace_back(1, static_cast<char>(c));
    } else {
      word.push_back(lower(c));
    }
  }
  flush();
  return out;
}

std::string join_tokens(std::span<const std::string> tokens) {
  std::string out;
  for (std::size_t i = 0; i < tokens.size(); ++i) {
    const bool punct = tokens[i].size() == 1 && is_punct(static_cast<unsigned char>(tokens[i][0]));
    if (i > 0 && !punct) out.push_back(' ');
    out += tokens[i];
  }
  return out;
}

std::string normalize_text(std::string_view text) { return join_tokens(split_tokens(text)); }

TokenSequence tokenize(std::string_view text, const Vocabulary& vocab) {
  TokenSequence ids;
  for (const auto& t : split_tokens(text)) ids.push_back(vocab.lookup(t));
  return ids;
}

std::string detokenize(std::span<const TokenId> ids, const Vocabulary& vocab) {
  std::vector<std::string> tokens;
  for (TokenId id : ids) {
    if (id == vocab.sos_id() || id == vocab.eos_id()) continue;
    tokens.push_back(vocab.valid(id) ? vocab.token(id) : std::string(kUnkToken));
  }
  return join_tokens(tokens);
}

std::size_t char_length(std::string_view utf8) {
  std::size_t n = 0;
  for (unsigned char c : utf8)
    if ((c & 0xc0u) != 0x80u) ++n;
  return n;
}

Vocabulary build_vocab(std::span<const Pair> pairs, std::size_t max_size) {
  if (max_size < 4) throw InvalidInput("vocabulary size must be >= 4");
  std::unordered_map<std::string, std::size_t> counts;
  for (const auto& p : pairs) {
    for (auto& t : split_tokens(p.prompt)) ++counts[t];
    for (auto& t : split_tokens(p.response)) ++counts[t];
  }
  std::vector<std::pair<std::string, std::size_t>> ranked(counts.begin(), counts.end());
  std::sort(ranked.begin(), ranked.end(), [](const auto& a, const auto& b) {
    return a.second != b.second ? a.second > b.second : a.first < b.first;
  });
  std::vector<std::string> tokens{std::string(kSosToken), std::string(kEosToken),
                                  std::string(kUnkToken)};
  for (const auto& [tok, count] : ranked) {
    if (tokens.size() >= max_size) break;
    tokens.push_back(tok);
  }
  return Vocabulary(std::move(tokens));
}

TokenPair to_token_pair(const Pair& pair, const Vocabulary& vocab) {
  TokenPair tp;
  tp.source = tokenize(pair.prompt, vocab);
  tp.target.push_back(vocab.sos_id());
  for (TokenId t : tokenize(pair.response, vocab)) tp.target.push_back(t);
  tp.target.push_back(vocab.eos_id());
  return tp;
}

std::vector<SynthPair> synth_corpus(const OracleModel& oracle, std::size_t n_pairs, Rng& rng,
                                    std::size_t max_len) {
  if (n_pairs == 0) throw InvalidInput("synth_corpus: n_pairs must be >= 1");
  std::vector<SynthPair> out;
  out.reserve(n_pairs);
  for (std::size_t i = 0; i < n_pairs; ++i) {
    SynthPair sp;
    sp.prompt_index = oracle.sample_prompt(rng);
    sp.tokens.source = oracle.prompts()[sp.prompt_index].tokens;
    sp.tokens.target = oracle.sample(sp.tokens.source, rng, max_len);
    sp.text.prompt = detokenize(sp.tokens.source, oracle.vocab());
    sp.text.response = detokenize(sp.tokens.target, oracle.vocab());
    out.push_back(std::move(sp));
  }
  return out;
}

void write_pairs(std::ostream& out, std::span<const Pair> pairs) {
  for (const auto& p : pairs) {
    nlohmann::ordered_json j;
    j["prompt"] = p.prompt;
    j["response"] = p.response;
    out << j.dump() << '\n';
  }
}

std::vector<Pair> read_pairs(std::istream& in) {
  std::vector<Pair> out;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      auto j = nlohmann::json::parse(line);
      out.push_back(Pair{j.at("prompt").get<std::string>(), j.at("response").get<std::string>()});
    } catch (const nlohmann::json::exception& e) {
      throw InvalidInput("pairs line " + std::to_string(lineno) + ": " + e.what());
    }
  }
  return out;
}

}  // namespace seqgen
