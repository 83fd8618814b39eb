// SPDX-License-Identifier: Apache-2.0
#include "seqgen/oracle.hpp"

#include <cmath>
#include <fstream>
#include <numeric>
#include <sstream>

#include <json.hpp>

#include "seqgen/error.hpp"
#include "seqgen/logmath.hpp"

namespace seqgen {
namespace {

constexpr double kTableTolerance = 1e-9;

void check_distribution(const std::vector<double>& row, std::size_t size, const std::string& what) {
  if (row.size() != size)
    throw InvalidInput(what + ": expected " + std::to_string(size) + " entries, got " +
                       std::to_string(row.size()));
  double sum = 0.0;
  for (double p : row) {
    if (!(p >= 0.0) || !std::isfinite(p)) throw InvalidInput(what + ": negative or non-finite entry");
    sum += p;
  }
  if (std::abs(sum - 1.0) > kTableTolerance) throw InvalidInput(what + ": does not sum to 1");
}

}  // namespace

OracleModel::OracleModel(Vocabulary vocab, std::size_t num_classes, TransitionTable transitions,
                         std::vector<WeightedPrompt> prompts)
    : vocab_(std::move(vocab)), transitions_(std::move(transitions)), prompts_(std::move(prompts)) {
  const std::size_t v = vocab_.size();
  if (num_classes == 0 || transitions_.size() != num_classes)
    throw InvalidInput("oracle: transition table must have one entry per class");
  for (std::size_t c = 0; c < num_classes; ++c) {
    if (transitions_[c].size() != v)
      throw InvalidInput("oracle: class " + std::to_string(c) + " needs one row slot per token");
    for (TokenId t = 0; t < v; ++t) {
      auto& row = transitions_[c][t];
      if (row.empty()) {
        if (t == vocab_.eos_id()) continue;
        throw InvalidInput("oracle: missing row for class " + std::to_string(c) + ", token '" +
                           vocab_.token(t) + "'");
      }
      check_distribution(row, v, "oracle row (" + std::to_string(c) + ", " + vocab_.token(t) + ")");
    }
    // EOS reachability: backward closure over nonzero edges.
    std::vector<char> reaches(v, 0);
    reaches[vocab_.eos_id()] = 1;
    bool changed = true;
    while (changed) {
      changed = false;
      for (TokenId t = 0; t < v; ++t) {
        if (reaches[t] || transitions_[c][t].empty()) continue;
        for (TokenId u = 0; u < v; ++u) {
          if (transitions_[c][t][u] > 0.0 && reaches[u]) {
            reaches[t] = 1;
            changed = true;
            break;
          }
        }
      }
    }
    for (TokenId t = 0; t < v; ++t)
      if (!reaches[t])
        throw InvalidInput("oracle: EOS unreachable from class " + std::to_string(c) +
                           ", token '" + vocab_.token(t) + "'");
  }
  if (prompts_.empty()) throw InvalidInput("oracle: prompt support is empty");
  double prior_sum = 0.0;
  for (const auto& p : prompts_) {
    if (p.tokens.empty()) throw InvalidInput("oracle: empty prompt");
    check_ids(p.tokens, v);
    for (TokenId t : p.tokens)
      if (t == vocab_.sos_id() || t == vocab_.eos_id())
        throw InvalidInput("oracle: prompts must not contain sentinels");
    if (!(p.prior >= 0.0)) throw InvalidInput("oracle: negative prior");
    prior_sum += p.prior;
  }
  if (std::abs(prior_sum - 1.0) > kTableTolerance) throw InvalidInput("oracle: prior does not sum to 1");
}

std::size_t OracleModel::source_class(std::span<const TokenId> source) const {
  std::uint64_t sum = 0;
  for (TokenId t : source) sum += t;
  return static_cast<std::size_t>(sum % transitions_.size());
}

const std::vector<double>& OracleModel::row(std::size_t cls, TokenId prev) const {
  const auto& r = transitions_.at(cls).at(prev);
  if (r.empty()) throw CompletedSequence("oracle: no transitions out of EOS");
  return r;
}

std::vector<double> OracleModel::next_token_distribution(std::span<const TokenId> source,
                                                         std::span<const TokenId> prefix) const {
  check_prefix(source, prefix);
  return row(source_class(source), prefix.back());
}

std::vector<double> OracleModel::continuation_log_probs(std::span<const TokenId> source,
                                                        std::span<const TokenId> prefix,
                                                        std::span<const TokenId> continuation) const {
  check_prefix(source, prefix);
  check_ids(continuation, vocab_size());
  const std::size_t cls = source_class(source);
  std::vector<double> out;
  out.reserve(continuation.size());
  TokenId prev = prefix.back();
  for (TokenId t : continuation) {
    if (prev == eos_id()) throw CompletedSequence("continuation extends past EOS");
    out.push_back(safe_log(row(cls, prev)[t]));
    prev = t;
  }
  return out;
}

double OracleModel::marginal(std::span<const TokenId> target) const {
  double total = 0.0;
  for (const auto& p : prompts_) {
    double lp = sequence_log_prob(*this, p.tokens, target);
    if (!is_log_zero(lp)) total += p.prior * std::exp(lp);
  }
  return total;
}

double OracleModel::log_marginal(std::span<const TokenId> target) const {
  std::vector<double> terms;
  terms.reserve(prompts_.size());
  for (const auto& p : prompts_)
    terms.push_back(safe_log(p.prior) + sequence_log_prob(*this, p.tokens, target));
  return log_sum_exp(terms);
}

std::size_t OracleModel::sample_prompt(Rng& rng) const {
  std::vector<double> priors;
  priors.reserve(prompts_.size());
  for (const auto& p : prompts_) priors.push_back(p.prior);
  return rng.categorical(priors);
}

TokenSequence OracleModel::sample(std::span<const TokenId> source, Rng& rng,
                                  std::size_t max_len) const {
  if (max_len < 2) throw InvalidInput("oracle sample: max_len must be >= 2");
  const std::size_t cls = source_class(source);
  TokenSequence out{sos_id()};
  while (out.size() < max_len) {
    TokenId next = static_cast<TokenId>(rng.categorical(row(cls, out.back())));
    out.push_back(next);
    if (next == eos_id()) return out;
  }
  out.push_back(eos_id());
  return out;
}

OracleModel OracleModel::from_json_text(const std::string& text) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    throw InvalidInput(std::string("oracle: malformed JSON: ") + e.what());
  }
  try {
    Vocabulary vocab(j.at("vocab").get<std::vector<std::string>>());
    const auto classes = j.at("classes").get<std::size_t>();
    TransitionTable table(classes, std::vector<std::vector<double>>(vocab.size()));
    const auto& tr = j.at("transitions");
    for (std::size_t c = 0; c < classes; ++c) {
      const auto& rows = tr.at(std::to_string(c));
      for (auto it = rows.begin(); it != rows.end(); ++it) {
        if (!vocab.contains(it.key())) throw InvalidInput("oracle: unknown token '" + it.key() + "'");
        table[c][vocab.lookup(it.key())] = it.value().get<std::vector<double>>();
      }
    }
    std::vector<WeightedPrompt> prompts;
    for (const auto& p : j.at("prompts")) {
      WeightedPrompt wp;
      for (const auto& tok : p.at("tokens")) {
        auto s = tok.get<std::string>();
        if (!vocab.contains(s)) throw InvalidInput("oracle: prompt token '" + s + "' not in vocab");
        wp.tokens.push_back(vocab.lookup(s));
      }
      wp.prior = p.at("prior").get<double>();
      prompts.push_back(std::move(wp));
    }
    return OracleModel(std::move(vocab), classes, std::move(table), std::move(prompts));
  } catch (const nlohmann::json::exception& e) {
    throw InvalidInput(std::string("oracle: bad field: ") + e.what());
  }
}

OracleModel OracleModel::load(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw InvalidInput("cannot read " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return from_json_text(ss.str());
}

std::string OracleModel::to_json_text() const {
  nlohmann::ordered_json j;
  j["vocab"] = vocab_.tokens();
  j["classes"] = transitions_.size();
  nlohmann::ordered_json tr = nlohmann::ordered_json::object();
  for (std::size_t c = 0; c < transitions_.size(); ++c) {
    nlohmann::ordered_json rows = nlohmann::ordered_json::object();
    for (TokenId t = 0; t < vocab_.size(); ++t)
      if (!transitions_[c][t].empty()) rows[vocab_.token(t)] = transitions_[c][t];
    tr[std::to_string(c)] = rows;
  }
  j["transitions"] = tr;
  nlohmann::ordered_json prompts = nlohmann::ordered_json::array();
  for (const auto& p : prompts_) {
    std::vector<std::string> toks;
    for (TokenId t : p.tokens) toks.push_back(vocab_.token(t));
    prompts.push_back({{"tokens", toks}, {"prior", p.prior}});
  }
  j["prompts"] = prompts;
  return j.dump(1);
}

}  // namespace seqgen
