// SPDX-License-Identifier: Apache-2.0
#include "fixtures.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <set>

#include <Eigen/Dense>

namespace seqgen::fx {

Vocabulary word_vocab(std::size_t n_words, const std::string& stem) {
  std::vector<std::string> tokens{"<s>", "</s>", "<unk>"};
  for (std::size_t i = 0; i < n_words; ++i) tokens.push_back(stem + std::to_string(i));
  return Vocabulary(tokens);
}

namespace {

std::vector<double> normalized(std::vector<double> w) {
  double s = std::accumulate(w.begin(), w.end(), 0.0);
  for (double& x : w) x /= s;
  // Push the rounding residue into the largest entry so the sum is exact to ~1 ulp.
  auto it = std::max_element(w.begin(), w.end());
  *it += 1.0 - std::accumulate(w.begin(), w.end(), 0.0);
  return w;
}

}  // namespace

OracleFixture random_oracle(Rng& rng, const OracleShape& shape) {
  Vocabulary vocab = word_vocab(shape.words);
  const std::size_t V = vocab.size();
  const TokenId eos = vocab.eos_id();
  TransitionTable table(shape.classes, std::vector<std::vector<double>>(V));
  for (std::size_t c = 0; c < shape.classes; ++c) {
    // Random rank per word; one-hot rows only step to lower ranks or EOS.
    std::vector<std::size_t> rank(V);
    std::iota(rank.begin(), rank.end(), 0);
    shuffle_in_place<std::size_t>(rank, rng);
    for (TokenId prev = 0; prev < V; ++prev) {
      if (prev == eos) continue;
      std::vector<double> row(V, 0.0);
      const TokenId first = shape.emit_all ? 0 : 3;
      if (shape.one_hot) {
        std::vector<TokenId> allowed{eos};
        for (TokenId w = first; w < V; ++w) {
          if (w == eos) continue;
          const bool free_start = !shape.emit_all && prev < 3;
          if (free_start || rank[w] < rank[prev]) allowed.push_back(w);
        }
        row[allowed[rng.uniform_index(allowed.size())]] = 1.0;
      } else {
        row[eos] = 0.05 + rng.uniform01();
        for (TokenId w = first; w < V; ++w) {
          if (w == eos) continue;
          row[w] = rng.uniform01() < shape.zero_fraction ? 0.0 : 0.05 + rng.uniform01();
        }
        row = normalized(row);
      }
      table[c][prev] = row;
    }
  }
  std::set<TokenSequence> seen;
  std::vector<WeightedPrompt> prompts;
  for (std::size_t attempts = 0; prompts.size() < shape.prompts && attempts < 10000; ++attempts) {
    TokenSequence p;
    for (std::size_t i = 0; i < shape.prompt_len; ++i)
      p.push_back(static_cast<TokenId>(3 + rng.uniform_index(shape.words)));
    if (seen.insert(p).second) prompts.push_back({p, 0.0});
  }
  std::vector<double> prior(prompts.size(), 1.0);
  if (!shape.uniform_prior)
    for (double& x : prior) x = 0.1 + rng.uniform01();
  prior = normalized(prior);
  for (std::size_t i = 0; i < prompts.size(); ++i) prompts[i].prior = prior[i];
  OracleModel model(vocab, shape.classes, table, prompts);
  return OracleFixture{std::move(model), std::move(table), std::move(prompts)};
}

double brute_log_prob(const OracleFixture& f, const TokenSequence& source,
                      const TokenSequence& target) {
  std::size_t sum = 0;
  for (TokenId t : source) sum += t;
  const auto& cls = f.table[sum % f.table.size()];
  double lp = 0.0;
  for (std::size_t i = 1; i < target.size(); ++i) {
    const double p = cls[target[i - 1]][target[i]];
    if (p == 0.0) return -INFINITY;
    lp += std::log(p);
  }
  return lp;
}

std::vector<TokenSequence> enumerate_targets(std::size_t vocab_size, TokenId sos, TokenId eos,
                                             std::size_t max_len) {
  std::vector<TokenSequence> out;
  std::vector<TokenSequence> frontier{{sos}};
  for (std::size_t len = 1; len <= max_len; ++len) {
    std::vector<TokenSequence> next;
    for (const auto& p : frontier) {
      TokenSequence done = p;
      done.push_back(eos);
      out.push_back(done);
      if (len == max_len) continue;
      for (TokenId t = 0; t < vocab_size; ++t) {
        if (t == eos) continue;
        TokenSequence q = p;
        q.push_back(t);
        next.push_back(std::move(q));
      }
    }
    frontier = std::move(next);
  }
  return out;
}

EntropyRate entropy_rate(const OracleFixture& f) {
  const std::size_t V = f.table.front().size();
  const TokenId eos = 1;
  const std::size_t C = f.table.size();
  std::vector<double> h(C), len(C);
  for (std::size_t c = 0; c < C; ++c) {
    Eigen::MatrixXd A = Eigen::MatrixXd::Identity(V, V);
    Eigen::VectorXd r_h = Eigen::VectorXd::Zero(V), r_l = Eigen::VectorXd::Zero(V);
    for (std::size_t s = 0; s < V; ++s) {
      if (s == eos) continue;
      for (std::size_t t = 0; t < V; ++t) {
        const double p = f.table[c][s][t];
        if (p > 0.0) r_h[s] -= p * std::log(p);
        if (t != eos) A(s, t) -= p;
      }
      r_l[s] = 1.0;
    }
    Eigen::PartialPivLU<Eigen::MatrixXd> lu(A);
    h[c] = lu.solve(r_h)[0];  // start from SOS (id 0)
    len[c] = lu.solve(r_l)[0];
  }
  EntropyRate er;
  for (const auto& p : f.prompts) {
    std::size_t sum = 0;
    for (TokenId t : p.tokens) sum += t;
    er.nll_per_pair += p.prior * h[sum % C];
    er.tokens_per_pair += p.prior * len[sum % C];
  }
  return er;
}

}  // namespace seqgen::fx
