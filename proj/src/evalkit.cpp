// SPDX-License-Identifier: Apache-2.0
#include "seqgen/evalkit.hpp"

#include <algorithm>
#include <cmath>
#include <ostream>
#include <set>

#include <json.hpp>

#include "seqgen/corpus.hpp"
#include "seqgen/error.hpp"
#include "seqgen/logmath.hpp"

namespace seqgen {

const char* to_string(ScoringScheme s) {
  switch (s) {
    case ScoringScheme::kNoNorm: return "no_norm";
    case ScoringScheme::kMarginalNorm: return "marginal_norm";
    case ScoringScheme::kPromptNorm: return "prompt_norm";
  }
  return "?";
}

ScoringScheme scoring_scheme_from_string(const std::string& s) {
  if (s == "no_norm") return ScoringScheme::kNoNorm;
  if (s == "marginal_norm") return ScoringScheme::kMarginalNorm;
  if (s == "prompt_norm") return ScoringScheme::kPromptNorm;
  throw InvalidInput("unknown scoring scheme: " + s);
}

double score_candidate(ScoringScheme scheme, const ConditionalSequenceModel& model,
                       std::span<const TokenId> prompt, std::span<const TokenId> candidate,
                       std::span<const TokenSequence> phi, const LogMarginalFn& log_marginal) {
  const double lp = sequence_log_prob(model, prompt, candidate);
  switch (scheme) {
    case ScoringScheme::kNoNorm:
      return lp;
    case ScoringScheme::kMarginalNorm:
      if (log_marginal) return log_ratio(lp, log_marginal(candidate));
      return log_ratio(lp, pool_log_marginal(model, phi, candidate));
    case ScoringScheme::kPromptNorm: {
      if (phi.empty()) throw EmptyPool("prompt_norm needs a non-empty prompt set");
      std::vector<double> terms;
      terms.reserve(phi.size());
      for (const auto& x : phi) terms.push_back(sequence_log_prob(model, x, candidate));
      return log_ratio(lp, log_sum_exp(terms));
    }
  }
  return lp;
}

std::vector<RetrievalTrial> make_trials(std::span<const TokenPair> data, std::size_t N,
                                        std::size_t trials, std::uint64_t seed) {
  if (N < 2) throw InvalidInput("N must be >= 2");
  if (data.size() < N)
    throw InsufficientData("need at least " + std::to_string(N) + " pairs, have " +
                           std::to_string(data.size()));
  std::vector<RetrievalTrial> out;
  out.reserve(trials);
  const std::size_t max_attempts = 64 * N + data.size();
  for (std::size_t t = 0; t < trials; ++t) {
    Rng rng(derive_seed(seed, "eval.trial", t));
    const std::size_t i = rng.uniform_index(data.size());
    RetrievalTrial trial{data[i].source, data[i].target, {}};
    std::set<std::size_t> used{i};
    std::size_t attempts = 0;
    while (trial.distractors.size() + 1 < N) {
      if (++attempts > max_attempts)
        throw InsufficientData("cannot find " + std::to_string(N - 1) +
                               " distractors that differ from the true response");
      const std::size_t j = rng.uniform_index(data.size());
      if (used.count(j) || data[j].target == trial.true_response) continue;
      used.insert(j);
      trial.distractors.push_back(data[j].target);
    }
    out.push_back(std::move(trial));
  }
  return out;
}

TrialScorer scheme_scorer(const ConditionalSequenceModel& model, SchemeSpec spec) {
  return [&model, spec = std::move(spec)](const RetrievalTrial& trial, Rng& rng) {
    std::vector<TokenSequence> drawn;
    std::span<const TokenSequence> phi = spec.pool;
    if (spec.scheme == ScoringScheme::kPromptNorm && spec.Q > 0) {
      for (std::size_t k : draw_phi(spec.pool, spec.Q, trial.prompt, rng))
        drawn.push_back(spec.pool[k]);
      phi = drawn;
    }
    std::vector<double> scores;
    scores.reserve(trial.distractors.size() + 1);
    scores.push_back(
        score_candidate(spec.scheme, model, trial.prompt, trial.true_response, phi, spec.log_marginal));
    for (const auto& d : trial.distractors)
      scores.push_back(score_candidate(spec.scheme, model, trial.prompt, d, phi, spec.log_marginal));
    return scores;
  };
}

TrialScorer random_scorer() {
  return [](const RetrievalTrial& trial, Rng& rng) {
    std::vector<double> scores(trial.distractors.size() + 1);
    for (double& s : scores) s = rng.uniform01();
    return scores;
  };
}

bool retrieved(std::span<const double> scores, std::size_t K) {
  std::size_t ahead = 0;
  for (std::size_t j = 1; j < scores.size(); ++j)
    if (scores[j] >= scores[0]) ++ahead;
  return ahead < K;
}

RetrievalResult evaluate_trials(std::span<const RetrievalTrial> trials, std::size_t K,
                                const TrialScorer& scorer, std::uint64_t seed) {
  RetrievalResult r;
  r.trials = trials.size();
  r.K = K;
  if (!trials.empty()) r.N = trials.front().distractors.size() + 1;
  if (K < 1 || (r.N > 0 && K >= r.N)) throw InvalidInput("K must satisfy 1 <= K < N");
  for (std::size_t t = 0; t < trials.size(); ++t) {
    Rng rng(derive_seed(seed, "eval.score", t));
    if (retrieved(scorer(trials[t], rng), K)) ++r.correct;
  }
  if (r.trials > 0) {
    const double n = static_cast<double>(r.trials);
    r.accuracy = static_cast<double>(r.correct) / n;
    r.ci95 = 1.96 * std::sqrt(r.accuracy * (1.0 - r.accuracy) / n);
  }
  return r;
}

RetrievalResult n_choose_k(const ConditionalSequenceModel& model, std::span<const TokenPair> data,
                           std::size_t N, std::size_t K, const SchemeSpec& spec,
                           std::size_t trials, std::uint64_t seed) {
  if (K >= N) throw InvalidInput("K must be < N");
  const auto set = make_trials(data, N, trials, seed);
  return evaluate_trials(set, K, scheme_scorer(model, spec), seed);
}

std::string retrieval_report_json(const std::string& scheme, const RetrievalResult& r) {
  nlohmann::ordered_json j;
  j["scheme"] = scheme;
  j["N"] = r.N;
  j["K"] = r.K;
  j["trials"] = r.trials;
  j["accuracy"] = r.accuracy;
  j["ci95"] = r.ci95;
  return j.dump(2);
}

std::vector<LengthRow> length_stats(std::span<const std::string> responses,
                                    std::span<const std::size_t> thresholds) {
  std::vector<std::size_t> lengths;
  lengths.reserve(responses.size());
  for (const auto& r : responses) lengths.push_back(char_length(r));
  std::vector<LengthRow> rows;
  for (std::size_t th : thresholds) {
    LengthRow row{th, 0, 0.0};
    for (std::size_t len : lengths)
      if (len > th) ++row.count;
    if (!lengths.empty())
      row.fraction = static_cast<double>(row.count) / static_cast<double>(lengths.size());
    rows.push_back(row);
  }
  return rows;
}

void write_length_csv(std::ostream& out, std::span<const LengthRow> rows) {
  out << "threshold,count,fraction\n";
  for (const auto& r : rows) {
    nlohmann::json f = r.fraction;
    out << r.threshold << ',' << r.count << ',' << f.dump() << '\n';
  }
}

double distinct_ngram_ratio(std::span<const std::vector<std::string>> responses, std::size_t n) {
  if (n < 1) throw InvalidInput("n must be >= 1");
  std::set<std::vector<std::string>> distinct;
  std::size_t total = 0;
  for (const auto& r : responses) {
    if (r.size() < n) continue;
    for (std::size_t i = 0; i + n <= r.size(); ++i) {
      distinct.emplace(r.begin() + static_cast<std::ptrdiff_t>(i),
                       r.begin() + static_cast<std::ptrdiff_t>(i + n));
      ++total;
    }
  }
  return total == 0 ? 0.0 : static_cast<double>(distinct.size()) / static_cast<double>(total);
}

}  // namespace seqgen
