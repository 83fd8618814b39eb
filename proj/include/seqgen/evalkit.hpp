// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <functional>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

#include "seqgen/decode.hpp"
#include "seqgen/rng.hpp"
#include "seqgen/sequence_model.hpp"

namespace seqgen {

enum class ScoringScheme { kNoNorm, kMarginalNorm, kPromptNorm };
const char* to_string(ScoringScheme s);
ScoringScheme scoring_scheme_from_string(const std::string& s);

/// Scheme plus its parameters. For marginal_norm the pool mean estimates
/// P(y) unless `log_marginal` is set (e.g. the exact oracle marginal). For
/// prompt_norm, Q > 0 draws Q prompts per trial from the pool, excluding
/// the trial prompt; Q = 0 uses the whole pool.
struct SchemeSpec {
  ScoringScheme scheme = ScoringScheme::kNoNorm;
  std::vector<TokenSequence> pool;
  std::size_t Q = 0;
  LogMarginalFn log_marginal;
};

/// no_norm: log P(y|x). marginal_norm: log P(y|x) - log P(y).
/// prompt_norm: log P(y|x) - log sum_{x' in phi} P(y|x').
double score_candidate(ScoringScheme scheme, const ConditionalSequenceModel& model,
                       std::span<const TokenId> prompt, std::span<const TokenId> candidate,
                       std::span<const TokenSequence> phi, const LogMarginalFn& log_marginal = {});

struct RetrievalTrial {
  TokenSequence prompt;
  TokenSequence true_response;
  std::vector<TokenSequence> distractors;  // N - 1, none equal to true_response
};

/// Trial t draws its pair and distractors from an Rng derived from (seed, t).
/// Throws InsufficientData when the dataset cannot supply N distinct responses.
std::vector<RetrievalTrial> make_trials(std::span<const TokenPair> data, std::size_t N,
                                        std::size_t trials, std::uint64_t seed);

/// Scores for [true_response, distractors...] of one trial.
using TrialScorer = std::function<std::vector<double>(const RetrievalTrial&, Rng&)>;

/// Holds a reference to `model`, which must outlive the scorer.
TrialScorer scheme_scorer(const ConditionalSequenceModel& model, SchemeSpec spec);
/// Independent uniform scores; a chance-level control.
TrialScorer random_scorer();

/// True response counts as retrieved when fewer than K distractors score
/// >= it, so ties go against it.
bool retrieved(std::span<const double> scores, std::size_t K);

struct RetrievalResult {
  std::size_t N = 0;
  std::size_t K = 0;
  std::size_t trials = 0;
  std::size_t correct = 0;
  double accuracy = 0.0;
  double ci95 = 0.0;  // normal-approximation half width
};

/// Per-trial scorer randomness comes from an Rng derived from (seed, t).
RetrievalResult evaluate_trials(std::span<const RetrievalTrial> trials, std::size_t K,
                                const TrialScorer& scorer, std::uint64_t seed);

RetrievalResult n_choose_k(const ConditionalSequenceModel& model, std::span<const TokenPair> data,
                           std::size_t N, std::size_t K, const SchemeSpec& spec,
                           std::size_t trials, std::uint64_t seed);

/// {"scheme","N","K","trials","accuracy","ci95"}.
std::string retrieval_report_json(const std::string& scheme, const RetrievalResult& r);

struct LengthRow {
  std::size_t threshold = 0;
  std::size_t count = 0;  // responses strictly longer than threshold
  double fraction = 0.0;
};

/// Lengths are counted in UTF-8 code points.
std::vector<LengthRow> length_stats(std::span<const std::string> responses,
                                    std::span<const std::size_t> thresholds);
/// CSV with header `threshold,count,fraction`.
void write_length_csv(std::ostream& out, std::span<const LengthRow> rows);

/// Distinct n-grams over total n-grams across all responses; 0 when there
/// are no n-grams.
double distinct_ngram_ratio(std::span<const std::vector<std::string>> responses, std::size_t n);

}  // namespace seqgen
