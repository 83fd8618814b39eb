// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "seqgen/rng.hpp"
#include "seqgen/sequence_model.hpp"

namespace seqgen {

/// Partial hypothesis. tokens starts with SOS; finished iff it ends in EOS.
struct Beam {
  TokenSequence tokens;
  double logp = 0.0;
  bool finished = false;
};

struct DecodeParams {
  std::size_t B = 2;   // beams
  std::size_t D = 10;  // samples per beam
  std::size_t H = 10;  // segment length
  std::size_t Q = 15;  // normalizing prompts
  double alpha = 0.8;
  std::size_t max_segments = 8;
  std::size_t backoff_threshold_chars = 40;
  std::size_t max_len = 20;  // baseline beam search cap
  std::uint64_t seed = 0;

  /// Throws InvalidInput on out-of-range values.
  void validate() const;
};

struct Hypothesis {
  TokenSequence tokens;  // complete
  double logp = 0.0;
  double score = 0.0;
  bool forced_eos = false;

  bool operator==(const Hypothesis&) const = default;
};

/// logp / |y|^alpha with |y| the number of predicted tokens.
double length_normalized(double logp, std::size_t predicted, double alpha);

/// Deterministic beam search over at most max_len predicted tokens.
///
/// Each step keeps the B best extensions by accumulated logp. Finished
/// beams move to a completed pool; the search stops when the pool holds B
/// hypotheses or max_len is reached. Beams still open at max_len get a
/// forced EOS and rank after every naturally finished hypothesis.
std::vector<Hypothesis> beam_search(const ConditionalSequenceModel& model,
                                    std::span<const TokenId> source, std::size_t B,
                                    std::size_t max_len, std::optional<double> alpha = {});

/// Repeatedly appends the argmax token; EOS is forced at max_len.
TokenSequence greedy_decode(const ConditionalSequenceModel& model,
                            std::span<const TokenId> source, std::size_t max_len);

/// Two-step sampling. Per beam, D tokens are drawn i.i.d. from its next-token
/// distribution and deduplicated; then B of the pooled extensions are drawn
/// without replacement from the softmax of their accumulated logp.
std::vector<Beam> stochastic_beam_step(std::span<const Beam> beams,
                                       const ConditionalSequenceModel& model,
                                       std::span<const TokenId> source, std::size_t D,
                                       std::size_t B, Rng& rng);

struct ScoredSegment {
  TokenSequence segment;
  double logp = 0.0;  // log P(segment | source, prefix)
  double score = 0.0;  // S
  bool flagged = false;  // denominator was zero
};

/// Up to B distinct segments of at most H tokens continuing `prefix`.
std::vector<ScoredSegment> generate_segment_candidates(const ConditionalSequenceModel& model,
                                                       std::span<const TokenId> source,
                                                       std::span<const TokenId> prefix,
                                                       const DecodeParams& params, Rng& rng);

/// Indices of min(Q, eligible) pool entries drawn without replacement,
/// skipping entries equal to `source`. Throws EmptyPool if none is eligible.
std::vector<std::size_t> draw_phi(std::span<const TokenSequence> pool, std::size_t Q,
                                  std::span<const TokenId> source, Rng& rng);

struct SegmentScore {
  double score = 0.0;
  double log_numerator = 0.0;
  double log_denominator = 0.0;
  bool flagged = false;
};

/// S = P(segment | x, prefix) / sum_{x' in phi} P(segment | x', prefix),
/// evaluated in log space. A zero denominator gives S = 0 and sets flagged.
SegmentScore score_segment(const ConditionalSequenceModel& model,
                           std::span<const TokenId> segment, std::span<const TokenId> source,
                           std::span<const TokenId> prefix, std::span<const TokenSequence> phi);

struct TraceCandidate {
  TokenSequence tokens;
  double logp = 0.0;
  double score = 0.0;
  bool flagged = false;
};

struct TraceRound {
  std::size_t round = 0;
  std::vector<TraceCandidate> candidates;
  std::size_t chosen_index = 0;
  std::vector<std::size_t> phi_indices;
};

struct SegmentDecodeResult {
  TokenSequence tokens;  // complete
  std::vector<TraceRound> trace;
  bool forced_eos = false;
};

/// Segment-by-segment decoding. Each round generates B candidate segments,
/// scores them against one prompt set drawn for the whole call, and keeps
/// the highest S (ties: higher logp, then smaller token sequence). Stops on
/// an EOS-terminated segment, or forces EOS after max_segments rounds.
SegmentDecodeResult segment_decode(const ConditionalSequenceModel& model,
                                   std::span<const TokenId> source,
                                   std::span<const TokenSequence> pool,
                                   const DecodeParams& params, Rng& rng);

using LogMarginalFn = std::function<double(std::span<const TokenId>)>;

/// log of the mean of P(target | x') over the pool.
double pool_log_marginal(const ConditionalSequenceModel& model,
                         std::span<const TokenSequence> pool, std::span<const TokenId> target);

struct RankedCandidate {
  TokenSequence tokens;
  double score = 0.0;  // log P(y|x) - log P(y)
};

/// Stable descending sort by log P(y|x) - log P(y).
std::vector<RankedCandidate> rerank_by_marginal(const ConditionalSequenceModel& model,
                                                std::span<const TokenSequence> candidates,
                                                std::span<const TokenId> source,
                                                const LogMarginalFn& log_marginal);

/// Pool-mean estimate of P(y). Throws EmptyPool on an empty pool.
std::vector<RankedCandidate> rerank_by_marginal(const ConditionalSequenceModel& model,
                                                std::span<const TokenSequence> candidates,
                                                std::span<const TokenId> source,
                                                std::span<const TokenSequence> pool);

enum class Provenance { kBaseline, kSegmentModel };
const char* to_string(Provenance p);

struct BackoffChoice {
  std::string text;
  Provenance provenance = Provenance::kBaseline;
};

/// The baseline reply if it is shorter than threshold_chars code points,
/// otherwise ours.
BackoffChoice backoff_respond(const std::string& baseline, const std::string& ours,
                              std::size_t threshold_chars);

}  // namespace seqgen
