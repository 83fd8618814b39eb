// SPDX-License-Identifier: Apache-2.0
#include "seqgen/decode.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "seqgen/corpus.hpp"
#include "seqgen/error.hpp"
#include "seqgen/logmath.hpp"

namespace seqgen {
namespace {

constexpr double kNormTolerance = 1e-6;

void check_distribution(const std::vector<double>& probs, std::size_t vocab_size) {
  if (probs.size() != vocab_size)
    throw DegenerateDistribution("distribution size differs from vocabulary size");
  double total = 0.0;
  for (double p : probs) {
    if (!std::isfinite(p) || p < 0.0)
      throw DegenerateDistribution("distribution has a negative or non-finite entry");
    total += p;
  }
  if (std::abs(total - 1.0) > kNormTolerance)
    throw DegenerateDistribution("distribution does not sum to one");
}

bool better_beam(const Beam& a, const Beam& b) {
  if (a.logp != b.logp) return a.logp > b.logp;
  return a.tokens < b.tokens;
}

}  // namespace

void DecodeParams::validate() const {
  if (B < 1 || D < 1 || H < 1 || Q < 1) throw InvalidInput("B, D, H and Q must be >= 1");
  if (!(alpha >= 0.0 && alpha <= 1.0)) throw InvalidInput("alpha must lie in [0, 1]");
  if (max_segments < 1) throw InvalidInput("max_segments must be >= 1");
  if (max_len < 2) throw InvalidInput("max_len must be >= 2");
}

double length_normalized(double logp, std::size_t predicted, double alpha) {
  if (predicted == 0) return logp;
  return logp / std::pow(static_cast<double>(predicted), alpha);
}

std::vector<Hypothesis> beam_search(const ConditionalSequenceModel& model,
                                    std::span<const TokenId> source, std::size_t B,
                                    std::size_t max_len, std::optional<double> alpha) {
  if (B < 1) throw InvalidInput("beam_search: B must be >= 1");
  if (max_len < 2) throw InvalidInput("beam_search: max_len must be >= 2");
  const TokenId eos = model.eos_id();
  const std::size_t V = model.vocab_size();

  std::vector<Beam> active{Beam{{model.sos_id()}, 0.0, false}};
  std::vector<Hypothesis> done;
  std::vector<Hypothesis> forced;

  for (std::size_t step = 1; step <= max_len && !active.empty() && done.size() < B; ++step) {
    const bool last = step == max_len;
    std::vector<Beam> exts;
    for (const Beam& beam : active) {
      auto probs = model.next_token_distribution(source, beam.tokens);
      check_distribution(probs, V);
      if (last && probs[eos] <= 0.0) {
        TokenSequence t = beam.tokens;
        t.push_back(eos);
        forced.push_back(Hypothesis{std::move(t), beam.logp, 0.0, true});
        continue;
      }
      for (TokenId tok = 0; tok < V; ++tok) {
        if (probs[tok] <= 0.0 || (last && tok != eos)) continue;
        Beam ext{beam.tokens, beam.logp + std::log(probs[tok]), tok == eos};
        ext.tokens.push_back(tok);
        exts.push_back(std::move(ext));
      }
    }
    std::sort(exts.begin(), exts.end(), better_beam);
    if (exts.size() > B) exts.resize(B);
    active.clear();
    for (Beam& b : exts) {
      if (b.finished)
        done.push_back(Hypothesis{std::move(b.tokens), b.logp, 0.0, false});
      else
        active.push_back(std::move(b));
    }
  }

  auto score_all = [&](std::vector<Hypothesis>& hs) {
    for (auto& h : hs)
      h.score = alpha ? length_normalized(h.logp, h.tokens.size() - 1, *alpha) : h.logp;
    std::sort(hs.begin(), hs.end(), [](const Hypothesis& a, const Hypothesis& b) {
      if (a.score != b.score) return a.score > b.score;
      return a.tokens < b.tokens;
    });
  };
  score_all(done);
  score_all(forced);
  done.insert(done.end(), std::make_move_iterator(forced.begin()),
              std::make_move_iterator(forced.end()));
  return done;
}

TokenSequence greedy_decode(const ConditionalSequenceModel& model,
                            std::span<const TokenId> source, std::size_t max_len) {
  if (max_len < 2) throw InvalidInput("greedy_decode: max_len must be >= 2");
  const TokenId eos = model.eos_id();
  TokenSequence out{model.sos_id()};
  for (std::size_t step = 1; step <= max_len; ++step) {
    if (step == max_len) {
      out.push_back(eos);
      break;
    }
    auto probs = model.next_token_distribution(source, out);
    check_distribution(probs, model.vocab_size());
    const auto best = static_cast<TokenId>(
        std::max_element(probs.begin(), probs.end()) - probs.begin());
    out.push_back(best);
    if (best == eos) break;
  }
  return out;
}

std::vector<Beam> stochastic_beam_step(std::span<const Beam> beams,
                                       const ConditionalSequenceModel& model,
                                       std::span<const TokenId> source, std::size_t D,
                                       std::size_t B, Rng& rng) {
  if (D < 1 || B < 1) throw InvalidInput("stochastic_beam_step: D and B must be >= 1");
  if (beams.empty() || beams.size() > B)
    throw InvalidInput("stochastic_beam_step: need between 1 and B beams");
  const std::size_t V = model.vocab_size();

  std::vector<Beam> exts;
  std::vector<char> seen(V);
  for (const Beam& beam : beams) {
    if (beam.finished) throw InvalidInput("stochastic_beam_step: finished beam");
    auto probs = model.next_token_distribution(source, beam.tokens);
    check_distribution(probs, V);
    std::fill(seen.begin(), seen.end(), 0);
    for (std::size_t d = 0; d < D; ++d) seen[rng.categorical(probs)] = 1;
    for (TokenId tok = 0; tok < V; ++tok) {
      if (!seen[tok]) continue;
      Beam ext{beam.tokens, beam.logp + std::log(probs[tok]), tok == model.eos_id()};
      ext.tokens.push_back(tok);
      exts.push_back(std::move(ext));
    }
  }

  double top = kLogZero;
  for (const Beam& e : exts) top = std::max(top, e.logp);
  std::vector<double> weights(exts.size());
  for (std::size_t i = 0; i < exts.size(); ++i) weights[i] = std::exp(exts[i].logp - top);

  // Extensions whose softmax weight underflows to zero are never selected.
  std::vector<Beam> out;
  const std::size_t take = std::min(B, exts.size());
  for (std::size_t k = 0; k < take; ++k) {
    if (!(std::accumulate(weights.begin(), weights.end(), 0.0) > 0.0)) break;
    const std::size_t i = rng.categorical(weights);
    out.push_back(exts[i]);
    weights[i] = 0.0;
  }
  return out;
}

std::vector<ScoredSegment> generate_segment_candidates(const ConditionalSequenceModel& model,
                                                       std::span<const TokenId> source,
                                                       std::span<const TokenId> prefix,
                                                       const DecodeParams& params, Rng& rng) {
  model.check_prefix(source, prefix);
  std::vector<Beam> active{Beam{TokenSequence(prefix.begin(), prefix.end()), 0.0, false}};
  std::vector<Beam> done;
  while (!active.empty() && done.size() < params.B) {
    const std::size_t slots = params.B - done.size();
    auto next = stochastic_beam_step(active, model, source, params.D, slots, rng);
    active.clear();
    for (Beam& b : next) {
      if (b.finished || b.tokens.size() - prefix.size() >= params.H)
        done.push_back(std::move(b));
      else
        active.push_back(std::move(b));
    }
  }
  std::vector<ScoredSegment> out;
  out.reserve(done.size());
  for (Beam& b : done) {
    ScoredSegment s;
    s.segment.assign(b.tokens.begin() + static_cast<std::ptrdiff_t>(prefix.size()),
                     b.tokens.end());
    s.logp = b.logp;
    out.push_back(std::move(s));
  }
  return out;
}

std::vector<std::size_t> draw_phi(std::span<const TokenSequence> pool, std::size_t Q,
                                  std::span<const TokenId> source, Rng& rng) {
  std::vector<std::size_t> eligible;
  for (std::size_t i = 0; i < pool.size(); ++i)
    if (!std::equal(pool[i].begin(), pool[i].end(), source.begin(), source.end()))
      eligible.push_back(i);
  if (eligible.empty()) throw EmptyPool("no prompt in the pool differs from the source");
  const std::size_t n = std::min(Q, eligible.size());
  // Partial Fisher-Yates.
  for (std::size_t i = 0; i < n; ++i) {
    const std::size_t j = i + rng.uniform_index(eligible.size() - i);
    std::swap(eligible[i], eligible[j]);
  }
  eligible.resize(n);
  return eligible;
}

SegmentScore score_segment(const ConditionalSequenceModel& model,
                           std::span<const TokenId> segment, std::span<const TokenId> source,
                           std::span<const TokenId> prefix, std::span<const TokenSequence> phi) {
  if (phi.empty()) throw EmptyPool("score_segment: empty prompt set");
  SegmentScore s;
  s.log_numerator = continuation_log_prob(model, source, prefix, segment);
  std::vector<double> terms;
  terms.reserve(phi.size());
  for (const auto& x : phi) terms.push_back(continuation_log_prob(model, x, prefix, segment));
  s.log_denominator = log_sum_exp(terms);
  if (is_log_zero(s.log_denominator)) {
    s.flagged = true;
    s.score = 0.0;
  } else {
    s.score = std::exp(s.log_numerator - s.log_denominator);
  }
  return s;
}

SegmentDecodeResult segment_decode(const ConditionalSequenceModel& model,
                                   std::span<const TokenId> source,
                                   std::span<const TokenSequence> pool,
                                   const DecodeParams& params, Rng& rng) {
  params.validate();
  const auto phi_indices = draw_phi(pool, params.Q, source, rng);
  std::vector<TokenSequence> phi;
  for (std::size_t i : phi_indices) phi.push_back(pool[i]);

  SegmentDecodeResult result;
  TokenSequence prefix{model.sos_id()};
  for (std::size_t round = 0; round < params.max_segments; ++round) {
    auto cands = generate_segment_candidates(model, source, prefix, params, rng);
    TraceRound tr;
    tr.round = round;
    tr.phi_indices = phi_indices;
    for (auto& c : cands) {
      auto sc = score_segment(model, c.segment, source, prefix, phi);
      c.score = sc.score;
      c.flagged = sc.flagged;
      tr.candidates.push_back(TraceCandidate{c.segment, c.logp, c.score, c.flagged});
    }
    std::size_t best = 0;
    for (std::size_t i = 1; i < cands.size(); ++i) {
      const auto& a = cands[i];
      const auto& b = cands[best];
      if (a.score != b.score ? a.score > b.score
                             : a.logp != b.logp ? a.logp > b.logp : a.segment < b.segment)
        best = i;
    }
    tr.chosen_index = best;
    result.trace.push_back(std::move(tr));
    const auto& chosen = cands[best].segment;
    prefix.insert(prefix.end(), chosen.begin(), chosen.end());
    if (prefix.back() == model.eos_id()) {
      result.tokens = std::move(prefix);
      return result;
    }
  }
  prefix.push_back(model.eos_id());
  result.tokens = std::move(prefix);
  result.forced_eos = true;
  return result;
}

double pool_log_marginal(const ConditionalSequenceModel& model,
                         std::span<const TokenSequence> pool, std::span<const TokenId> target) {
  if (pool.empty()) throw EmptyPool("pool_log_marginal: empty pool");
  std::vector<double> terms;
  terms.reserve(pool.size());
  for (const auto& x : pool) terms.push_back(sequence_log_prob(model, x, target));
  return log_sum_exp(terms) - std::log(static_cast<double>(pool.size()));
}

std::vector<RankedCandidate> rerank_by_marginal(const ConditionalSequenceModel& model,
                                                std::span<const TokenSequence> candidates,
                                                std::span<const TokenId> source,
                                                const LogMarginalFn& log_marginal) {
  std::vector<RankedCandidate> out;
  out.reserve(candidates.size());
  for (const auto& y : candidates)
    out.push_back({y, log_ratio(sequence_log_prob(model, source, y), log_marginal(y))});
  std::stable_sort(out.begin(), out.end(), [](const RankedCandidate& a, const RankedCandidate& b) {
    return a.score > b.score;
  });
  return out;
}

std::vector<RankedCandidate> rerank_by_marginal(const ConditionalSequenceModel& model,
                                                std::span<const TokenSequence> candidates,
                                                std::span<const TokenId> source,
                                                std::span<const TokenSequence> pool) {
  if (pool.empty()) throw EmptyPool("rerank_by_marginal: empty pool");
  return rerank_by_marginal(model, candidates, source, [&](std::span<const TokenId> y) {
    return pool_log_marginal(model, pool, y);
  });
}

const char* to_string(Provenance p) {
  return p == Provenance::kBaseline ? "baseline" : "segment_model";
}

BackoffChoice backoff_respond(const std::string& baseline, const std::string& ours,
                              std::size_t threshold_chars) {
  if (char_length(baseline) < threshold_chars) return {baseline, Provenance::kBaseline};
  return {ours, Provenance::kSegmentModel};
}

}  // namespace seqgen
