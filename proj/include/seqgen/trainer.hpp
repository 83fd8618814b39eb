// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "seqgen/glimpse.hpp"
#include "seqgen/neural_net.hpp"
#include "seqgen/optimizer.hpp"

namespace seqgen {

enum class OptimizerKind { kSgd, kAdam };

OptimizerKind optimizer_from_string(const std::string& s);

struct TrainOptions {
  std::size_t batch_size = 16;
  OptimizerKind optimizer = OptimizerKind::kAdam;
  double lr = 3e-3;
  double clip_norm = 5.0;  // 0 disables clipping
  std::size_t glimpse_k = 0;  // 0 trains the vanilla (whole-target) model
  std::uint64_t seed = 0;
};

/// Deterministic batch order: epoch e is the training stream shuffled with
/// a stream derived from (seed, e), and step t consumes examples
/// [t*B, (t+1)*B) of the concatenated epochs. Any step can be reproduced
/// without replaying earlier ones.
class BatchSchedule {
 public:
  BatchSchedule(std::vector<TokenPair> pairs, std::size_t glimpse_k, Sentinels sentinels,
                std::size_t batch_size, std::uint64_t seed);

  std::vector<TrainingExample> batch(std::uint64_t step);
  std::size_t epoch_size() const { return epoch_size_; }

 private:
  const std::vector<TrainingExample>& epoch(std::uint64_t e);

  std::vector<TokenPair> pairs_;
  std::size_t glimpse_k_;
  Sentinels sentinels_;
  std::size_t batch_size_;
  std::uint64_t seed_;
  std::size_t epoch_size_ = 0;
  std::uint64_t cached_epoch_ = UINT64_MAX;
  std::vector<TrainingExample> cached_;
};

/// Single-threaded optimizer loop. Parameters and Adam moments are rounded
/// to single precision after every update, which keeps checkpoints lossless.
class Trainer {
 public:
  Trainer(ModelConfig cfg, ParamSet params, BatchSchedule schedule, TrainOptions opts);

  /// One update; returns the pre-update mean batch loss.
  double step();

  void restore(ParamSet params, AdamState state);

  std::uint64_t steps_done() const { return state_.step; }
  const ParamSet& params() const { return params_; }
  const AdamState& optimizer_state() const { return state_; }
  const ModelConfig& config() const { return cfg_; }

 private:
  ModelConfig cfg_;
  ParamSet params_;
  BatchSchedule schedule_;
  TrainOptions opts_;
  AdamState state_;
};

struct TrainLogRow {
  std::uint64_t step = 0;
  double loss = 0.0;
  double ppl = 0.0;
};

/// CSV with header `step,loss,ppl`. Values are written with full precision.
void write_train_log(const std::string& path, const std::vector<TrainLogRow>& rows);
std::vector<TrainLogRow> read_train_log(const std::string& path);

/// Mean of the trailing `window` losses ending at index `end` (inclusive).
double smoothed(const std::vector<double>& losses, std::size_t end, std::size_t window);

}  // namespace seqgen
