// SPDX-License-Identifier: Apache-2.0
#include "seqgen/trainer.hpp"

#include <cmath>
#include <fstream>
#include <iomanip>
#include <sstream>

#include "seqgen/error.hpp"

namespace seqgen {

OptimizerKind optimizer_from_string(const std::string& s) {
  if (s == "sgd") return OptimizerKind::kSgd;
  if (s == "adam") return OptimizerKind::kAdam;
  throw InvalidInput("unknown optimizer '" + s + "'");
}

BatchSchedule::BatchSchedule(std::vector<TokenPair> pairs, std::size_t glimpse_k,
                             Sentinels sentinels, std::size_t batch_size, std::uint64_t seed)
    : pairs_(std::move(pairs)),
      glimpse_k_(glimpse_k),
      sentinels_(sentinels),
      batch_size_(batch_size),
      seed_(seed) {
  if (pairs_.empty()) throw InsufficientData("training needs at least one pair");
  if (batch_size_ == 0) throw InvalidInput("batch size must be >= 1");
  epoch_size_ = epoch(0).size();
}

const std::vector<TrainingExample>& BatchSchedule::epoch(std::uint64_t e) {
  if (e != cached_epoch_) {
    Rng rng(derive_seed(seed_, "train.epoch", e));
    cached_ = glimpse_k_ == 0
                  ? make_vanilla_stream(pairs_, sentinels_, rng)
                  : make_training_stream(pairs_, GlimpseConfig{glimpse_k_}, sentinels_, rng);
    cached_epoch_ = e;
  }
  return cached_;
}

std::vector<TrainingExample> BatchSchedule::batch(std::uint64_t step) {
  std::vector<TrainingExample> out;
  out.reserve(batch_size_);
  std::uint64_t pos = step * batch_size_;
  for (std::size_t i = 0; i < batch_size_; ++i, ++pos) {
    const auto& ep = epoch(pos / epoch_size_);
    out.push_back(ep[pos % epoch_size_]);
  }
  return out;
}

Trainer::Trainer(ModelConfig cfg, ParamSet params, BatchSchedule schedule, TrainOptions opts)
    : cfg_(cfg),
      params_(std::move(params)),
      schedule_(std::move(schedule)),
      opts_(opts),
      state_(AdamState::zeros_like(params_)) {
  check_params(cfg_, params_);
}

void Trainer::restore(ParamSet params, AdamState state) {
  check_params(cfg_, params);
  if (!state.m.same_shapes(params) || !state.v.same_shapes(params))
    throw DimensionMismatch("optimizer state does not match the parameters");
  params_ = std::move(params);
  state_ = std::move(state);
}

double Trainer::step() {
  const auto batch = schedule_.batch(state_.step);
  LossAndGrad lg = loss_and_gradients(params_, cfg_, batch);
  if (opts_.clip_norm > 0.0) {
    double sq = 0.0;
    for (const auto& t : lg.grads.tensors())
      for (double g : t.data) sq += g * g;
    const double norm = std::sqrt(sq);
    if (norm > opts_.clip_norm) {
      const double s = opts_.clip_norm / norm;
      for (auto& t : lg.grads.tensors())
        for (double& g : t.data) g *= s;
    }
  }
  if (opts_.optimizer == OptimizerKind::kAdam) {
    params_ = adam_step(params_, lg.grads, state_, AdamHyper{.lr = opts_.lr});
    round_to_single(state_.m);
    round_to_single(state_.v);
  } else {
    params_ = sgd_step(params_, lg.grads, opts_.lr);
    state_.step += 1;
  }
  round_to_single(params_);
  return lg.loss;
}

void write_train_log(const std::string& path, const std::vector<TrainLogRow>& rows) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw InvalidInput("cannot write " + path);
  out << "step,loss,ppl\n" << std::setprecision(17);
  for (const auto& r : rows) out << r.step << ',' << r.loss << ',' << r.ppl << '\n';
}

std::vector<TrainLogRow> read_train_log(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw InvalidInput("cannot read " + path);
  std::string line;
  if (!std::getline(in, line) || line != "step,loss,ppl") throw InvalidInput(path + ": bad header");
  std::vector<TrainLogRow> rows;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::vector<std::string> fields;
    std::istringstream ss(line);
    for (std::string f; std::getline(ss, f, ',');) fields.push_back(f);
    if (fields.size() != 3) throw InvalidInput(path + ": bad row '" + line + "'");
    TrainLogRow r;
    try {
      r.step = std::stoull(fields[0]);
      r.loss = std::stod(fields[1]);
      r.ppl = std::stod(fields[2]);
    } catch (const std::exception&) {
      throw InvalidInput(path + ": bad row '" + line + "'");
    }
    rows.push_back(r);
  }
  return rows;
}

double smoothed(const std::vector<double>& losses, std::size_t end, std::size_t window) {
  if (window == 0 || end >= losses.size() || end + 1 < window)
    throw InvalidInput("smoothed: window out of range");
  double s = 0.0;
  for (std::size_t i = end + 1 - window; i <= end; ++i) s += losses[i];
  return s / static_cast<double>(window);
}

}  // namespace seqgen
