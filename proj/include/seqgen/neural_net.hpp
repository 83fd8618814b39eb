// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "seqgen/sequence_model.hpp"
#include "seqgen/vocabulary.hpp"

namespace seqgen {

using RowMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

enum class AttentionMode { kSourceOnly, kSourceAndTarget };

const char* to_string(AttentionMode mode);
AttentionMode attention_mode_from_string(const std::string& s);

struct ModelConfig {
  std::size_t vocab_size = 0;
  std::size_t embed_dim = 32;
  std::size_t hidden_dim = 64;
  std::size_t num_layers = 1;
  AttentionMode attention = AttentionMode::kSourceOnly;
  bool carry_encoder_state = true;

  /// Throws InvalidInput when a dimension is zero or num_layers > 2.
  void validate() const;
  bool operator==(const ModelConfig&) const = default;
};

struct Tensor {
  std::string name;
  std::vector<std::uint32_t> shape;
  std::vector<double> data;

  std::size_t size() const { return data.size(); }
};

/// Named parameter tensors in a fixed order. Element-wise equality is
/// bitwise on the stored doubles.
class ParamSet {
 public:
  ParamSet() = default;

  void add(std::string name, std::vector<std::uint32_t> shape);
  bool contains(const std::string& name) const;
  Tensor& at(const std::string& name);
  const Tensor& at(const std::string& name) const;

  std::vector<Tensor>& tensors() { return tensors_; }
  const std::vector<Tensor>& tensors() const { return tensors_; }

  /// Total scalar count across tensors, and flat coordinate access in
  /// tensor order.
  std::size_t total_size() const;
  double& flat(std::size_t index);
  double flat(std::size_t index) const;

  ParamSet zeros_like() const;
  bool all_finite() const;
  bool same_shapes(const ParamSet& other) const;
  bool operator==(const ParamSet& other) const;

  Eigen::Map<RowMatrix> matrix(const std::string& name);
  Eigen::Map<const RowMatrix> matrix(const std::string& name) const;
  Eigen::Map<Eigen::VectorXd> vector(const std::string& name);
  Eigen::Map<const Eigen::VectorXd> vector(const std::string& name) const;

 private:
  std::vector<Tensor> tensors_;
};

/// Parameter names and shapes implied by a configuration.
ParamSet make_param_schema(const ModelConfig& cfg);

/// uniform(-0.08, 0.08) from `seed`, rounded to single precision.
ParamSet init_params(const ModelConfig& cfg, std::uint64_t seed);

/// Throws DimensionMismatch when tensor names or shapes disagree with cfg.
void check_params(const ModelConfig& cfg, const ParamSet& params);

struct DecoderState {
  std::vector<Eigen::VectorXd> h;  // per layer
  std::vector<Eigen::VectorXd> c;  // per layer cell
  std::size_t step = 0;

  const Eigen::VectorXd& top() const { return h.back(); }
};

enum class MemoryOrigin { kSource, kTarget };

struct AttentionMemory {
  std::vector<Eigen::VectorXd> rows;
  std::vector<MemoryOrigin> origin;

  std::size_t size() const { return rows.size(); }
  void append(Eigen::VectorXd row, MemoryOrigin from) {
    rows.push_back(std::move(row));
    origin.push_back(from);
  }
};

/// One annotation row per input position, plus the decoder's initial state:
/// the final encoder state when carry_encoder_state is on, else zeros.
std::pair<AttentionMemory, DecoderState> encode(const ParamSet& params, const ModelConfig& cfg,
                                                std::span<const TokenId> input);

/// Softmax weights of the additive scores v . tanh(Wq h + Wm m_j).
std::vector<double> attention_weights(const ParamSet& params, const DecoderState& h_prev,
                                      const AttentionMemory& memory);

/// sum_j w_j m_j.
Eigen::VectorXd attention(const ParamSet& params, const DecoderState& h_prev,
                          const AttentionMemory& memory);

struct StepOutput {
  std::vector<double> probs;
  DecoderState state;
};

/// One decoder step. In source-and-target mode the caller appends the
/// returned state's top vector to `memory` before the next step.
StepOutput decode_step(const ParamSet& params, const ModelConfig& cfg, const DecoderState& state,
                       TokenId prev_token, const AttentionMemory& memory);

/// Encoder input, decoder input and decoder output of one training example.
struct TrainingExample {
  TokenSequence encoder_input;
  TokenSequence decoder_input;
  TokenSequence decoder_output;

  bool operator==(const TrainingExample&) const = default;
  auto operator<=>(const TrainingExample&) const = default;
};

/// Teacher-forced log P(decoder_output_t | ...) for every output position.
std::vector<double> example_log_probs(const ParamSet& params, const ModelConfig& cfg,
                                      const TrainingExample& example);

struct LossAndGrad {
  double loss = 0.0;  // mean cross-entropy per output token
  std::size_t tokens = 0;
  ParamSet grads;
};

LossAndGrad loss_and_gradients(const ParamSet& params, const ModelConfig& cfg,
                               std::span<const TrainingExample> batch);

/// Builds the encoder sequence source ++ target[1:start] ++ EOS.
TokenSequence assemble_encoder_input(std::span<const TokenId> source,
                                     std::span<const TokenId> target, std::size_t start,
                                     TokenId eos);

/// Adapter exposing a trained network as a ConditionalSequenceModel.
///
/// With glimpse_k > 0 the target is processed glimpse by glimpse: the
/// decoder covers positions [jK, jK+K) and everything before the glimpse
/// moves to the encoder, exactly as in training.
class NeuralSeq2Seq final : public ConditionalSequenceModel {
 public:
  NeuralSeq2Seq(ModelConfig cfg, ParamSet params, TokenId sos, TokenId eos,
                std::size_t glimpse_k = 0);

  std::size_t vocab_size() const override { return cfg_.vocab_size; }
  TokenId sos_id() const override { return sos_; }
  TokenId eos_id() const override { return eos_; }

  std::vector<double> next_token_distribution(
      std::span<const TokenId> source, std::span<const TokenId> prefix) const override;
  std::vector<double> continuation_log_probs(
      std::span<const TokenId> source, std::span<const TokenId> prefix,
      std::span<const TokenId> continuation) const override;

  const ModelConfig& config() const { return cfg_; }
  const ParamSet& params() const { return params_; }
  std::size_t glimpse_k() const { return glimpse_k_; }

 private:
  std::size_t glimpse_start(std::size_t position) const;

  ModelConfig cfg_;
  ParamSet params_;
  TokenId sos_;
  TokenId eos_;
  std::size_t glimpse_k_;
};

}  // namespace seqgen
