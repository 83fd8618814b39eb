// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <string>
#include <vector>

#include "seqgen/neural_net.hpp"
#include "seqgen/optimizer.hpp"

namespace seqgen {

/// Binary tensor container.
///
/// Layout (all integers unsigned 32-bit little-endian):
///   "GLMP" | version byte | tensor count |
///   per tensor: name length, UTF-8 name, rank, dims..., float32 LE data.
inline constexpr unsigned char kCheckpointVersion = 1;

void write_tensors(const std::string& path, const std::vector<Tensor>& tensors);
std::vector<Tensor> read_tensors(const std::string& path);

std::string encode_tensors(const std::vector<Tensor>& tensors);
std::vector<Tensor> decode_tensors(const std::string& bytes);

struct Checkpoint {
  ModelConfig config;
  std::size_t glimpse_k = 0;
  ParamSet params;
};

/// Writes config (as tensor "meta.config") followed by the parameters.
void save_checkpoint(const std::string& path, const Checkpoint& ckpt);
Checkpoint load_checkpoint(const std::string& path);

void save_adam_state(const std::string& path, const AdamState& state);
AdamState load_adam_state(const std::string& path, const ParamSet& like);

}  // namespace seqgen
