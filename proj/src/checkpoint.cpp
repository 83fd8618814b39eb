// SPDX-License-Identifier: Apache-2.0
#include "seqgen/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <sstream>

#include "seqgen/error.hpp"

namespace seqgen {
namespace {

constexpr char kMagic[4] = {'G', 'L', 'M', 'P'};
constexpr const char* kMetaConfig = "meta.config";
constexpr const char* kAdamStep = "adam.step";

void put_u32(std::string& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xffu));
}

class Reader {
 public:
  explicit Reader(const std::string& bytes) : bytes_(bytes) {}

  std::uint32_t u32() {
    need(4);
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i)
      v |= static_cast<std::uint32_t>(static_cast<unsigned char>(bytes_[pos_ + i])) << (8 * i);
    pos_ += 4;
    return v;
  }
  unsigned char byte() {
    need(1);
    return static_cast<unsigned char>(bytes_[pos_++]);
  }
  std::string str(std::size_t n) {
    need(n);
    std::string s = bytes_.substr(pos_, n);
    pos_ += n;
    return s;
  }
  bool done() const { return pos_ == bytes_.size(); }

 private:
  void need(std::size_t n) const {
    if (bytes_.size() - pos_ < n) throw InvalidInput("checkpoint: truncated file");
  }
  const std::string& bytes_;
  std::size_t pos_ = 0;
};

Tensor scalar_tensor(std::string name, std::vector<double> values) {
  Tensor t;
  t.name = std::move(name);
  t.shape = {static_cast<std::uint32_t>(values.size())};
  t.data = std::move(values);
  return t;
}

}  // namespace

std::string encode_tensors(const std::vector<Tensor>& tensors) {
  std::string out(kMagic, 4);
  out.push_back(static_cast<char>(kCheckpointVersion));
  put_u32(out, static_cast<std::uint32_t>(tensors.size()));
  for (const auto& t : tensors) {
    put_u32(out, static_cast<std::uint32_t>(t.name.size()));
    out += t.name;
    put_u32(out, static_cast<std::uint32_t>(t.shape.size()));
    std::size_t n = 1;
    for (auto d : t.shape) {
      put_u32(out, d);
      n *= d;
    }
    if (n != t.data.size()) throw DimensionMismatch("tensor " + t.name + ": shape/data mismatch");
    for (double x : t.data) put_u32(out, std::bit_cast<std::uint32_t>(static_cast<float>(x)));
  }
  return out;
}

std::vector<Tensor> decode_tensors(const std::string& bytes) {
  Reader r(bytes);
  if (r.str(4) != std::string(kMagic, 4)) throw InvalidInput("checkpoint: bad magic");
  if (r.byte() != kCheckpointVersion) throw InvalidInput("checkpoint: unsupported version");
  const std::uint32_t count = r.u32();
  std::vector<Tensor> out;
  out.reserve(count);
  for (std::uint32_t i = 0; i < count; ++i) {
    Tensor t;
    t.name = r.str(r.u32());
    const std::uint32_t rank = r.u32();
    std::size_t n = 1;
    for (std::uint32_t d = 0; d < rank; ++d) {
      t.shape.push_back(r.u32());
      n *= t.shape.back();
    }
    t.data.resize(n);
    for (auto& x : t.data) x = static_cast<double>(std::bit_cast<float>(r.u32()));
    out.push_back(std::move(t));
  }
  if (!r.done()) throw InvalidInput("checkpoint: trailing bytes");
  return out;
}

void write_tensors(const std::string& path, const std::vector<Tensor>& tensors) {
  const std::string bytes = encode_tensors(tensors);
  std::ofstream out(path, std::ios::binary);
  if (!out) throw InvalidInput("cannot write " + path);
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
}

std::vector<Tensor> read_tensors(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw InvalidInput("cannot read " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return decode_tensors(ss.str());
}

void save_checkpoint(const std::string& path, const Checkpoint& ckpt) {
  const auto& c = ckpt.config;
  std::vector<Tensor> tensors;
  tensors.push_back(scalar_tensor(
      kMetaConfig,
      {static_cast<double>(c.vocab_size), static_cast<double>(c.embed_dim),
       static_cast<double>(c.hidden_dim), static_cast<double>(c.num_layers),
       c.attention == AttentionMode::kSourceAndTarget ? 1.0 : 0.0,
       c.carry_encoder_state ? 1.0 : 0.0, static_cast<double>(ckpt.glimpse_k)}));
  for (const auto& t : ckpt.params.tensors()) tensors.push_back(t);
  write_tensors(path, tensors);
}

Checkpoint load_checkpoint(const std::string& path) {
  auto tensors = read_tensors(path);
  if (tensors.empty() || tensors.front().name != kMetaConfig || tensors.front().size() != 7)
    throw InvalidInput("checkpoint: missing " + std::string(kMetaConfig));
  const auto& m = tensors.front().data;
  Checkpoint ckpt;
  ckpt.config.vocab_size = static_cast<std::size_t>(m[0]);
  ckpt.config.embed_dim = static_cast<std::size_t>(m[1]);
  ckpt.config.hidden_dim = static_cast<std::size_t>(m[2]);
  ckpt.config.num_layers = static_cast<std::size_t>(m[3]);
  ckpt.config.attention = m[4] != 0.0 ? AttentionMode::kSourceAndTarget : AttentionMode::kSourceOnly;
  ckpt.config.carry_encoder_state = m[5] != 0.0;
  ckpt.glimpse_k = static_cast<std::size_t>(m[6]);
  ckpt.config.validate();
  for (std::size_t i = 1; i < tensors.size(); ++i) {
    ckpt.params.add(tensors[i].name, tensors[i].shape);
    ckpt.params.tensors().back().data = std::move(tensors[i].data);
  }
  check_params(ckpt.config, ckpt.params);
  return ckpt;
}

void save_adam_state(const std::string& path, const AdamState& state) {
  std::vector<Tensor> tensors;
  // Split the step counter into two 16-bit halves so float32 holds it exactly.
  tensors.push_back(scalar_tensor(kAdamStep, {static_cast<double>(state.step >> 16),
                                              static_cast<double>(state.step & 0xffffu)}));
  for (const auto& t : state.m.tensors()) {
    tensors.push_back(t);
    tensors.back().name = "m." + t.name;
  }
  for (const auto& t : state.v.tensors()) {
    tensors.push_back(t);
    tensors.back().name = "v." + t.name;
  }
  write_tensors(path, tensors);
}

AdamState load_adam_state(const std::string& path, const ParamSet& like) {
  auto tensors = read_tensors(path);
  const std::size_t n = like.tensors().size();
  if (tensors.size() != 1 + 2 * n || tensors.front().name != kAdamStep || tensors.front().size() != 2)
    throw InvalidInput("optimizer state does not match the model");
  AdamState state = AdamState::zeros_like(like);
  state.step = (static_cast<std::uint64_t>(tensors[0].data[0]) << 16) +
               static_cast<std::uint64_t>(tensors[0].data[1]);
  for (std::size_t i = 0; i < n; ++i) {
    auto& m = state.m.tensors()[i];
    auto& v = state.v.tensors()[i];
    if (tensors[1 + i].name != "m." + m.name || tensors[1 + n + i].name != "v." + v.name ||
        tensors[1 + i].data.size() != m.data.size() || tensors[1 + n + i].data.size() != v.data.size())
      throw InvalidInput("optimizer state does not match the model");
    m.data = tensors[1 + i].data;
    v.data = tensors[1 + n + i].data;
  }
  return state;
}

}  // namespace seqgen
