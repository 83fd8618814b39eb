// SPDX-License-Identifier: Apache-2.0
#include <charconv>
#include <cmath>
#include <fstream>
#include <sstream>

#include "seqgen/cli.hpp"
#include "seqgen/error.hpp"

namespace seqgen::cli {
namespace {

enum class Kind { kString, kSize, kU64, kReal, kBool, kChoice, kSizeList };

struct KeySpec {
  Kind kind;
  std::string fallback;
  std::vector<std::string> choices = {};
};

const std::map<std::string, KeySpec>& schema() {
  static const std::map<std::string, KeySpec> s = {
      // paths
      {"out", {Kind::kString, "out"}},
      {"threads", {Kind::kString, ""}},
      {"oracle", {Kind::kString, ""}},
      {"pairs", {Kind::kString, ""}},
      {"vocab", {Kind::kString, ""}},
      {"checkpoint", {Kind::kString, ""}},
      {"prompts", {Kind::kString, ""}},
      {"pool", {Kind::kString, ""}},
      {"responses", {Kind::kString, ""}},
      // corpus
      {"vocab_size", {Kind::kSize, "5000"}},
      {"synth_pairs", {Kind::kSize, "1000"}},
      {"synth_max_len", {Kind::kSize, "60"}},
      // model
      {"model", {Kind::kChoice, "neural", {"neural", "oracle", "uniform"}}},
      {"embed_dim", {Kind::kSize, "32"}},
      {"hidden_dim", {Kind::kSize, "64"}},
      {"num_layers", {Kind::kSize, "1"}},
      {"attention", {Kind::kChoice, "source_only", {"source_only", "source_and_target"}}},
      {"carry_state", {Kind::kBool, "true"}},
      {"glimpse_k", {Kind::kSize, "0"}},
      // training
      {"steps", {Kind::kU64, "1000"}},
      {"batch_size", {Kind::kSize, "16"}},
      {"optimizer", {Kind::kChoice, "adam", {"adam", "sgd"}}},
      {"lr", {Kind::kReal, "0.003"}},
      {"clip_norm", {Kind::kReal, "5"}},
      {"checkpoint_every", {Kind::kU64, "0"}},
      {"log_every", {Kind::kU64, "1"}},
      {"resume", {Kind::kBool, "false"}},
      {"ppl_pairs", {Kind::kSize, "200"}},
      // decoding
      {"strategy",
       {Kind::kChoice, "beam", {"beam", "beam_lennorm", "segment", "backoff", "marginal"}}},
      {"B", {Kind::kSize, "2"}},
      {"D", {Kind::kSize, "10"}},
      {"H", {Kind::kSize, "10"}},
      {"Q", {Kind::kSize, "15"}},
      {"alpha", {Kind::kReal, "0.8"}},
      {"max_segments", {Kind::kSize, "8"}},
      {"backoff_threshold", {Kind::kSize, "40"}},
      {"max_len", {Kind::kSize, "20"}},
      {"nbest", {Kind::kSize, "10"}},
      {"trace", {Kind::kBool, "false"}},
      // evaluation
      {"mode", {Kind::kChoice, "nchoosek", {"nchoosek", "ppl", "lengths"}}},
      {"scheme",
       {Kind::kChoice, "no_norm", {"no_norm", "marginal_norm", "prompt_norm", "random"}}},
      {"N", {Kind::kSize, "10"}},
      {"K", {Kind::kSize, "1"}},
      {"trials", {Kind::kSize, "1000"}},
      {"thresholds", {Kind::kSizeList, "40,100"}},
      {"seed", {Kind::kU64, "0"}},
  };
  return s;
}

template <typename T>
bool parse_uint(const std::string& v, T& out) {
  auto [ptr, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  return ec == std::errc() && ptr == v.data() + v.size() && !v.empty();
}

std::vector<std::size_t> parse_list(const std::string& key, const std::string& v) {
  std::vector<std::size_t> out;
  std::stringstream ss(v);
  std::string item;
  while (std::getline(ss, item, ',')) {
    std::size_t x = 0;
    if (!parse_uint(item, x)) throw InvalidInput("bad list entry for " + key + ": " + item);
    out.push_back(x);
  }
  return out;
}

void validate(const std::string& key, const KeySpec& spec, const std::string& v) {
  auto bad = [&] { throw InvalidInput("invalid value for " + key + ": '" + v + "'"); };
  switch (spec.kind) {
    case Kind::kString:
      return;
    case Kind::kSize: {
      std::size_t x;
      if (!parse_uint(v, x)) bad();
      return;
    }
    case Kind::kU64: {
      std::uint64_t x;
      if (!parse_uint(v, x)) bad();
      return;
    }
    case Kind::kReal: {
      std::size_t used = 0;
      double x = 0;
      try {
        x = std::stod(v, &used);
      } catch (const std::exception&) {
        bad();
      }
      if (used != v.size() || !std::isfinite(x)) bad();
      return;
    }
    case Kind::kBool:
      if (v != "true" && v != "false" && v != "1" && v != "0") bad();
      return;
    case Kind::kChoice:
      for (const auto& c : spec.choices)
        if (c == v) return;
      bad();
      return;
    case Kind::kSizeList:
      parse_list(key, v);
      return;
  }
}

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

}  // namespace

RunConfig::RunConfig() {
  for (const auto& [key, spec] : schema()) values_[key] = spec.fallback;
}

void RunConfig::set(const std::string& key, const std::string& value) {
  auto it = schema().find(key);
  if (it == schema().end()) throw InvalidInput("unknown config key: " + key);
  validate(key, it->second, value);
  values_[key] = value;
}

void RunConfig::apply(const std::string& assignment) {
  const auto eq = assignment.find('=');
  if (eq == std::string::npos) throw InvalidInput("expected key=value, got '" + assignment + "'");
  set(trim(assignment.substr(0, eq)), trim(assignment.substr(eq + 1)));
}

void RunConfig::load_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw InvalidInput("cannot open config file " + path);
  std::string line;
  while (std::getline(in, line)) {
    line = trim(line);
    if (line.empty() || line[0] == '#') continue;
    apply(line);
  }
}

const std::string& RunConfig::str(const std::string& key) const {
  auto it = values_.find(key);
  if (it == values_.end()) throw InvalidInput("unknown config key: " + key);
  return it->second;
}

std::size_t RunConfig::size(const std::string& key) const {
  std::size_t x = 0;
  parse_uint(str(key), x);
  return x;
}

std::uint64_t RunConfig::u64(const std::string& key) const {
  std::uint64_t x = 0;
  parse_uint(str(key), x);
  return x;
}

double RunConfig::real(const std::string& key) const { return std::stod(str(key)); }

bool RunConfig::flag(const std::string& key) const {
  const auto& v = str(key);
  return v == "true" || v == "1";
}

std::vector<std::size_t> RunConfig::size_list(const std::string& key) const {
  return parse_list(key, str(key));
}

std::string RunConfig::path_or(const std::string& key, const std::string& fallback) const {
  const auto& v = str(key);
  return v.empty() ? str("out") + "/" + fallback : v;
}

ModelConfig RunConfig::model_config(std::size_t vocab_size) const {
  ModelConfig cfg;
  cfg.vocab_size = vocab_size;
  cfg.embed_dim = size("embed_dim");
  cfg.hidden_dim = size("hidden_dim");
  cfg.num_layers = size("num_layers");
  cfg.attention = attention_mode_from_string(str("attention"));
  cfg.carry_encoder_state = flag("carry_state");
  cfg.validate();
  return cfg;
}

DecodeParams RunConfig::decode_params() const {
  DecodeParams p;
  p.B = size("B");
  p.D = size("D");
  p.H = size("H");
  p.Q = size("Q");
  p.alpha = real("alpha");
  p.max_segments = size("max_segments");
  p.backoff_threshold_chars = size("backoff_threshold");
  p.max_len = size("max_len");
  p.seed = u64("seed");
  p.validate();
  return p;
}

TrainOptions RunConfig::train_options() const {
  TrainOptions o;
  o.batch_size = size("batch_size");
  o.optimizer = optimizer_from_string(str("optimizer"));
  o.lr = real("lr");
  o.clip_norm = real("clip_norm");
  o.glimpse_k = size("glimpse_k");
  o.seed = u64("seed");
  if (o.batch_size == 0) throw InvalidInput("batch_size must be >= 1");
  return o;
}

std::vector<std::string> RunConfig::known_keys() {
  std::vector<std::string> keys;
  for (const auto& [k, spec] : schema()) keys.push_back(k);
  return keys;
}

}  // namespace seqgen::cli
