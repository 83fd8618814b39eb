// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <iosfwd>
#include <map>
#include <string>
#include <vector>

#include "seqgen/decode.hpp"
#include "seqgen/neural_net.hpp"
#include "seqgen/trainer.hpp"

namespace seqgen::cli {

enum ExitCode : int {
  kOk = 0,
  kFailure = 1,
  kMalformedInput = 2,
  kNonFiniteLoss = 3,
  kVocabMismatch = 4,
  kInsufficientData = 5,
};

/// key=value settings validated against a fixed schema. Every key has a
/// default; unknown keys and unparsable values throw InvalidInput.
class RunConfig {
 public:
  RunConfig();

  void set(const std::string& key, const std::string& value);
  /// "key=value".
  void apply(const std::string& assignment);
  /// One assignment per line; blank lines and lines starting with '#' are skipped.
  void load_file(const std::string& path);

  const std::string& str(const std::string& key) const;
  std::size_t size(const std::string& key) const;
  std::uint64_t u64(const std::string& key) const;
  double real(const std::string& key) const;
  bool flag(const std::string& key) const;
  std::vector<std::size_t> size_list(const std::string& key) const;

  /// Path setting, or out/<fallback> when the setting is empty.
  std::string path_or(const std::string& key, const std::string& fallback) const;

  ModelConfig model_config(std::size_t vocab_size) const;
  DecodeParams decode_params() const;
  TrainOptions train_options() const;

  static std::vector<std::string> known_keys();

 private:
  std::map<std::string, std::string> values_;
};

/// Entry point shared by the binary and in-process tests. args excludes
/// the program name.
int run_cli(const std::vector<std::string>& args, std::istream& in, std::ostream& out,
            std::ostream& err);

}  // namespace seqgen::cli
