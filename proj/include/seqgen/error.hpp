// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <stdexcept>
#include <string>

namespace seqgen {

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Prefix already ends in EOS; there is no next token to predict.
class CompletedSequence : public Error {
 public:
  using Error::Error;
};

class DimensionMismatch : public Error {
 public:
  using Error::Error;
};

class EmptyTarget : public Error {
 public:
  using Error::Error;
};

class EmptyPool : public Error {
 public:
  using Error::Error;
};

class InsufficientData : public Error {
 public:
  using Error::Error;
};

class NonFinite : public Error {
 public:
  using Error::Error;
};

class DegenerateDistribution : public Error {
 public:
  using Error::Error;
};

/// Malformed file or configuration input.
class InvalidInput : public Error {
 public:
  using Error::Error;
};

}  // namespace seqgen
