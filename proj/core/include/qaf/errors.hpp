#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace qaf {

/// Root of every error raised by the library. Subclasses map onto the
/// process exit codes used by the command-line tool.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Operand shapes are incompatible.
class DimensionError : public Error {
 public:
  using Error::Error;
};

/// A documented precondition was violated by the caller.
class ContractError : public Error {
 public:
  using Error::Error;
};

/// Query point outside the operator's output domain.
class DomainError : public Error {
 public:
  using Error::Error;
};

class ConfigError : public Error {
 public:
  using Error::Error;
};

class ScenarioError : public Error {
 public:
  using Error::Error;
};

class SegmentationError : public Error {
 public:
  using Error::Error;
};

class FederationError : public Error {
 public:
  using Error::Error;
};

/// Predicted or target range is constant, so a normalised width is undefined.
class DegenerateRangeError : public Error {
 public:
  using Error::Error;
};

/// Malformed or mismatched file (checkpoint, dataset, calibration, config).
class FormatError : public Error {
 public:
  using Error::Error;
};

/// An artifact does not belong with the one it is used alongside, e.g. a
/// calibration file whose checkpoint hash does not match the loaded model.
class ArtifactError : public Error {
 public:
  using Error::Error;
};

/// Raised when optimisation produces non-finite values. Carries either the
/// offending parameter index or the round in which it happened.
class TrainingError : public Error {
 public:
  static constexpr std::size_t npos = static_cast<std::size_t>(-1);

  TrainingError(const std::string& what, std::size_t leaf, std::size_t round = npos)
      : Error(what), leaf_(leaf), round_(round) {}

  std::size_t leaf() const noexcept { return leaf_; }
  std::size_t round() const noexcept { return round_; }

 private:
  std::size_t leaf_;
  std::size_t round_;
};

/// Not enough calibration scores for the requested miscoverage level.
class CalibrationError : public Error {
 public:
  CalibrationError(const std::string& what, std::size_t minimum_n)
      : Error(what), minimum_n_(minimum_n) {}

  std::size_t minimum_n() const noexcept { return minimum_n_; }

 private:
  std::size_t minimum_n_;
};

}  // namespace qaf
