#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace xaitext {

// Base for every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Malformed or unusable input data (CSV rows, vocabulary files, ids).
class DataError : public Error {
 public:
  explicit DataError(const std::string& what, std::vector<std::size_t> rows = {})
      : Error(what), rows_(std::move(rows)) {}

  // 1-based data row numbers that triggered the error, if any.
  const std::vector<std::size_t>& rows() const noexcept { return rows_; }

 private:
  std::vector<std::size_t> rows_;
};

class DimensionError : public Error {
 public:
  using Error::Error;
};

// Non-finite value detected in a forward or backward pass.
class NumericError : public Error {
 public:
  using Error::Error;
};

class TrainingError : public Error {
 public:
  TrainingError(const std::string& what, std::size_t epoch, std::size_t batch)
      : Error(what), epoch_(epoch), batch_(batch) {}
  std::size_t epoch() const noexcept { return epoch_; }
  std::size_t batch() const noexcept { return batch_; }

 private:
  std::size_t epoch_;
  std::size_t batch_;
};

class CheckpointError : public Error {
 public:
  enum class Kind { io, bad_magic, version, architecture, checksum, format };
  CheckpointError(Kind kind, const std::string& what) : Error(what), kind_(kind) {}
  Kind kind() const noexcept { return kind_; }

 private:
  Kind kind_;
};

// Explainer-specific failures (too many players, degenerate designs).
class ExplanationError : public Error {
 public:
  using Error::Error;
};

// Bad position set passed to a PAD-substitution operator.
class PerturbationError : public Error {
 public:
  using Error::Error;
};

class ConfigError : public Error {
 public:
  using Error::Error;
};

}  // namespace xaitext
