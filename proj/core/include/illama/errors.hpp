#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace illama {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Operand shapes are incompatible with the operation.
class ShapeError : public Error {
 public:
  using Error::Error;
};

/// A scalar was required (e.g. the seed of backward()).
class RankError : public Error {
 public:
  using Error::Error;
};

/// A softmax row held no finite entry.
class DegenerateRowError : public Error {
 public:
  explicit DegenerateRowError(std::size_t row)
      : Error("softmax row " + std::to_string(row) + " is fully masked"),
        row_(row) {}
  std::size_t row() const noexcept { return row_; }

 private:
  std::size_t row_;
};

/// A query row of an attention head could see no key at all.
class AttentionCollapseError : public Error {
 public:
  AttentionCollapseError(std::size_t layer, std::size_t head, std::size_t row)
      : Error("attention collapse: layer " + std::to_string(layer) + " head " +
              std::to_string(head) + " row " + std::to_string(row) +
              " has no visible key"),
        layer_(layer),
        head_(head),
        row_(row) {}
  std::size_t layer() const noexcept { return layer_; }
  std::size_t head() const noexcept { return head_; }
  std::size_t row() const noexcept { return row_; }

 private:
  std::size_t layer_;
  std::size_t head_;
  std::size_t row_;
};

class ConvergenceError : public Error {
 public:
  ConvergenceError(const std::string& what, double residual)
      : Error(what + " (residual " + std::to_string(residual) + ")"),
        residual_(residual) {}
  double residual() const noexcept { return residual_; }

 private:
  double residual_;
};

/// The function handed to the finite-difference oracle is not deterministic.
class OracleError : public Error {
 public:
  using Error::Error;
};

class ConfigError : public Error {
 public:
  using Error::Error;
};

/// Malformed file (bad magic, version, truncation, size).
class FormatError : public Error {
 public:
  using Error::Error;
};

class RangeError : public Error {
 public:
  using Error::Error;
};

/// An operation was called with an argument kind it does not handle.
class ContractError : public Error {
 public:
  using Error::Error;
};

/// Training produced a non-finite loss.
class DivergenceError : public Error {
 public:
  DivergenceError(std::size_t epoch, std::size_t step)
      : Error("non-finite loss at epoch " + std::to_string(epoch) + " step " +
              std::to_string(step)),
        epoch_(epoch),
        step_(step) {}
  std::size_t epoch() const noexcept { return epoch_; }
  std::size_t step() const noexcept { return step_; }

 private:
  std::size_t epoch_;
  std::size_t step_;
};

/// Computation is mathematically undefined for the input (empty sample set,
/// zero matrix normalisation).
class UndefinedError : public Error {
 public:
  using Error::Error;
};

}  // namespace illama
