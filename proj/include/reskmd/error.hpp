// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace reskmd {

enum class ErrorKind {
  Parse,
  Ordering,
  InsufficientData,
  Divergence,
  Rank,
  DegenerateWindow,
  DegenerateEigenfunction,
  NumericalInconsistency,
  Shape,
  Configuration,
  Io,
};

std::string_view to_string(ErrorKind kind);

/// Base exception for every failure raised by the library. The kind is what
/// the CLI maps onto exit codes.
class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& what)
      : std::runtime_error(what), kind_(kind) {}

  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

/// Malformed input row; `row` is the 1-based line number in the file.
class ParseError : public Error {
 public:
  ParseError(long row, const std::string& what)
      : Error(ErrorKind::Parse, "row " + std::to_string(row) + ": " + what),
        row_(row) {}

  long row() const noexcept { return row_; }

 private:
  long row_;
};

/// Integration blew up; `time` is the simulation time of the failing step.
class DivergenceError : public Error {
 public:
  DivergenceError(double time, const std::string& what)
      : Error(ErrorKind::Divergence, what), time_(time) {}

  double time() const noexcept { return time_; }

 private:
  double time_;
};

}  // namespace reskmd
