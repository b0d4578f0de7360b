#pragma once

#include <stdexcept>
#include <string>

namespace dlstm {

// Malformed input text (topology files, CSVs, JSON documents).
class ParseError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// An identifier (road, segment, route) that the receiver does not know.
class UnknownIdError : public std::invalid_argument {
 public:
  explicit UnknownIdError(const std::string& id)
      : std::invalid_argument("unknown id '" + id + "'"), id_(id) {}
  UnknownIdError(const std::string& what, const std::string& id)
      : std::invalid_argument(what), id_(id) {}

  const std::string& id() const noexcept { return id_; }

 private:
  std::string id_;
};

// Violated mathematical precondition, e.g. a non-positive speed fed to the
// weight matrix or a degenerate normaliser.
class DomainError : public std::domain_error {
 public:
  using std::domain_error::domain_error;
};

// NaN/Inf detected in a forward pass, gradient, or optimiser update.
class NumericError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace dlstm
