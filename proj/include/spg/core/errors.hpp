#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>

namespace spg {

/// Base class of every error raised by the toolkit.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// A caller broke a documented precondition (shapes, counts, orthonormality).
class ContractError : public Error {
 public:
  using Error::Error;
};

/// Input lies outside the mathematical domain of an operation.
class DomainError : public Error {
 public:
  using Error::Error;
};

/// Invalid or inconsistent configuration.
class ConfigError : public Error {
 public:
  using Error::Error;
};

/// Malformed container file. Carries the byte offset where the problem was found.
class FormatError : public Error {
 public:
  FormatError(const std::string& what, std::uint64_t offset)
      : Error(what + " (at byte " + std::to_string(offset) + ")"), detail_(what), offset_(offset) {}

  std::uint64_t offset() const noexcept { return offset_; }
  /// Message without the offset suffix.
  const std::string& detail() const noexcept { return detail_; }

 private:
  std::string detail_;
  std::uint64_t offset_;
};

/// A file could not be opened, read or written.
class IoError : public Error {
 public:
  using Error::Error;
};

/// Training or evaluation produced non-finite numbers.
class NumericalError : public Error {
 public:
  using Error::Error;
};

/// Synthetic generation could not satisfy its constraints.
class GenerationError : public Error {
 public:
  using Error::Error;
};

}  // namespace spg
