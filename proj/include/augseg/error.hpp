#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>

namespace augseg {

/// Base for every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Shapes that cannot be combined (including failed broadcasts).
class DimensionError : public Error {
 public:
  using Error::Error;
};

/// A caller broke a documented precondition.
class ContractError : public Error {
 public:
  using Error::Error;
};

/// Value outside an operation's numeric domain (log of a non-positive value,
/// non-finite loss, ...).
class NumericError : public Error {
 public:
  using Error::Error;
};

/// Missing or inconsistent user-supplied input (files, configs, flags).
class InputError : public Error {
 public:
  using Error::Error;
};

/// Malformed file contents. Carries the byte offset where parsing stopped.
class FormatError : public Error {
 public:
  FormatError(const std::string& what, std::uint64_t offset)
      : Error(what + " (at byte " + std::to_string(offset) + ")"), offset_(offset) {}

  std::uint64_t offset() const noexcept { return offset_; }

 private:
  std::uint64_t offset_;
};

}  // namespace augseg
