#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace adkd {

// Base class for everything thrown by this library.
class Error : public std::runtime_error {
 public:
  explicit Error(const std::string& msg) : std::runtime_error(msg) {}
};

// Tensor shapes or sizes do not satisfy an operation's requirements.
class DimensionError : public Error {
 public:
  using Error::Error;
};

// Invalid or inconsistent configuration values.
class ConfigError : public Error {
 public:
  using Error::Error;
};

// An API contract was violated (e.g. backward from a non-scalar node).
class ContractError : public Error {
 public:
  using Error::Error;
};

// A metric is undefined for the given input (e.g. AUROC with one class).
class MetricError : public Error {
 public:
  using Error::Error;
};

// Malformed input file; offset() is the byte position where parsing failed.
class ParseError : public Error {
 public:
  ParseError(const std::string& msg, std::size_t offset)
      : Error(msg + " (byte offset " + std::to_string(offset) + ")"),
        offset_(offset) {}
  std::size_t offset() const { return offset_; }

 private:
  std::size_t offset_ = 0;
};

// Filesystem or stream failure.
class IoError : public Error {
 public:
  using Error::Error;
};

}  // namespace adkd
