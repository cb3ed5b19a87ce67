#pragma once

#include <stdexcept>
#include <string>

namespace seqcheck {

// Bad run configuration or schema: caller error, fail before any work.
class ConfigError : public std::runtime_error {
 public:
  explicit ConfigError(const std::string& msg) : std::runtime_error(msg) {}
};

// Malformed input data (parse failures carry line numbers in the message).
class ParseError : public std::runtime_error {
 public:
  explicit ParseError(const std::string& msg) : std::runtime_error(msg) {}
};

// Contract violation detected at runtime (empty split, divergence, ...).
class DataError : public std::runtime_error {
 public:
  explicit DataError(const std::string& msg) : std::runtime_error(msg) {}
};

}  // namespace seqcheck
