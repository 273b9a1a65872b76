#pragma once

#include <stdexcept>
#include <string>
#include <utility>

namespace ikt {

// Base for every library failure. `kind()` is a stable machine-checkable tag
// ("schema", "capacity", "integrity", ...); the message carries diagnostics.
class Error : public std::runtime_error {
 public:
  Error(std::string kind, const std::string& msg)
      : std::runtime_error(msg), kind_(std::move(kind)) {}
  const std::string& kind() const noexcept { return kind_; }

 private:
  std::string kind_;
};

// Bad flags, schemas or parameter values. CLI maps these to exit code 2.
class ConfigError : public Error {
 public:
  using Error::Error;
};

// Malformed or inconsistent data discovered at runtime (exit code 1).
class DataError : public Error {
 public:
  using Error::Error;
};

// Violated numeric contracts: shape mismatches, out-of-range indices,
// degenerate inputs, non-finite values.
class NumericError : public Error {
 public:
  using Error::Error;
};

// Serialization and file problems: unreadable paths, checksum or version
// mismatches.
class IoError : public Error {
 public:
  using Error::Error;
};

}  // namespace ikt
