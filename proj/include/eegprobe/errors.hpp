#pragma once

#include <stdexcept>
#include <string>

namespace eegprobe {

// Base class for all toolkit errors.
class Error : public std::runtime_error {
 public:
  explicit Error(const std::string& msg) : std::runtime_error(msg) {}
};

// Incompatible tensor/array shapes.
class DimensionError : public Error {
 public:
  explicit DimensionError(const std::string& msg) : Error(msg) {}
};

// Invalid configuration values (bad cutoff, bad ratios, unknown names, ...).
class ConfigError : public Error {
 public:
  explicit ConfigError(const std::string& msg) : Error(msg) {}
};

// On-disk data that cannot be parsed or is inconsistent with its manifest.
class FormatError : public Error {
 public:
  explicit FormatError(const std::string& msg) : Error(msg) {}
};

// Numeric contract violations (non-finite values, non-unit rows, bad ranges).
class ContractError : public Error {
 public:
  explicit ContractError(const std::string& msg) : Error(msg) {}
};

}  // namespace eegprobe
