#pragma once

#include <stdexcept>
#include <string>

namespace avru {

// Error taxonomy shared across the library. The CLI maps each type to a
// stable exit code (see tools/avru.cpp).
class ConfigError : public std::runtime_error {
  public:
    explicit ConfigError(const std::string& msg) : std::runtime_error(msg) {}
};

class IoError : public std::runtime_error {
  public:
    explicit IoError(const std::string& msg) : std::runtime_error(msg) {}
};

// Structured failure while parsing the binary dataset container.
class FormatError : public std::runtime_error {
  public:
    enum class Kind { bad_magic, bad_version, truncated, count_mismatch, inconsistent };

    FormatError(Kind kind, const std::string& msg) : std::runtime_error(msg), kind_(kind) {}
    Kind kind() const { return kind_; }

  private:
    Kind kind_;
};

// Checkpoint/dataset/canvas shape mismatches (e.g. cross-canvas transfer).
class IncompatibilityError : public std::runtime_error {
  public:
    explicit IncompatibilityError(const std::string& msg) : std::runtime_error(msg) {}
};

// Non-finite gradients or other numeric aborts during optimization.
class NumericError : public std::runtime_error {
  public:
    explicit NumericError(const std::string& msg) : std::runtime_error(msg) {}
};

// Raised when the procedural generator exceeds its retry budget.
class GenerationError : public std::runtime_error {
  public:
    explicit GenerationError(const std::string& msg) : std::runtime_error(msg) {}
};

} // namespace avru
