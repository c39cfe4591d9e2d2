#pragma once

#include <stdexcept>
#include <string>

namespace motionsel {

// Error taxonomy used across the toolkit. The CLI maps these to exit codes.
struct ArgumentError : std::runtime_error {
  explicit ArgumentError(const std::string& msg) : std::runtime_error(msg) {}
};

struct NotFoundError : std::runtime_error {
  explicit NotFoundError(const std::string& msg) : std::runtime_error(msg) {}
};

struct FormatError : std::runtime_error {
  explicit FormatError(const std::string& msg) : std::runtime_error(msg) {}
};

struct IoError : std::runtime_error {
  explicit IoError(const std::string& msg) : std::runtime_error(msg) {}
};

// Checkpoint/config version or shape mismatch.
struct IncompatibleError : std::runtime_error {
  explicit IncompatibleError(const std::string& msg) : std::runtime_error(msg) {}
};

// Non-finite loss or gradient during optimization.
struct DivergenceError : std::runtime_error {
  explicit DivergenceError(const std::string& msg) : std::runtime_error(msg) {}
};

}  // namespace motionsel
