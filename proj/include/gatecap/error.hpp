#pragma once

#include <stdexcept>
#include <string>

namespace gatecap {

// Bad flags, bad config values, shape/bound violations. CLI exit code 2.
struct ConfigError : std::runtime_error {
  explicit ConfigError(const std::string& msg) : std::runtime_error(msg) {}
};

// Bad or missing input data: files, ids, splits, non-finite values. CLI exit code 1.
struct DataError : std::runtime_error {
  explicit DataError(const std::string& msg) : std::runtime_error(msg) {}
};

// A verification check failed. CLI exit code 3.
struct CheckError : std::runtime_error {
  explicit CheckError(const std::string& msg) : std::runtime_error(msg) {}
};

}  // namespace gatecap
