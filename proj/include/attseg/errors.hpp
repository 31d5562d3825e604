#pragma once

#include <stdexcept>
#include <string>

namespace attseg {

// Exit statuses used by the command-line tool.
enum class ExitCode : int { ok = 0, usage = 1, data = 2, numeric = 3 };

class Error : public std::runtime_error {
public:
  Error(ExitCode code, const std::string& what)
      : std::runtime_error(what), code_(code) {}
  ExitCode code() const noexcept { return code_; }

private:
  ExitCode code_;
};

// Bad flags, bad config values, missing paths.
class UsageError : public Error {
public:
  explicit UsageError(const std::string& what) : Error(ExitCode::usage, what) {}
};

// Malformed corpora, model files or reports.
class DataError : public Error {
public:
  explicit DataError(const std::string& what) : Error(ExitCode::data, what) {}
};

// Non-finite values, shape mismatches and other numeric contract violations.
class NumericError : public Error {
public:
  explicit NumericError(const std::string& what) : Error(ExitCode::numeric, what) {}
};

}  // namespace attseg
