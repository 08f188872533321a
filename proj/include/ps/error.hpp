#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace ps {

enum class ErrorCode {
  Io,
  Invariant,
  Format,
  Truncated,
  UnsupportedVersion,
  Geometry,
  History,
  Shape,
  Config,
  Training,
  Gap,
  Bounds,
};

std::string_view to_string(ErrorCode code);

// All domain failures surface as ps::Error; the code distinguishes the cases
// callers are expected to branch on (e.g. truncation vs bad magic).
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& what)
      : std::runtime_error(what), code_(code) {}
  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

// Raised when a training run produces a non-finite loss.
class TrainingError : public Error {
 public:
  TrainingError(int epoch, const std::string& what)
      : Error(ErrorCode::Training, what), epoch_(epoch) {}
  int epoch() const noexcept { return epoch_; }

 private:
  int epoch_;
};

}  // namespace ps
