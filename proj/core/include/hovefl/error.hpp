#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace hovefl {

enum class ErrorCode {
  kDimensionMismatch,
  kNonFinite,
  kInvalidArgument,
  kInfeasiblePartition,
  kParse,
  kEmptyDataset,
  kSingularSystem,
  kDivergence,
  kCoverage,
  kEstimationFailed,
  kIo,
};

const char* ToString(ErrorCode code);

// Every failure surfaced by the library is an Error carrying a code, so
// callers (the CLI in particular) can map failures to exit statuses.
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& message)
      : std::runtime_error(message), code_(code) {}

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

// Raised when local training or a global step produces a non-finite value.
// `round` is 1-based; `iteration` is the local optimizer step (0 when the
// failure happened outside local training).
class DivergenceError : public Error {
 public:
  DivergenceError(const std::string& message, std::size_t round,
                  int device_id, std::size_t iteration)
      : Error(ErrorCode::kDivergence, message),
        round_(round),
        device_id_(device_id),
        iteration_(iteration) {}

  std::size_t round() const noexcept { return round_; }
  int device_id() const noexcept { return device_id_; }
  std::size_t iteration() const noexcept { return iteration_; }

 private:
  std::size_t round_;
  int device_id_;
  std::size_t iteration_;
};

}  // namespace hovefl
