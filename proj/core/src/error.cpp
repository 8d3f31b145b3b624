#include "hovefl/error.hpp"

namespace hovefl {

const char* ToString(ErrorCode code) {
  switch (code) {
    case ErrorCode::kDimensionMismatch: return "dimension_mismatch";
    case ErrorCode::kNonFinite: return "non_finite";
    case ErrorCode::kInvalidArgument: return "invalid_argument";
    case ErrorCode::kInfeasiblePartition: return "infeasible_partition";
    case ErrorCode::kParse: return "parse";
    case ErrorCode::kEmptyDataset: return "empty_dataset";
    case ErrorCode::kSingularSystem: return "singular_system";
    case ErrorCode::kDivergence: return "divergence";
    case ErrorCode::kCoverage: return "coverage";
    case ErrorCode::kEstimationFailed: return "estimation_failed";
    case ErrorCode::kIo: return "io";
  }
  return "unknown";
}

}  // namespace hovefl
