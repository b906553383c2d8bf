#include "crnn/errors.hpp"

namespace crnn {

std::string_view to_string(ErrorCode code) {
  switch (code) {
    case ErrorCode::kInvalidInput: return "invalid input";
    case ErrorCode::kDimensionMismatch: return "dimension mismatch";
    case ErrorCode::kIndexOutOfRange: return "index out of range";
    case ErrorCode::kNumerical: return "numerical failure";
    case ErrorCode::kUnstableModel: return "unstable model";
    case ErrorCode::kBoundary: return "boundary-indeterminate";
    case ErrorCode::kUndefinedRadius: return "undefined radius";
    case ErrorCode::kInfeasibleConstraint: return "infeasible constraint";
    case ErrorCode::kUnsupportedDimension: return "unsupported dimension";
    case ErrorCode::kDeformation: return "deformation error";
    case ErrorCode::kPlan: return "plan error";
    case ErrorCode::kDiverged: return "diverged";
    case ErrorCode::kFormat: return "format error";
    case ErrorCode::kIo: return "io error";
    case ErrorCode::kConfig: return "config error";
  }
  return "error";
}

}  // namespace crnn
