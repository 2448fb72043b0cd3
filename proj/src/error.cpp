#include "sketchprune/error.hpp"

namespace sketchprune {

std::string_view to_string(ErrorCode code) {
  switch (code) {
    case ErrorCode::missing_file: return "missing_file";
    case ErrorCode::malformed_npy: return "malformed_npy";
    case ErrorCode::shape_mismatch: return "shape_mismatch";
    case ErrorCode::invalid_manifest: return "invalid_manifest";
    case ErrorCode::non_finite: return "non_finite";
    case ErrorCode::io_error: return "io_error";
    case ErrorCode::invalid_argument: return "invalid_argument";
    case ErrorCode::unknown_layer: return "unknown_layer";
    case ErrorCode::rate_out_of_range: return "rate_out_of_range";
    case ErrorCode::numerical_failure: return "numerical_failure";
    case ErrorCode::degenerate_sketch: return "degenerate_sketch";
    case ErrorCode::topology_mismatch: return "topology_mismatch";
    case ErrorCode::reconciliation_failure: return "reconciliation_failure";
  }
  return "unknown";
}

}  // namespace sketchprune
