#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace sketchprune {

enum class ErrorCode {
  missing_file,
  malformed_npy,
  shape_mismatch,
  invalid_manifest,
  non_finite,
  io_error,
  invalid_argument,
  unknown_layer,
  rate_out_of_range,
  numerical_failure,
  degenerate_sketch,
  topology_mismatch,
  reconciliation_failure,
};

std::string_view to_string(ErrorCode code);

// Every failure raised by the library carries a machine-readable code so the
// CLI can map it to an exit status and a JSON error object.
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& message)
      : std::runtime_error(message), code_(code) {}

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

}  // namespace sketchprune
