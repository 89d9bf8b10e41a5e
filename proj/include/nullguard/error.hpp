#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace nullguard {

enum class Errc {
  invalid_argument,
  dimension_mismatch,
  degenerate_directions,
  degenerate_labels,
  degenerate_series,
  iterations_exceed_dimension,
  missing_label,
  infeasible,
  bad_magic,
  version_mismatch,
  truncated,
  invalid_record,
  io,
  stale_input,
  output_mismatch,
};

/// Stable lowercase identifier used in the CLI's machine-readable error line.
std::string_view errc_name(Errc code) noexcept;

class Error : public std::runtime_error {
 public:
  Error(Errc code, const std::string& what) : std::runtime_error(what), code_(code) {}

  Errc code() const noexcept { return code_; }

 private:
  Errc code_;
};

}  // namespace nullguard
