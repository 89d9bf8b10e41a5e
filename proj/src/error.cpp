#include "nullguard/error.hpp"

namespace nullguard {

std::string_view errc_name(Errc code) noexcept {
  switch (code) {
    case Errc::invalid_argument: return "invalid_argument";
    case Errc::dimension_mismatch: return "dimension_mismatch";
    case Errc::degenerate_directions: return "degenerate_directions";
    case Errc::degenerate_labels: return "degenerate_labels";
    case Errc::degenerate_series: return "degenerate_series";
    case Errc::iterations_exceed_dimension: return "iterations_exceed_dimension";
    case Errc::missing_label: return "missing_label";
    case Errc::infeasible: return "infeasible";
    case Errc::bad_magic: return "bad_magic";
    case Errc::version_mismatch: return "version_mismatch";
    case Errc::truncated: return "truncated";
    case Errc::invalid_record: return "invalid_record";
    case Errc::io: return "io";
    case Errc::stale_input: return "stale_input";
    case Errc::output_mismatch: return "output_mismatch";
  }
  return "unknown";
}

}  // namespace nullguard
