#include "deoccl/error.hpp"

namespace deoccl {

std::string_view error_kind_name(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::usage: return "usage";
    case ErrorKind::config: return "config";
    case ErrorKind::shape_mismatch: return "shape mismatch";
    case ErrorKind::file_missing: return "missing file";
    case ErrorKind::decode_failed: return "decode failed";
    case ErrorKind::unsupported_format: return "unsupported format";
    case ErrorKind::write_failed: return "write failed";
    case ErrorKind::empty_input: return "empty input";
    case ErrorKind::invalid_mask: return "invalid mask";
    case ErrorKind::degenerate_region: return "degenerate region";
    case ErrorKind::no_face: return "no face";
    case ErrorKind::provider_unavailable: return "provider unavailable";
    case ErrorKind::split_policy: return "split policy";
    case ErrorKind::checkpoint_corrupt: return "corrupt checkpoint";
    case ErrorKind::checkpoint_version: return "checkpoint version";
    case ErrorKind::frozen_group: return "frozen group";
    case ErrorKind::precondition: return "precondition";
    case ErrorKind::plugin_failure: return "plugin failure";
    case ErrorKind::numeric: return "numeric";
  }
  return "unknown";
}

int exit_code(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::usage:
    case ErrorKind::config:
      return 1;
    case ErrorKind::file_missing:
    case ErrorKind::decode_failed:
    case ErrorKind::unsupported_format:
    case ErrorKind::empty_input:
    case ErrorKind::invalid_mask:
    case ErrorKind::degenerate_region:
    case ErrorKind::no_face:
    case ErrorKind::split_policy:
      return 2;
    default:
      return 3;
  }
}

}  // namespace deoccl
