#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace deoccl {

enum class ErrorKind {
  usage,
  config,
  shape_mismatch,
  file_missing,
  decode_failed,
  unsupported_format,
  write_failed,
  empty_input,
  invalid_mask,
  degenerate_region,
  no_face,
  provider_unavailable,
  split_policy,
  checkpoint_corrupt,
  checkpoint_version,
  frozen_group,
  precondition,
  plugin_failure,
  numeric,
};

std::string_view error_kind_name(ErrorKind kind);

// Process exit code for a failure of this kind: 1 usage/config, 2 data, 3 runtime.
int exit_code(ErrorKind kind);

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& message)
      : std::runtime_error(message), kind_(kind) {}

  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

[[noreturn]] inline void fail(ErrorKind kind, const std::string& message) {
  throw Error(kind, message);
}

inline void require(bool condition, ErrorKind kind, const std::string& message) {
  if (!condition) throw Error(kind, message);
}

}  // namespace deoccl
