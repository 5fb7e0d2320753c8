// Copyright (c) the storwin developers.
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <stdexcept>
#include <string>

namespace storwin {

/// Every failure the library reports carries one of these codes.
enum class errc {
  invalid_argument,
  invalid_hint,
  storage_path_invalid,
  hybrid_split_invalid,
  allocation_failed,
  epoch_open,
  flush_failed,
  io_failure,
  sidecar_missing,
  sidecar_corrupt,
  sidecar_conflict,
  length_mismatch,
  out_of_range,
  use_after_close,
  no_epoch,
  range_error,
  unknown_rank,
  bad_elem_size,
  lock_held,
  not_locked,
  reserved_key,
  size_overflow,
  validation_failed,
  timeout,
  rank_failure,
  harness_aborted,
};

inline const char *to_string(errc c) {
  switch (c) {
    case errc::invalid_argument: return "invalid_argument";
    case errc::invalid_hint: return "invalid_hint";
    case errc::storage_path_invalid: return "storage_path_invalid";
    case errc::hybrid_split_invalid: return "hybrid_split_invalid";
    case errc::allocation_failed: return "allocation_failed";
    case errc::epoch_open: return "epoch_open";
    case errc::flush_failed: return "flush_failed";
    case errc::io_failure: return "io_failure";
    case errc::sidecar_missing: return "sidecar_missing";
    case errc::sidecar_corrupt: return "sidecar_corrupt";
    case errc::sidecar_conflict: return "sidecar_conflict";
    case errc::length_mismatch: return "length_mismatch";
    case errc::out_of_range: return "out_of_range";
    case errc::use_after_close: return "use_after_close";
    case errc::no_epoch: return "no_epoch";
    case errc::range_error: return "range_error";
    case errc::unknown_rank: return "unknown_rank";
    case errc::bad_elem_size: return "bad_elem_size";
    case errc::lock_held: return "lock_held";
    case errc::not_locked: return "not_locked";
    case errc::reserved_key: return "reserved_key";
    case errc::size_overflow: return "size_overflow";
    case errc::validation_failed: return "validation_failed";
    case errc::timeout: return "timeout";
    case errc::rank_failure: return "rank_failure";
    case errc::harness_aborted: return "harness_aborted";
  }
  return "unknown";
}

class error : public std::runtime_error {
 public:
  error(errc code, const std::string &what)
      : std::runtime_error(std::string(to_string(code)) + ": " + what), code_(code) {}

  errc code() const noexcept { return code_; }

 private:
  errc code_;
};

[[noreturn]] inline void raise(errc code, const std::string &what) { throw error(code, what); }

}  // namespace storwin
