// Copyright (c) the storwin developers.
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>

#include <storwin/error.hpp>
#include <storwin/hints.hpp>

namespace storwin {

/// Runtime-level stand-in for the kernel's dirty-page writeback knobs.
/// Writers stall once dirty_limit_bytes of unflushed data accumulate; the
/// background flusher starts at background_threshold_bytes and additionally
/// wakes every flush_interval_ms. Mode "eager" flushes every written range
/// synchronously instead of accumulating dirty bytes.
struct flush_policy {
  std::uint64_t dirty_limit_bytes = 0;
  std::uint64_t background_threshold_bytes = 0;
  std::uint32_t flush_interval_ms = 15000;
  sync_mode mode = sync_mode::deferred;

  /// Defaults mirror a stock Linux installation scaled to a configurable
  /// memory budget: 20% dirty cap, 10% background threshold, 15 s wakeup.
  static flush_policy defaults(std::uint64_t memory_budget_bytes = std::uint64_t{1} << 30) {
    flush_policy p;
    p.dirty_limit_bytes = memory_budget_bytes / 5;
    p.background_threshold_bytes = memory_budget_bytes / 10;
    p.flush_interval_ms = 15000;
    p.mode = sync_mode::deferred;
    return p;
  }

  void validate() const {
    if (dirty_limit_bytes == 0 || background_threshold_bytes == 0 || flush_interval_ms == 0) {
      raise(errc::invalid_argument, "flush_policy fields must be positive");
    }
    if (background_threshold_bytes > dirty_limit_bytes) {
      raise(errc::invalid_argument, "background_threshold_bytes exceeds dirty_limit_bytes");
    }
  }
};

}  // namespace storwin
