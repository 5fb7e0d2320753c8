// Copyright (c) the storwin developers.
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <cstring>
#include <memory>
#include <mutex>
#include <span>
#include <vector>

#include <storwin/error.hpp>
#include <storwin/runtime.hpp>
#include <storwin/window.hpp>

namespace storwin {

enum class rma_op { put, get, accumulate };
enum class accumulate_op { sum, replace };

/// One one-sided operation descriptor. target_disp counts in the *target's*
/// displacement units; count = 0 is a legal no-op.
struct rma_request {
  rma_op op = rma_op::put;
  accumulate_op combiner = accumulate_op::sum;
  int target_rank = 0;
  std::uint64_t target_disp = 0;
  std::uint32_t elem_size = 1;
  std::uint64_t count = 0;
  const std::byte *origin = nullptr;  // put / accumulate source
  std::byte *origin_out = nullptr;    // get destination
};

namespace detail {

/// Validates rank, epoch and range under the runtime lock and returns the
/// target window plus the resolved byte offset.
inline std::pair<std::shared_ptr<window>, std::uint64_t> resolve_target(
    rank_context &ctx, window &win, int target_rank, std::uint64_t target_disp,
    std::uint64_t nbytes) {
  runtime &rt = ctx.rt();
  std::unique_lock lk(rt.mu());
  rt.check_abort_locked();
  if (target_rank < 0 || target_rank >= rt.size()) {
    raise(errc::unknown_rank, "target rank " + std::to_string(target_rank));
  }
  auto *group = rt.find_group_locked(win.win_id());
  if (!group) raise(errc::invalid_argument, "window not registered");

  auto &st = win.sync();
  const bool lock_epoch = st.held_locks.count(target_rank) != 0;
  if (!st.fence_open && !lock_epoch) {
    raise(errc::no_epoch, "RMA outside any fence or lock epoch");
  }

  auto target = group->members[static_cast<std::size_t>(target_rank)];
  const std::uint64_t offset = target_disp * target->disp_unit();
  if (offset + nbytes > target->size_bytes()) {
    raise(errc::range_error, "target range [" + std::to_string(offset) + ", +" +
                                 std::to_string(nbytes) + ") exceeds window size " +
                                 std::to_string(target->size_bytes()));
  }
  if (!lock_epoch) ++st.unfenced_ops;
  return {std::move(target), offset};
}

}  // namespace detail

inline void put(rank_context &ctx, window &win, int target_rank, std::uint64_t target_disp,
                std::span<const std::byte> origin) {
  auto [target, offset] = detail::resolve_target(ctx, win, target_rank, target_disp, origin.size());
  if (origin.empty()) return;
  target->write_local(offset, origin);
}

inline void get(rank_context &ctx, window &win, int target_rank, std::uint64_t target_disp,
                std::span<std::byte> origin) {
  auto [target, offset] = detail::resolve_target(ctx, win, target_rank, target_disp, origin.size());
  if (origin.empty()) return;
  target->read_local(offset, origin);
}

/// Element-wise target ← target ⊕ origin, atomic per element with respect to
/// other accumulates on the same window. Sum interprets elements as
/// two's-complement integers of elem_size ∈ {4, 8}; replace copies raw bytes.
inline void accumulate(rank_context &ctx, window &win, int target_rank, std::uint64_t target_disp,
                       accumulate_op op, std::uint32_t elem_size,
                       std::span<const std::byte> origin) {
  if (elem_size != 4 && elem_size != 8) {
    raise(errc::bad_elem_size, "elem_size must be 4 or 8, got " + std::to_string(elem_size));
  }
  if (origin.size() % elem_size != 0) {
    raise(errc::bad_elem_size, "origin length is not a multiple of elem_size");
  }
  auto [target, offset] = detail::resolve_target(ctx, win, target_rank, target_disp, origin.size());
  if (origin.empty()) return;

  std::lock_guard acc_lk(target->accumulate_mutex());
  if (op == accumulate_op::replace) {
    target->write_local(offset, origin);
    return;
  }
  std::vector<std::byte> current(origin.size());
  target->read_local(offset, current);
  if (elem_size == 8) {
    for (std::size_t i = 0; i < origin.size(); i += 8) {
      std::uint64_t a = 0, b = 0;
      std::memcpy(&a, current.data() + i, 8);
      std::memcpy(&b, origin.data() + i, 8);
      a += b;
      std::memcpy(current.data() + i, &a, 8);
    }
  } else {
    for (std::size_t i = 0; i < origin.size(); i += 4) {
      std::uint32_t a = 0, b = 0;
      std::memcpy(&a, current.data() + i, 4);
      std::memcpy(&b, origin.data() + i, 4);
      a += b;
      std::memcpy(current.data() + i, &a, 4);
    }
  }
  target->write_local(offset, current);
}

/// Active-target synchronization: collective over the window's group; all
/// RMA issued by all ranks before their fence is complete and visible on
/// return. Every fence closes the previous epoch and opens a new one.
inline void fence(rank_context &ctx, window &win) {
  runtime &rt = ctx.rt();
  std::unique_lock lk(rt.mu());
  rt.check_abort_locked();
  auto *group = rt.find_group_locked(win.win_id());
  if (!group) raise(errc::invalid_argument, "window not registered");

  const std::uint64_t gen = group->fence_gen;
  if (++group->fence_arrived == rt.size()) {
    group->fence_arrived = 0;
    ++group->fence_gen;
    for (auto &member : group->members) {
      member->sync().fence_open = true;
      member->sync().unfenced_ops = 0;
    }
    rt.notify_all_locked();
  } else {
    rt.wait_locked(lk, [&] { return group->fence_gen != gen; });
  }
}

/// Passive-target lock on target_rank's window entry. Exclusive locks are
/// mutually exclusive; shared locks coexist. Blocks until grantable.
inline void lock(rank_context &ctx, window &win, int target_rank, bool exclusive) {
  runtime &rt = ctx.rt();
  std::unique_lock lk(rt.mu());
  rt.check_abort_locked();
  if (target_rank < 0 || target_rank >= rt.size()) {
    raise(errc::unknown_rank, "target rank " + std::to_string(target_rank));
  }
  auto *group = rt.find_group_locked(win.win_id());
  if (!group) raise(errc::invalid_argument, "window not registered");
  if (win.sync().held_locks.count(target_rank) != 0) {
    raise(errc::lock_held, "lock already held on rank " + std::to_string(target_rank));
  }

  auto target = group->members[static_cast<std::size_t>(target_rank)];
  rt.wait_locked(lk, [&] {
    auto &ts = target->sync();
    if (ts.exclusive_holder != -1) return false;
    return !exclusive || ts.shared_holders.empty();
  });
  auto &ts = target->sync();
  if (exclusive) {
    ts.exclusive_holder = ctx.rank();
  } else {
    ts.shared_holders.insert(ctx.rank());
  }
  win.sync().held_locks[target_rank] = exclusive;
}

/// Completes all RMA issued to target_rank under the held lock. With the
/// eager engine this is a visibility fence; it validates the lock is held.
inline void flush(rank_context &ctx, window &win, int target_rank) {
  runtime &rt = ctx.rt();
  std::lock_guard lk(rt.mu());
  rt.check_abort_locked();
  if (win.sync().held_locks.count(target_rank) == 0) {
    raise(errc::not_locked, "no lock held on rank " + std::to_string(target_rank));
  }
}

/// Flush semantics plus lock release.
inline void unlock(rank_context &ctx, window &win, int target_rank) {
  runtime &rt = ctx.rt();
  std::lock_guard lk(rt.mu());
  rt.check_abort_locked();
  auto it = win.sync().held_locks.find(target_rank);
  if (it == win.sync().held_locks.end()) {
    raise(errc::not_locked, "no lock held on rank " + std::to_string(target_rank));
  }
  const bool exclusive = it->second;
  win.sync().held_locks.erase(it);

  if (auto *group = rt.find_group_locked(win.win_id())) {
    auto &ts = group->members[static_cast<std::size_t>(target_rank)]->sync();
    if (exclusive) {
      ts.exclusive_holder = -1;
    } else {
      ts.shared_holders.erase(ctx.rank());
    }
  }
  rt.notify_all_locked();
}

inline void execute(rank_context &ctx, window &win, const rma_request &req) {
  const std::uint64_t nbytes = req.count * req.elem_size;
  switch (req.op) {
    case rma_op::put:
      put(ctx, win, req.target_rank, req.target_disp, {req.origin, nbytes});
      return;
    case rma_op::get:
      get(ctx, win, req.target_rank, req.target_disp, {req.origin_out, nbytes});
      return;
    case rma_op::accumulate:
      accumulate(ctx, win, req.target_rank, req.target_disp, req.combiner, req.elem_size,
                 {req.origin, nbytes});
      return;
  }
}

}  // namespace storwin
