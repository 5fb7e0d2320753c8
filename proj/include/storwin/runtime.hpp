// Copyright (c) the storwin developers.
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <condition_variable>
#include <cstdint>
#include <cstdlib>
#include <deque>
#include <exception>
#include <filesystem>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <thread>
#include <type_traits>
#include <variant>
#include <vector>

#include <storwin/error.hpp>
#include <storwin/flush_policy.hpp>
#include <storwin/hints.hpp>
#include <storwin/window.hpp>

namespace storwin {

inline int env_int(const char *name, int fallback) {
  const char *v = std::getenv(name);
  if (!v || !*v) return fallback;
  char *end = nullptr;
  const long parsed = std::strtol(v, &end, 10);
  if (end == v || *end != '\0' || parsed <= 0) return fallback;
  return static_cast<int>(parsed);
}

inline int default_watchdog_ms() { return env_int("STORWIN_WATCHDOG_MS", 30000); }
inline int default_rank_count() { return env_int("STORWIN_RANKS", 1); }

struct harness_options {
  int watchdog_ms = default_watchdog_ms();
  flush_policy policy = flush_policy::defaults();
};

class runtime;

/// Handle identifying one rank inside a harness run. Used by exactly one
/// execution context.
class rank_context {
 public:
  int rank() const { return rank_; }
  int group_size() const;
  runtime &rt() const { return *rt_; }

 private:
  friend class runtime;
  rank_context(int rank, runtime *rt) : rank_(rank), rt_(rt) {}
  int rank_;
  runtime *rt_;
  std::uint64_t alloc_seq_ = 0;
};

/// Shared state for one group of in-process ranks: the window registry,
/// collective rendezvous, the ordered per-pair mailbox transport, and the
/// abort machinery the watchdog uses to unstick mismatched collectives.
///
/// All blocking collective waits go through one mutex/condition pair so a
/// watchdog abort can wake every stuck rank.
class runtime {
 public:
  runtime(int nranks, harness_options opts = {}) : nranks_(nranks), opts_(std::move(opts)) {
    if (nranks < 1) raise(errc::invalid_argument, "need at least one rank");
    mail_.resize(static_cast<std::size_t>(nranks));
    finished_.assign(static_cast<std::size_t>(nranks), 0);
  }

  runtime(const runtime &) = delete;
  runtime &operator=(const runtime &) = delete;

  int size() const { return nranks_; }
  const harness_options &options() const { return opts_; }
  rank_context make_context(int rank) { return rank_context(rank, this); }

  // --- collective window allocation ------------------------------------

  std::shared_ptr<window> allocate(rank_context &ctx, std::uint64_t size_bytes,
                                   std::uint64_t disp_unit, const hint_set &hints) {
    const std::uint64_t round_key = ctx.alloc_seq_++;
    const int me = ctx.rank();

    std::exception_ptr declare_error;
    allocation_kind kind = memory_kind{};
    flush_policy policy = opts_.policy;
    try {
      kind = parse_allocation_kind(hints);
      policy.mode = parse_sync_mode(hints, policy.mode);
    } catch (...) {
      declare_error = std::current_exception();
    }

    std::unique_lock lk(mu_);
    check_abort_locked();
    alloc_round &r = touch_round_locked(round_key);
    r.sizes[me] = size_bytes;
    r.kinds[me] = kind;
    if (++r.declared == nranks_) {
      resolve_shared_paths_locked(r);
      cv_.notify_all();
    } else {
      wait_locked(lk, [&] { return r.declared == nranks_; });
    }
    kind = r.kinds[me];

    // Backing creation happens outside the lock; ranks sharing one file are
    // serialized in rank order so the file grows monotonically.
    if (!declare_error) {
      if (r.wait_for[me] >= 0) {
        wait_locked(lk, [&] { return r.deposited[r.wait_for[me]] != 0; });
      }
      lk.unlock();
      std::shared_ptr<window> win;
      try {
        win = std::make_shared<window>(me, size_bytes, disp_unit, kind, policy);
      } catch (...) {
        declare_error = std::current_exception();
      }
      lk.lock();
      r.wins[me] = std::move(win);
    }
    r.errors[me] = declare_error;
    r.deposited[me] = 1;
    if (++r.created == nranks_) {
      bool any_error = false;
      for (auto &e : r.errors) any_error = any_error || (e != nullptr);
      if (!any_error) {
        r.win_id = next_win_id_++;
        auto &g = registry_[r.win_id];
        g.members = r.wins;
        for (auto &w : g.members) w->bind_id(r.win_id);
      }
      r.failed = any_error;
      r.done = true;
      cv_.notify_all();
    } else {
      wait_locked(lk, [&] { return r.done; });
    }

    std::shared_ptr<window> mine = r.wins[me];
    const bool failed = r.failed;
    std::exception_ptr my_error = r.errors[me];
    if (++r.departed == nranks_) alloc_rounds_.erase(round_key);
    lk.unlock();

    if (failed) {
      if (mine) mine->discard_backing();
      if (my_error) std::rethrow_exception(my_error);
      raise(errc::allocation_failed, "collective allocation aborted: a peer rank failed");
    }
    return mine;
  }

  /// Collective deallocation. Raises epoch_open when the caller still has
  /// un-fenced RMA, holds passive locks, or its entry is locked by a peer.
  /// Deregistration happens even when the final flush fails.
  void free(rank_context &ctx, const std::shared_ptr<window> &win) {
    if (!win) raise(errc::invalid_argument, "null window");
    const std::uint64_t id = win->win_id();

    std::unique_lock lk(mu_);
    check_abort_locked();
    auto &st = win->sync();
    if (st.unfenced_ops > 0 || !st.held_locks.empty() || st.exclusive_holder != -1 ||
        !st.shared_holders.empty()) {
      raise(errc::epoch_open, "window " + std::to_string(id) + " has an active epoch");
    }
    auto it = registry_.find(id);
    if (it == registry_.end()) raise(errc::invalid_argument, "window not registered");
    if (++it->second.free_arrived == nranks_) {
      registry_.erase(it);
      cv_.notify_all();
    } else {
      wait_locked(lk, [&] { return registry_.count(id) == 0; });
    }
    lk.unlock();

    win->release(true);
  }

  // --- collectives and transport ---------------------------------------

  void barrier(rank_context &) {
    std::unique_lock lk(mu_);
    check_abort_locked();
    const std::uint64_t gen = barrier_gen_;
    if (++barrier_arrived_ == nranks_) {
      barrier_arrived_ = 0;
      ++barrier_gen_;
      cv_.notify_all();
    } else {
      wait_locked(lk, [&] { return barrier_gen_ != gen; });
    }
  }

  void send(rank_context &ctx, int to, std::string payload) {
    if (to < 0 || to >= nranks_) raise(errc::unknown_rank, "rank " + std::to_string(to));
    std::lock_guard lk(mu_);
    mail_[static_cast<std::size_t>(to)].push_back({ctx.rank(), std::move(payload)});
    cv_.notify_all();
  }

  /// Receives the next message from a specific sender; per-pair FIFO order.
  std::string recv(rank_context &ctx, int from) {
    if (from < 0 || from >= nranks_) raise(errc::unknown_rank, "rank " + std::to_string(from));
    auto &box = mail_[static_cast<std::size_t>(ctx.rank())];
    std::unique_lock lk(mu_);
    check_abort_locked();
    std::string payload;
    wait_locked(lk, [&] {
      for (auto it = box.begin(); it != box.end(); ++it) {
        if (it->from == from) {
          payload = std::move(it->payload);
          box.erase(it);
          return true;
        }
      }
      return false;
    });
    return payload;
  }

  // --- internal surface used by the rma engine --------------------------

  struct window_group {
    std::vector<std::shared_ptr<window>> members;
    int fence_arrived = 0;
    std::uint64_t fence_gen = 0;
    int free_arrived = 0;
  };

  std::mutex &mu() { return mu_; }

  void check_abort_locked() const {
    if (aborted_) raise(errc::harness_aborted, "harness watchdog aborted this run");
  }

  template <class Pred>
  void wait_locked(std::unique_lock<std::mutex> &lk, Pred pred) {
    cv_.wait(lk, [&] { return aborted_ || pred(); });
    check_abort_locked();
  }

  void notify_all_locked() { cv_.notify_all(); }

  window_group *find_group_locked(std::uint64_t win_id) {
    auto it = registry_.find(win_id);
    return it == registry_.end() ? nullptr : &it->second;
  }

  // --- harness bookkeeping ----------------------------------------------

  void note_finished(int rank) {
    std::lock_guard lk(mu_);
    finished_[static_cast<std::size_t>(rank)] = 1;
    ++finished_count_;
    cv_.notify_all();
  }

  bool wait_all_finished(int watchdog_ms) {
    std::unique_lock lk(mu_);
    return cv_.wait_for(lk, std::chrono::milliseconds(watchdog_ms),
                        [&] { return finished_count_ == nranks_; });
  }

  std::vector<int> abort_and_list_unfinished() {
    std::lock_guard lk(mu_);
    aborted_ = true;
    cv_.notify_all();
    std::vector<int> stuck;
    for (int r = 0; r < nranks_; ++r) {
      if (!finished_[static_cast<std::size_t>(r)]) stuck.push_back(r);
    }
    return stuck;
  }

  std::vector<std::uint64_t> registered_window_ids() {
    std::lock_guard lk(mu_);
    std::vector<std::uint64_t> ids;
    ids.reserve(registry_.size());
    for (auto &[id, g] : registry_) ids.push_back(id);
    return ids;
  }

 private:
  struct message {
    int from;
    std::string payload;
  };

  struct alloc_round {
    int declared = 0;
    int created = 0;
    int departed = 0;
    bool done = false;
    bool failed = false;
    std::uint64_t win_id = 0;
    std::vector<std::uint64_t> sizes;
    std::vector<allocation_kind> kinds;
    std::vector<std::shared_ptr<window>> wins;
    std::vector<std::exception_ptr> errors;
    std::vector<int> wait_for;
    std::vector<char> deposited;
  };

  alloc_round &touch_round_locked(std::uint64_t key) {
    alloc_round &r = alloc_rounds_[key];
    if (r.sizes.empty()) {
      const auto n = static_cast<std::size_t>(nranks_);
      r.sizes.assign(n, 0);
      r.kinds.assign(n, memory_kind{});
      r.wins.assign(n, nullptr);
      r.errors.assign(n, nullptr);
      r.wait_for.assign(n, -1);
      r.deposited.assign(n, 0);
    }
    return r;
  }

  /// Several ranks passing one storage_path get disjoint regions at
  /// storage_offset + rank * size_bytes; creation is serialized in rank
  /// order within each group.
  void resolve_shared_paths_locked(alloc_round &r) {
    std::map<std::string, std::vector<int>> groups;
    for (int rank = 0; rank < nranks_; ++rank) {
      const std::filesystem::path *p = nullptr;
      if (auto *s = std::get_if<storage_kind>(&r.kinds[rank])) p = &s->path;
      if (auto *h = std::get_if<hybrid_kind>(&r.kinds[rank])) p = &h->path;
      if (!p || p->empty()) continue;
      std::error_code ec;
      auto norm = std::filesystem::absolute(*p, ec).lexically_normal().string();
      groups[ec ? p->string() : norm].push_back(rank);
    }
    for (auto &[path, ranks] : groups) {
      if (ranks.size() < 2) continue;
      for (std::size_t i = 0; i < ranks.size(); ++i) {
        const int rank = ranks[i];
        const std::uint64_t shift =
            static_cast<std::uint64_t>(rank) * r.sizes[static_cast<std::size_t>(rank)];
        if (auto *s = std::get_if<storage_kind>(&r.kinds[rank])) s->offset += shift;
        if (auto *h = std::get_if<hybrid_kind>(&r.kinds[rank])) h->offset += shift;
        if (i > 0) r.wait_for[rank] = ranks[i - 1];
      }
    }
  }

  int nranks_;
  harness_options opts_;

  std::mutex mu_;
  std::condition_variable cv_;
  bool aborted_ = false;

  int barrier_arrived_ = 0;
  std::uint64_t barrier_gen_ = 0;

  std::uint64_t next_win_id_ = 1;
  std::map<std::uint64_t, window_group> registry_;
  std::map<std::uint64_t, alloc_round> alloc_rounds_;

  std::vector<std::deque<message>> mail_;

  std::vector<char> finished_;
  int finished_count_ = 0;
};

inline int rank_context::group_size() const { return rt_->size(); }

// --- public library calls ------------------------------------------------

inline std::shared_ptr<window> win_allocate(rank_context &ctx, std::uint64_t size_bytes,
                                            std::uint64_t disp_unit,
                                            const hint_set &hints = {}) {
  return ctx.rt().allocate(ctx, size_bytes, disp_unit, hints);
}

inline void win_free(rank_context &ctx, const std::shared_ptr<window> &win) {
  ctx.rt().free(ctx, win);
}

inline void barrier(rank_context &ctx) { ctx.rt().barrier(ctx); }

inline void send(rank_context &ctx, int to, std::string payload) {
  ctx.rt().send(ctx, to, std::move(payload));
}

inline std::string recv(rank_context &ctx, int from) { return ctx.rt().recv(ctx, from); }

// --- harness ---------------------------------------------------------------

template <class T>
struct harness_result {
  struct rank_failure {
    int rank;
    std::string message;
    std::exception_ptr error;
  };

  std::vector<std::optional<T>> results;
  std::vector<rank_failure> failures;
  std::vector<std::uint64_t> leaked_windows;

  bool ok() const { return failures.empty(); }
};

namespace detail {
template <class T>
struct normalized_result {
  using type = T;
};
template <>
struct normalized_result<void> {
  using type = std::monostate;
};
}  // namespace detail

/// Runs entry(rank_context&) on nranks concurrent execution contexts, joins
/// them all, and collects per-rank results and errors. A wall-clock watchdog
/// converts deadlock (e.g. mismatched collectives) into a timeout error
/// naming the ranks still running.
template <class F>
auto spawn_ranks(int nranks, F entry, harness_options opts = harness_options{})
    -> harness_result<typename detail::normalized_result<std::invoke_result_t<F &, rank_context &>>::type> {
  using result_type =
      typename detail::normalized_result<std::invoke_result_t<F &, rank_context &>>::type;

  runtime rt(nranks, opts);
  harness_result<result_type> out;
  out.results.resize(static_cast<std::size_t>(nranks));
  std::mutex fail_mu;

  std::vector<std::thread> threads;
  threads.reserve(static_cast<std::size_t>(nranks));
  for (int rank = 0; rank < nranks; ++rank) {
    threads.emplace_back([&, rank] {
      rank_context ctx = rt.make_context(rank);
      try {
        if constexpr (std::is_void_v<std::invoke_result_t<F &, rank_context &>>) {
          entry(ctx);
          out.results[static_cast<std::size_t>(rank)] = std::monostate{};
        } else {
          out.results[static_cast<std::size_t>(rank)] = entry(ctx);
        }
      } catch (const std::exception &e) {
        std::lock_guard lk(fail_mu);
        out.failures.push_back({rank, e.what(), std::current_exception()});
      } catch (...) {
        std::lock_guard lk(fail_mu);
        out.failures.push_back({rank, "unknown error", std::current_exception()});
      }
      rt.note_finished(rank);
    });
  }

  const bool completed = rt.wait_all_finished(opts.watchdog_ms);
  std::vector<int> stuck;
  if (!completed) stuck = rt.abort_and_list_unfinished();
  for (auto &t : threads) t.join();
  out.leaked_windows = rt.registered_window_ids();

  if (!completed) {
    std::string names;
    for (int r : stuck) names += (names.empty() ? "" : ", ") + std::to_string(r);
    raise(errc::timeout, "watchdog fired after " + std::to_string(opts.watchdog_ms) +
                             " ms; ranks still running: [" + names + "]");
  }
  return out;
}

}  // namespace storwin
