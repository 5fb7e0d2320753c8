// Copyright (c) the storwin developers.
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <condition_variable>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <memory>
#include <mutex>
#include <optional>
#include <span>
#include <thread>
#include <utility>
#include <vector>

#include <fcntl.h>
#include <sys/mman.h>
#include <sys/stat.h>
#include <unistd.h>

#include <storwin/error.hpp>
#include <storwin/flush_policy.hpp>
#include <storwin/sidecar.hpp>

namespace storwin {

/// A file-backed byte region mapped through the OS page cache, with
/// user-space dirty accounting on top.
///
/// Writes land in the mapping immediately and are tracked in 4096-byte
/// chunks. Once dirty_limit_bytes accumulate, the writing call blocks until
/// the background flusher catches up (the documented stall, not an error).
/// A whole-mapping sync with wait=true is the durability point: it advances
/// the sidecar epoch and zeroes the dirty counter. Destruction without
/// close_with_flush intentionally skips the flush so that crash-abandonment
/// leaves only the last synced state recoverable.
class storage_mapping {
 public:
  static constexpr std::uint64_t dirty_chunk_bytes = 4096;

  storage_mapping(storage_mapping &&) noexcept = default;
  storage_mapping &operator=(storage_mapping &&) noexcept = default;
  storage_mapping(const storage_mapping &) = delete;
  storage_mapping &operator=(const storage_mapping &) = delete;
  ~storage_mapping() = default;

  /// Creates (or extends, zero-filled) the file so that
  /// [file_offset, file_offset + length) exists, maps it, and writes a fresh
  /// sidecar with last_sync_epoch = 0. Bytes of a pre-existing file inside
  /// the region are zeroed; a never-written region always reads as zero.
  static storage_mapping create(const std::filesystem::path &path, std::uint64_t file_offset,
                                std::uint64_t length, const flush_policy &policy,
                                std::uint64_t disp_unit = 1) {
    if (length == 0) raise(errc::invalid_argument, "mapping length must be positive");
    policy.validate();

    if (auto sc = window_sidecar::try_load(path)) {
      if (sc->file_offset == file_offset && sc->size_bytes != length) {
        raise(errc::sidecar_conflict, "sidecar for " + path.string() + " records size " +
                                          std::to_string(sc->size_bytes) + " at offset " +
                                          std::to_string(file_offset) + ", requested " +
                                          std::to_string(length));
      }
    }

    auto p = std::make_unique<impl>();
    p->path = path;
    p->file_offset = file_offset;
    p->length = length;
    p->disp_unit = disp_unit;
    p->policy = policy;

    p->fd = ::open(path.c_str(), O_RDWR | O_CREAT, 0644);
    if (p->fd < 0) raise(errc::io_failure, "cannot create " + path.string());

    struct stat st {};
    if (::fstat(p->fd, &st) != 0) raise(errc::io_failure, "fstat failed on " + path.string());
    const std::uint64_t old_size = static_cast<std::uint64_t>(st.st_size);
    const std::uint64_t wanted = file_offset + length;
    if (old_size < wanted && ::ftruncate(p->fd, static_cast<off_t>(wanted)) != 0) {
      raise(errc::io_failure, "cannot extend " + path.string() + " to " + std::to_string(wanted));
    }

    p->map();

    // A re-created region over an existing file must still read as zero.
    if (old_size > file_offset) {
      const std::uint64_t stale = std::min(old_size, wanted) - file_offset;
      std::memset(p->data, 0, stale);
    }

    p->store_sidecar();
    p->start_flusher();
    return storage_mapping(std::move(p));
  }

  /// Reattaches over an existing file + sidecar without modifying any byte.
  /// Everything synced before the previous owner's last whole-mapping sync
  /// is visible bit-exact.
  static storage_mapping attach(const std::filesystem::path &path,
                                std::optional<std::uint64_t> expected_length = std::nullopt,
                                const flush_policy &policy = flush_policy::defaults()) {
    policy.validate();
    const window_sidecar sc = window_sidecar::load(path);
    if (expected_length && *expected_length != sc.size_bytes) {
      raise(errc::length_mismatch, "expected " + std::to_string(*expected_length) +
                                       " bytes, sidecar records " + std::to_string(sc.size_bytes));
    }
    if (sc.size_bytes == 0) raise(errc::sidecar_corrupt, "sidecar records zero size");

    auto p = std::make_unique<impl>();
    p->path = path;
    p->file_offset = sc.file_offset;
    p->length = sc.size_bytes;
    p->disp_unit = sc.disp_unit;
    p->epoch = sc.last_sync_epoch;
    p->policy = policy;

    p->fd = ::open(path.c_str(), O_RDWR);
    if (p->fd < 0) raise(errc::io_failure, "cannot open " + path.string());
    struct stat st {};
    if (::fstat(p->fd, &st) != 0) raise(errc::io_failure, "fstat failed on " + path.string());
    if (static_cast<std::uint64_t>(st.st_size) < sc.file_offset + sc.size_bytes) {
      raise(errc::io_failure, "data file shorter than sidecar records: " + path.string());
    }

    p->map();
    p->start_flusher();
    return storage_mapping(std::move(p));
  }

  void write(std::uint64_t offset, std::span<const std::byte> bytes) {
    check_open();
    check_range(offset, bytes.size());
    if (bytes.empty()) return;
    std::memcpy(p_->data + offset, bytes.data(), bytes.size());
    p_->account_write(offset, bytes.size());
  }

  void read(std::uint64_t offset, std::span<std::byte> out) const {
    check_open();
    check_range(offset, out.size());
    if (out.empty()) return;
    std::memcpy(out.data(), p_->data + offset, out.size());
  }

  /// Dirty-accounting entry point for callers that write through bytes()
  /// directly. Applies the same policy (threshold wakeup, stall at the
  /// dirty limit) as write().
  void mark_written(std::uint64_t offset, std::uint64_t count) {
    check_open();
    check_range(offset, count);
    if (count == 0) return;
    p_->account_write(offset, count);
  }

  /// wait=false initiates an asynchronous flush of the range; wait=true
  /// returns only once the range is durable in the file. A whole-mapping
  /// wait=true sync advances the sidecar epoch and zeroes dirty_bytes.
  void sync_range(std::uint64_t offset, std::uint64_t count, bool wait) {
    check_open();
    check_range(offset, count);
    if (count == 0) return;
    p_->flush_range(offset, count, wait);
  }

  void sync_all(bool wait) { sync_range(0, length(), wait); }

  /// Whole-mapping synchronous flush, then unmap. The file is retained.
  void close_with_flush() {
    check_open();
    try {
      p_->flush_range(0, p_->length, true);
    } catch (const error &e) {
      p_->teardown();
      raise(errc::flush_failed, e.what());
    }
    p_->teardown();
  }

  /// Rollback helper: discards the mapping and removes the data file and
  /// sidecar. Used when a collective allocation aborts.
  void unlink_backing() {
    check_open();
    p_->teardown();
    std::error_code ec;
    std::filesystem::remove(p_->path, ec);
    std::filesystem::remove(window_sidecar::path_for(p_->path), ec);
  }

  /// Raw view of the mapped region.
  std::span<std::byte> bytes() {
    check_open();
    return {p_->data, p_->length};
  }

  const std::filesystem::path &path() const { return p_->path; }
  std::uint64_t file_offset() const { return p_->file_offset; }
  std::uint64_t length() const { return p_->length; }
  std::uint64_t disp_unit() const { return p_->disp_unit; }
  bool is_closed() const { return !p_ || p_->closed; }

  std::uint64_t dirty_bytes() const {
    std::lock_guard lk(p_->mu);
    return p_->dirty_bytes;
  }
  /// Number of write/mark calls that blocked at the dirty limit.
  std::uint64_t stall_count() const {
    std::lock_guard lk(p_->mu);
    return p_->stall_count;
  }
  std::uint64_t flush_passes() const {
    std::lock_guard lk(p_->mu);
    return p_->flush_passes;
  }
  std::uint64_t last_sync_epoch() const {
    std::lock_guard lk(p_->mu);
    return p_->epoch;
  }

 private:
  struct impl {
    std::filesystem::path path;
    std::uint64_t file_offset = 0;
    std::uint64_t length = 0;
    std::uint64_t disp_unit = 1;
    flush_policy policy;
    std::uint64_t epoch = 0;

    int fd = -1;
    std::byte *map_base = nullptr;
    std::size_t map_len = 0;
    std::byte *data = nullptr;

    mutable std::mutex mu;
    std::condition_variable cv_writer;
    std::condition_variable cv_flusher;
    std::vector<std::uint8_t> dirty;
    std::uint64_t dirty_bytes = 0;
    std::uint64_t stall_count = 0;
    std::uint64_t flush_passes = 0;
    bool flusher_wake = false;
    bool stop = false;
    bool closed = false;
    std::thread flusher;

    impl() = default;
    ~impl() { teardown(); }

    std::uint64_t chunk_count() const { return (length + dirty_chunk_bytes - 1) / dirty_chunk_bytes; }
    std::uint64_t chunk_size(std::uint64_t i) const {
      return std::min(dirty_chunk_bytes, length - i * dirty_chunk_bytes);
    }

    void map() {
      const auto page = static_cast<std::uint64_t>(::sysconf(_SC_PAGESIZE));
      const std::uint64_t aligned = file_offset & ~(page - 1);
      const std::uint64_t delta = file_offset - aligned;
      map_len = static_cast<std::size_t>(delta + length);
      void *m = ::mmap(nullptr, map_len, PROT_READ | PROT_WRITE, MAP_SHARED, fd,
                       static_cast<off_t>(aligned));
      if (m == MAP_FAILED) {
        ::close(fd);
        fd = -1;
        raise(errc::io_failure, "mmap failed for " + path.string());
      }
      map_base = static_cast<std::byte *>(m);
      data = map_base + delta;
      dirty.assign(chunk_count(), 0);
    }

    void store_sidecar() const {
      window_sidecar sc;
      sc.size_bytes = length;
      sc.disp_unit = disp_unit;
      sc.file_offset = file_offset;
      sc.last_sync_epoch = epoch;
      sc.store(path);
    }

    void msync_span(std::uint64_t offset, std::uint64_t count, bool wait) const {
      const auto page = static_cast<std::uintptr_t>(::sysconf(_SC_PAGESIZE));
      auto begin = reinterpret_cast<std::uintptr_t>(data + offset);
      const auto end = begin + count;
      begin &= ~(page - 1);
      if (::msync(reinterpret_cast<void *>(begin), end - begin, wait ? MS_SYNC : MS_ASYNC) != 0) {
        raise(errc::io_failure, "msync failed for " + path.string());
      }
    }

    void account_write(std::uint64_t offset, std::uint64_t count) {
      if (policy.mode == sync_mode::eager) {
        msync_span(offset, count, true);
        return;
      }
      std::unique_lock lk(mu);
      const std::uint64_t first = offset / dirty_chunk_bytes;
      const std::uint64_t last = (offset + count - 1) / dirty_chunk_bytes;
      for (std::uint64_t i = first; i <= last; ++i) {
        if (!dirty[i]) {
          dirty[i] = 1;
          dirty_bytes += chunk_size(i);
        }
      }
      if (dirty_bytes >= policy.background_threshold_bytes) {
        flusher_wake = true;
        cv_flusher.notify_one();
      }
      if (dirty_bytes >= policy.dirty_limit_bytes) {
        ++stall_count;
        flusher_wake = true;
        cv_flusher.notify_one();
        cv_writer.wait(lk, [&] { return dirty_bytes < policy.dirty_limit_bytes || stop; });
      }
    }

    void flush_range(std::uint64_t offset, std::uint64_t count, bool wait) {
      {
        std::lock_guard lk(mu);
        const std::uint64_t first = offset / dirty_chunk_bytes;
        const std::uint64_t last = (offset + count - 1) / dirty_chunk_bytes;
        for (std::uint64_t i = first; i <= last; ++i) {
          if (dirty[i]) {
            dirty[i] = 0;
            dirty_bytes -= chunk_size(i);
          }
        }
        cv_writer.notify_all();
      }
      msync_span(offset, count, wait);
      if (wait && offset == 0 && count == length) {
        std::lock_guard lk(mu);
        ++epoch;
        store_sidecar();
      }
    }

    void start_flusher() {
      flusher = std::thread([this] { flusher_loop(); });
    }

    void flusher_loop() {
      std::unique_lock lk(mu);
      while (!stop) {
        cv_flusher.wait_for(lk, std::chrono::milliseconds(policy.flush_interval_ms),
                            [&] { return stop || flusher_wake; });
        if (stop) return;
        flusher_wake = false;
        if (dirty_bytes == 0) continue;

        // Capture and clear, then flush outside the lock; a chunk re-written
        // during the msync is re-marked by the writer and stays dirty.
        std::vector<std::pair<std::uint64_t, std::uint64_t>> ranges;
        const std::uint64_t n = chunk_count();
        for (std::uint64_t i = 0; i < n; ++i) {
          if (!dirty[i]) continue;
          std::uint64_t j = i;
          while (j + 1 < n && dirty[j + 1]) ++j;
          for (std::uint64_t k = i; k <= j; ++k) {
            dirty[k] = 0;
            dirty_bytes -= chunk_size(k);
          }
          const std::uint64_t begin = i * dirty_chunk_bytes;
          const std::uint64_t end = j * dirty_chunk_bytes + chunk_size(j);
          ranges.emplace_back(begin, end - begin);
          i = j;
        }
        ++flush_passes;
        cv_writer.notify_all();

        lk.unlock();
        for (auto &[begin, len] : ranges) msync_span(begin, len, false);
        lk.lock();
      }
    }

    void teardown() {
      if (closed) return;
      {
        std::lock_guard lk(mu);
        stop = true;
        cv_flusher.notify_all();
        cv_writer.notify_all();
      }
      if (flusher.joinable()) flusher.join();
      if (map_base) ::munmap(map_base, map_len);
      map_base = nullptr;
      data = nullptr;
      if (fd >= 0) ::close(fd);
      fd = -1;
      closed = true;
    }
  };

  explicit storage_mapping(std::unique_ptr<impl> p) : p_(std::move(p)) {}

  void check_open() const {
    if (!p_ || p_->closed) raise(errc::use_after_close, "mapping is closed");
  }
  void check_range(std::uint64_t offset, std::uint64_t count) const {
    if (offset + count > p_->length) {
      raise(errc::out_of_range, "range [" + std::to_string(offset) + ", +" +
                                    std::to_string(count) + ") exceeds mapping length " +
                                    std::to_string(p_->length));
    }
  }

  std::unique_ptr<impl> p_;
};

}  // namespace storwin
