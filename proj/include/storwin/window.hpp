// Copyright (c) the storwin developers.
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <cstring>
#include <map>
#include <mutex>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include <storwin/error.hpp>
#include <storwin/flush_policy.hpp>
#include <storwin/hints.hpp>
#include <storwin/storage_mapping.hpp>

namespace storwin {

constexpr std::string_view reserved_attr_prefix = "storwin.";
constexpr std::string_view alloc_kind_attr = "storwin.alloc_kind";

/// One rank's exposed region. Backing is anonymous memory, a storage
/// mapping, or both (low addresses [0, memory_bytes) in memory, the
/// remainder file-backed). The allocation kind is cached as the
/// "storwin.alloc_kind" attribute so deallocation can dispatch on it.
class window {
 public:
  window(int rank, std::uint64_t size_bytes, std::uint64_t disp_unit, allocation_kind kind,
         const flush_policy &policy)
      : rank_(rank), size_(size_bytes), disp_unit_(disp_unit), kind_(std::move(kind)) {
    if (disp_unit_ == 0) raise(errc::invalid_argument, "disp_unit must be positive");
    if (size_ > 0 && size_ % disp_unit_ != 0) {
      raise(errc::invalid_argument, "disp_unit must divide size_bytes");
    }

    if (auto *s = std::get_if<storage_kind>(&kind_)) {
      if (s->path.empty()) raise(errc::storage_path_invalid, "storage window needs a path");
      if (size_ > 0) mapping_.emplace(make_mapping(s->path, s->offset, size_, policy));
    } else if (auto *h = std::get_if<hybrid_kind>(&kind_)) {
      if (h->path.empty()) raise(errc::storage_path_invalid, "hybrid window needs a path");
      if (h->memory_bytes >= size_) {
        raise(errc::hybrid_split_invalid, "memory_bytes " + std::to_string(h->memory_bytes) +
                                              " must be < size " + std::to_string(size_));
      }
      split_ = h->memory_bytes;
      memory_.resize(split_);  // zero-initialized
      mapping_.emplace(make_mapping(h->path, h->offset, size_ - split_, policy));
    } else {
      memory_.resize(size_);  // zero-initialized
    }

    attributes_[std::string(alloc_kind_attr)] = encode_allocation_kind(kind_);
  }

  window(const window &) = delete;
  window &operator=(const window &) = delete;

  // --- descriptor -----------------------------------------------------

  std::uint64_t win_id() const { return win_id_; }
  int rank() const { return rank_; }
  std::uint64_t size_bytes() const { return size_; }
  std::uint64_t disp_unit() const { return disp_unit_; }
  const allocation_kind &kind() const { return kind_; }

  /// Called once by the runtime when the collective allocation completes.
  void bind_id(std::uint64_t id) { win_id_ = id; }

  // --- attribute cache ------------------------------------------------

  std::optional<std::string> attr_get(const std::string &key) const {
    auto it = attributes_.find(key);
    if (it == attributes_.end()) return std::nullopt;
    return it->second;
  }

  void attr_set(const std::string &key, std::string value) {
    if (key.empty()) raise(errc::invalid_argument, "attribute key must be non-empty");
    if (key.rfind(reserved_attr_prefix, 0) == 0) {
      raise(errc::reserved_key, "'" + key + "' uses the reserved storwin. prefix");
    }
    attributes_[key] = std::move(value);
  }

  // --- local data access ----------------------------------------------

  void write_local(std::uint64_t offset, std::span<const std::byte> bytes) {
    check_range(offset, bytes.size());
    if (bytes.empty()) return;
    if (!mapping_) {
      std::memcpy(memory_.data() + offset, bytes.data(), bytes.size());
      return;
    }
    const std::uint64_t end = offset + bytes.size();
    if (offset < split_) {
      const std::uint64_t low = std::min(end, split_) - offset;
      std::memcpy(memory_.data() + offset, bytes.data(), low);
    }
    if (end > split_) {
      const std::uint64_t begin = std::max(offset, split_);
      mapping_->write(begin - split_, bytes.subspan(begin - offset));
    }
  }

  void read_local(std::uint64_t offset, std::span<std::byte> out) const {
    check_range(offset, out.size());
    if (out.empty()) return;
    if (!mapping_) {
      std::memcpy(out.data(), memory_.data() + offset, out.size());
      return;
    }
    const std::uint64_t end = offset + out.size();
    if (offset < split_) {
      const std::uint64_t low = std::min(end, split_) - offset;
      std::memcpy(out.data(), memory_.data() + offset, low);
    }
    if (end > split_) {
      const std::uint64_t begin = std::max(offset, split_);
      mapping_->read(begin - split_, out.subspan(begin - offset));
    }
  }

  /// Dirty accounting for direct writes through local_bytes(); no-op for
  /// the memory-backed part.
  void mark_written(std::uint64_t offset, std::uint64_t count) {
    check_range(offset, count);
    if (!mapping_ || count == 0) return;
    const std::uint64_t end = offset + count;
    if (end > split_) {
      const std::uint64_t begin = std::max(offset, split_);
      mapping_->mark_written(begin - split_, end - begin);
    }
  }

  void sync_local(std::uint64_t offset, std::uint64_t count, bool wait) {
    check_range(offset, count);
    if (!mapping_ || count == 0) return;
    const std::uint64_t end = offset + count;
    if (end > split_) {
      const std::uint64_t begin = std::max(offset, split_);
      mapping_->sync_range(begin - split_, end - begin, wait);
    }
  }

  void sync_all_local(bool wait) {
    if (mapping_) mapping_->sync_all(wait);
  }

  /// Contiguous byte view, available for memory and storage backings. A
  /// hybrid window has no single contiguous region.
  std::span<std::byte> local_bytes() {
    if (std::holds_alternative<hybrid_kind>(kind_)) {
      raise(errc::invalid_argument, "hybrid windows expose no contiguous local span");
    }
    if (mapping_) return mapping_->bytes();
    return {memory_.data(), memory_.size()};
  }

  std::uint64_t stall_count() const { return mapping_ ? mapping_->stall_count() : 0; }
  storage_mapping *mapping() { return mapping_ ? &*mapping_ : nullptr; }

  /// Deallocation path: storage-backed parts are flushed (close_with_flush)
  /// when flush is set; the memory part is always released.
  void release(bool flush) {
    if (released_) raise(errc::use_after_close, "window already released");
    released_ = true;
    if (mapping_ && flush) mapping_->close_with_flush();
    mapping_.reset();
    memory_.clear();
    memory_.shrink_to_fit();
  }

  bool released() const { return released_; }

  /// Rollback for an aborted collective allocation: drops the backing and
  /// removes any file this window created.
  void discard_backing() {
    released_ = true;
    if (mapping_) mapping_->unlink_backing();
    mapping_.reset();
    memory_.clear();
    memory_.shrink_to_fit();
  }

  // --- synchronization bookkeeping (owned by the runtime) --------------

  /// Epoch and lock state; guarded by the runtime mutex, not for direct use.
  struct sync_state {
    bool fence_open = false;
    std::uint64_t unfenced_ops = 0;
    std::map<int, bool> held_locks;  // target rank -> exclusive?
    int exclusive_holder = -1;       // rank holding this window's entry exclusively
    std::set<int> shared_holders;
  };
  sync_state &sync() { return sync_; }

  std::mutex &accumulate_mutex() { return acc_mu_; }

 private:
  static storage_mapping make_mapping(const std::filesystem::path &path, std::uint64_t offset,
                                      std::uint64_t length, const flush_policy &policy) {
    try {
      return storage_mapping::create(path, offset, length, policy);
    } catch (const error &e) {
      if (e.code() == errc::invalid_argument) throw;
      raise(errc::allocation_failed, e.what());
    }
  }

  void check_range(std::uint64_t offset, std::uint64_t count) const {
    if (released_) raise(errc::use_after_close, "window already released");
    if (offset + count > size_) {
      raise(errc::out_of_range, "range [" + std::to_string(offset) + ", +" +
                                    std::to_string(count) + ") exceeds window size " +
                                    std::to_string(size_));
    }
  }

  int rank_;
  std::uint64_t size_;
  std::uint64_t disp_unit_;
  allocation_kind kind_;
  std::uint64_t win_id_ = 0;
  std::uint64_t split_ = 0;  // bytes below the hybrid split live in memory_
  std::vector<std::byte> memory_;
  std::optional<storage_mapping> mapping_;
  std::map<std::string, std::string> attributes_;
  bool released_ = false;

  sync_state sync_;
  std::mutex acc_mu_;
};

}  // namespace storwin
