// Copyright (c) the storwin developers.
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <charconv>
#include <cstdint>
#include <filesystem>
#include <initializer_list>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <utility>
#include <variant>

#include <storwin/error.hpp>

namespace storwin {

/// Key-value allocation hints. Keys are case-sensitive ASCII; unknown keys
/// are preserved and never an error. Recognized keys:
///   alloc_type      "memory" | "storage" | "hybrid"   (default "memory")
///   storage_path    backing file path (storage / hybrid)
///   storage_offset  byte offset into the backing file, non-negative integer
///   memory_bytes    hybrid split point, non-negative integer
///   sync_mode       "deferred" | "eager"
class hint_set {
 public:
  hint_set() = default;
  hint_set(std::initializer_list<std::pair<std::string, std::string>> il) {
    for (auto &e : il) entries_.emplace(e.first, e.second);
  }

  void set(const std::string &key, std::string value) { entries_[key] = std::move(value); }

  std::optional<std::string> get(const std::string &key) const {
    auto it = entries_.find(key);
    if (it == entries_.end()) return std::nullopt;
    return it->second;
  }

  bool contains(const std::string &key) const { return entries_.count(key) != 0; }
  std::size_t size() const { return entries_.size(); }
  auto begin() const { return entries_.begin(); }
  auto end() const { return entries_.end(); }

 private:
  std::map<std::string, std::string> entries_;
};

struct memory_kind {
  friend bool operator==(const memory_kind &, const memory_kind &) = default;
};

struct storage_kind {
  std::filesystem::path path;
  std::uint64_t offset = 0;
  friend bool operator==(const storage_kind &, const storage_kind &) = default;
};

struct hybrid_kind {
  std::uint64_t memory_bytes = 0;
  std::filesystem::path path;
  std::uint64_t offset = 0;
  friend bool operator==(const hybrid_kind &, const hybrid_kind &) = default;
};

/// How a window's bytes are backed: anonymous memory, a file region, or a
/// low-address memory part plus a file-backed remainder.
using allocation_kind = std::variant<memory_kind, storage_kind, hybrid_kind>;

inline std::string encode_allocation_kind(const allocation_kind &kind) {
  if (std::holds_alternative<memory_kind>(kind)) return "memory";
  if (auto *s = std::get_if<storage_kind>(&kind)) {
    return "storage path=" + s->path.string() + " offset=" + std::to_string(s->offset);
  }
  auto &h = std::get<hybrid_kind>(kind);
  return "hybrid memory_bytes=" + std::to_string(h.memory_bytes) + " path=" + h.path.string() +
         " offset=" + std::to_string(h.offset);
}

namespace detail {

inline std::uint64_t parse_hint_uint(const std::string &key, const std::string &value) {
  std::uint64_t out = 0;
  const char *first = value.data();
  const char *last = first + value.size();
  auto [ptr, ec] = std::from_chars(first, last, out);
  if (ec != std::errc() || ptr != last) {
    raise(errc::invalid_hint, "hint '" + key + "' is not a non-negative integer: '" + value + "'");
  }
  return out;
}

}  // namespace detail

/// Resolves a hint set into the backing selection for one rank's window.
/// Unrecognized keys never affect the result. Throws storage_path_invalid
/// when storage/hybrid backing lacks a path, invalid_hint on bad values.
inline allocation_kind parse_allocation_kind(const hint_set &hints) {
  const std::string type = hints.get("alloc_type").value_or("memory");
  if (type == "memory") return memory_kind{};

  if (type != "storage" && type != "hybrid") {
    raise(errc::invalid_hint, "alloc_type must be memory, storage or hybrid, got '" + type + "'");
  }

  const std::string path = hints.get("storage_path").value_or("");
  if (path.empty()) {
    raise(errc::storage_path_invalid, "alloc_type=" + type + " requires a non-empty storage_path");
  }
  std::uint64_t offset = 0;
  if (auto v = hints.get("storage_offset")) offset = detail::parse_hint_uint("storage_offset", *v);

  if (type == "storage") return storage_kind{path, offset};

  auto mem = hints.get("memory_bytes");
  if (!mem) raise(errc::invalid_hint, "alloc_type=hybrid requires memory_bytes");
  return hybrid_kind{detail::parse_hint_uint("memory_bytes", *mem), path, offset};
}

enum class sync_mode { deferred, eager };

inline sync_mode parse_sync_mode(const hint_set &hints, sync_mode fallback) {
  auto v = hints.get("sync_mode");
  if (!v) return fallback;
  if (*v == "deferred") return sync_mode::deferred;
  if (*v == "eager") return sync_mode::eager;
  raise(errc::invalid_hint, "sync_mode must be deferred or eager, got '" + *v + "'");
}

}  // namespace storwin
