// Copyright (c) the storwin developers.
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <optional>
#include <sstream>
#include <string>

#include <fcntl.h>
#include <unistd.h>

#include <storwin/error.hpp>

namespace storwin {

/// Metadata written next to every window data file, enabling validated
/// reattachment after a crash. Plain ASCII key=value lines; unknown lines
/// are ignored on read.
struct window_sidecar {
  static constexpr const char *magic = "SWIN1";

  std::uint64_t size_bytes = 0;
  std::uint64_t disp_unit = 1;
  std::uint64_t file_offset = 0;
  std::uint64_t last_sync_epoch = 0;

  static std::filesystem::path path_for(const std::filesystem::path &data_path) {
    return std::filesystem::path(data_path.string() + ".winmeta");
  }

  void store(const std::filesystem::path &data_path) const {
    const auto meta = path_for(data_path);
    std::ostringstream out;
    out << "magic=" << magic << "\n"
        << "size_bytes=" << size_bytes << "\n"
        << "disp_unit=" << disp_unit << "\n"
        << "file_offset=" << file_offset << "\n"
        << "last_sync_epoch=" << last_sync_epoch << "\n";
    const std::string text = out.str();

    int fd = ::open(meta.c_str(), O_WRONLY | O_CREAT | O_TRUNC, 0644);
    if (fd < 0) raise(errc::io_failure, "cannot write sidecar " + meta.string());
    ssize_t n = ::write(fd, text.data(), text.size());
    if (n != static_cast<ssize_t>(text.size())) {
      ::close(fd);
      raise(errc::io_failure, "short write to sidecar " + meta.string());
    }
    ::fsync(fd);
    ::close(fd);
  }

  static window_sidecar load(const std::filesystem::path &data_path) {
    const auto meta = path_for(data_path);
    std::ifstream in(meta);
    if (!in) raise(errc::sidecar_missing, "no sidecar at " + meta.string());

    window_sidecar sc;
    bool magic_seen = false;
    std::string line;
    while (std::getline(in, line)) {
      const auto eq = line.find('=');
      if (eq == std::string::npos) continue;
      const std::string key = line.substr(0, eq);
      const std::string value = line.substr(eq + 1);
      if (key == "magic") {
        if (value != magic) raise(errc::sidecar_corrupt, "bad magic in " + meta.string());
        magic_seen = true;
      } else if (key == "size_bytes") {
        sc.size_bytes = parse_field(value, meta);
      } else if (key == "disp_unit") {
        sc.disp_unit = parse_field(value, meta);
      } else if (key == "file_offset") {
        sc.file_offset = parse_field(value, meta);
      } else if (key == "last_sync_epoch") {
        sc.last_sync_epoch = parse_field(value, meta);
      }
      // unknown keys ignored
    }
    if (!magic_seen) raise(errc::sidecar_corrupt, "missing magic in " + meta.string());
    return sc;
  }

  static std::optional<window_sidecar> try_load(const std::filesystem::path &data_path) {
    if (!std::filesystem::exists(path_for(data_path))) return std::nullopt;
    try {
      return load(data_path);
    } catch (const error &) {
      return std::nullopt;
    }
  }

 private:
  static std::uint64_t parse_field(const std::string &value, const std::filesystem::path &meta) {
    try {
      std::size_t pos = 0;
      const std::uint64_t v = std::stoull(value, &pos);
      if (pos != value.size()) throw std::invalid_argument(value);
      return v;
    } catch (const std::exception &) {
      raise(errc::sidecar_corrupt, "bad numeric field in " + meta.string() + ": '" + value + "'");
    }
  }
};

}  // namespace storwin
