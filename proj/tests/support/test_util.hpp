// Copyright (c) the storwin developers.
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <random>
#include <string>
#include <vector>

namespace storwin::test {

/// Self-removing unique directory for a test case's files.
class temp_dir {
 public:
  explicit temp_dir(const std::string &tag) {
    auto base = std::filesystem::temp_directory_path();
    std::mt19937_64 rng(std::random_device{}());
    path_ = base / ("storwin-" + tag + "-" + std::to_string(rng()));
    std::filesystem::create_directories(path_);
  }
  ~temp_dir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  temp_dir(const temp_dir &) = delete;
  temp_dir &operator=(const temp_dir &) = delete;

  const std::filesystem::path &path() const { return path_; }
  std::filesystem::path file(const std::string &name) const { return path_ / name; }

 private:
  std::filesystem::path path_;
};

inline std::vector<std::byte> pattern_bytes(std::uint64_t seed, std::size_t n) {
  std::vector<std::byte> out(n);
  std::mt19937_64 rng(seed);
  for (auto &b : out) b = static_cast<std::byte>(rng() & 0xff);
  return out;
}

inline std::vector<std::byte> read_file_range(const std::filesystem::path &p, std::uint64_t offset,
                                              std::size_t n) {
  std::ifstream in(p, std::ios::binary);
  in.seekg(static_cast<std::streamoff>(offset));
  std::vector<std::byte> out(n);
  in.read(reinterpret_cast<char *>(out.data()), static_cast<std::streamsize>(n));
  out.resize(static_cast<std::size_t>(in.gcount()));
  return out;
}

}  // namespace storwin::test
