// Copyright (c) the storwin developers.
// SPDX-License-Identifier: Apache-2.0

#include <catch2/catch_amalgamated.hpp>

#include <random>

#include <storwin/hints.hpp>

using namespace storwin;

TEST_CASE("absent alloc_type defaults to memory", "[hints]") {
  CHECK(parse_allocation_kind({}) == allocation_kind{memory_kind{}});
  CHECK(parse_allocation_kind({{"alloc_type", "memory"}}) == allocation_kind{memory_kind{}});
}

TEST_CASE("storage and hybrid hints parse their parameters", "[hints]") {
  auto k = parse_allocation_kind({{"alloc_type", "storage"},
                                  {"storage_path", "w.dat"},
                                  {"storage_offset", "8192"}});
  CHECK(k == allocation_kind{storage_kind{"w.dat", 8192}});

  auto h = parse_allocation_kind({{"alloc_type", "hybrid"},
                                  {"storage_path", "w.dat"},
                                  {"memory_bytes", "512"}});
  CHECK(h == allocation_kind{hybrid_kind{512, "w.dat", 0}});
}

TEST_CASE("storage hints without a path are rejected", "[hints]") {
  CHECK_THROWS_MATCHES(parse_allocation_kind({{"alloc_type", "storage"}}), error,
                       Catch::Matchers::Predicate<error>(
                           [](const error &e) { return e.code() == errc::storage_path_invalid; }));
  CHECK_THROWS_AS(parse_allocation_kind({{"alloc_type", "hybrid"}, {"storage_path", ""}}), error);
}

TEST_CASE("malformed hint values are rejected", "[hints]") {
  auto code = [](auto fn) {
    try {
      fn();
    } catch (const error &e) {
      return e.code();
    }
    return errc::invalid_argument;
  };
  CHECK(code([] { parse_allocation_kind({{"alloc_type", "banana"}}); }) == errc::invalid_hint);
  CHECK(code([] {
          parse_allocation_kind(
              {{"alloc_type", "storage"}, {"storage_path", "w"}, {"storage_offset", "-1"}});
        }) == errc::invalid_hint);
  CHECK(code([] {
          parse_allocation_kind({{"alloc_type", "hybrid"}, {"storage_path", "w"}});
        }) == errc::invalid_hint);
  CHECK(code([] { parse_sync_mode({{"sync_mode", "sometimes"}}, sync_mode::deferred); }) ==
        errc::invalid_hint);
}

TEST_CASE("unknown hint keys are preserved and never change the result", "[hints]") {
  std::mt19937_64 rng(7);
  for (int trial = 0; trial < 50; ++trial) {
    hint_set base;
    const int pick = static_cast<int>(rng() % 3);
    if (pick == 1) {
      base.set("alloc_type", "storage");
      base.set("storage_path", "x.dat");
    } else if (pick == 2) {
      base.set("alloc_type", "hybrid");
      base.set("storage_path", "x.dat");
      base.set("memory_bytes", std::to_string(rng() % 1000));
    }
    const auto plain = parse_allocation_kind(base);

    hint_set noisy = base;
    for (int j = 0; j < 4; ++j) {
      noisy.set("junk_key_" + std::to_string(rng() % 100), std::to_string(rng()));
    }
    CHECK(noisy.size() >= base.size());
    CHECK(parse_allocation_kind(noisy) == plain);
  }
}

TEST_CASE("hint set round trips values", "[hints]") {
  hint_set h;
  h.set("a", "1");
  h.set("a", "2");
  CHECK(h.get("a") == "2");
  CHECK_FALSE(h.get("missing").has_value());
  CHECK(h.contains("a"));
}

TEST_CASE("allocation kinds encode readably", "[hints]") {
  CHECK(encode_allocation_kind(memory_kind{}) == "memory");
  CHECK(encode_allocation_kind(storage_kind{"w.dat", 4}) == "storage path=w.dat offset=4");
  CHECK(encode_allocation_kind(hybrid_kind{8, "w.dat", 0}) ==
        "hybrid memory_bytes=8 path=w.dat offset=0");
}

TEST_CASE("sync_mode hint parses", "[hints]") {
  CHECK(parse_sync_mode({}, sync_mode::deferred) == sync_mode::deferred);
  CHECK(parse_sync_mode({{"sync_mode", "eager"}}, sync_mode::deferred) == sync_mode::eager);
  CHECK(parse_sync_mode({{"sync_mode", "deferred"}}, sync_mode::eager) == sync_mode::deferred);
}
