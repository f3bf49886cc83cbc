#include <doctest/doctest.h>

#include <algorithm>
#include <set>
#include <vector>

#include "endocss/error.hpp"
#include "endocss/sampler.hpp"

using namespace endocss;

TEST_CASE("compute_ratio worked example and rounding") {
  const BatchPlan plan = compute_ratio(400, 40, 16);
  CHECK(plan.s_current == 15);
  CHECK(plan.s_replay == 1);

  // 10 * 1 / (1 + 3) = 2.5 rounds away from zero.
  CHECK(compute_ratio(3, 1, 10).s_replay == 3);
  // Replay floor: tiny replay share still gets one slot.
  CHECK(compute_ratio(100000, 1, 16).s_replay == 1);
  // Replay ceiling: current data keeps at least one slot.
  CHECK(compute_ratio(1, 100000, 16).s_replay == 15);
  // No replay at all.
  CHECK(compute_ratio(50, 0, 16).s_replay == 0);
  CHECK(compute_ratio(50, 0, 16).s_current == 16);
}

TEST_CASE("compute_ratio input validation") {
  CHECK_THROWS_AS(compute_ratio(0, 10, 16), ValidationError);
  CHECK_THROWS_AS(compute_ratio(10, -1, 16), ValidationError);
  CHECK_THROWS_AS(compute_ratio(10, 10, 1), ValidationError);
  CHECK_THROWS_AS(compute_ratio(10, 0, 0), ValidationError);
}

TEST_CASE("epoch covers each current sample exactly once") {
  const BatchPlan plan{15, 1};
  BatchSampler sampler(150, 40, plan, 99);
  std::vector<int> seen(150, 0);
  long batches = 0;
  while (const auto batch = sampler.next()) {
    CHECK(batch->current.size() == 15);
    CHECK(batch->replay.size() == 1);
    CHECK_FALSE(batch->padded);
    for (const long i : batch->current) ++seen[static_cast<std::size_t>(i)];
    CHECK(batch->replay[0] >= 0);
    CHECK(batch->replay[0] < 40);
    ++batches;
  }
  CHECK(batches == 10);
  CHECK(sampler.batches_per_epoch() == 10);
  for (const int count : seen) CHECK(count == 1);
}

TEST_CASE("short epochs pad by wrapping and say so") {
  BatchSampler sampler(10, 5, BatchPlan{4, 2}, 3);
  std::vector<bool> padded_flags;
  std::vector<long> all;
  while (const auto batch = sampler.next()) {
    padded_flags.push_back(batch->padded);
    all.insert(all.end(), batch->current.begin(), batch->current.end());
  }
  CHECK(padded_flags.size() == 3);  // ceil(10 / 4)
  CHECK_FALSE(padded_flags[0]);
  CHECK_FALSE(padded_flags[1]);
  CHECK(padded_flags[2]);
  CHECK(all.size() == 12);
  std::set<long> unique(all.begin(), all.end());
  CHECK(unique.size() == 10);  // every sample still appears
}

TEST_CASE("same seed reproduces the same batches") {
  BatchSampler a(37, 9, BatchPlan{6, 2}, 1234);
  BatchSampler b(37, 9, BatchPlan{6, 2}, 1234);
  for (int epoch = 0; epoch < 3; ++epoch) {
    if (epoch > 0) {
      a.start_epoch();
      b.start_epoch();
    }
    while (true) {
      const auto ba = a.next();
      const auto bb = b.next();
      CHECK(ba.has_value() == bb.has_value());
      if (!ba) break;
      CHECK(ba->current == bb->current);
      CHECK(ba->replay == bb->replay);
    }
  }
}

TEST_CASE("epochs reshuffle the permutation") {
  BatchSampler sampler(64, 0, BatchPlan{64, 0}, 7);
  const auto first = sampler.next();
  REQUIRE(first.has_value());
  sampler.start_epoch();
  const auto second = sampler.next();
  REQUIRE(second.has_value());
  CHECK(first->current != second->current);
}

TEST_CASE("sampler rejects inconsistent plans") {
  CHECK_THROWS_AS(BatchSampler(0, 0, BatchPlan{4, 0}, 1), ValidationError);
  CHECK_THROWS_AS(BatchSampler(10, 0, BatchPlan{4, 2}, 1), ValidationError);
  CHECK_THROWS_AS(BatchSampler(10, 5, BatchPlan{0, 4}, 1), ValidationError);
}
