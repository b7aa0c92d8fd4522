#include <gtest/gtest.h>

#include <map>
#include <set>
#include <thread>

#include "deskgrid/replay.hpp"
#include "deskgrid/common.hpp"

using namespace deskgrid;

namespace {

std::vector<Trajectory> make_group(const std::string& task, std::uint64_t gid, std::int64_t version, std::size_t n,
                                   std::size_t len) {
  std::vector<Trajectory> g(n);
  for (auto& t : g) {
    t.task_id = task;
    t.group_id = gid;
    t.policy_version = version;
    t.complete = true;
    t.steps.resize(len);
  }
  return g;
}

void check_conservation(const ReplayBuffer& b, std::uint64_t drained_by_caller) {
  auto c = b.counters();
  EXPECT_EQ(c.drained, drained_by_caller);
  EXPECT_EQ(c.pushes, c.drained + c.evictions() + c.rejections() + b.size());
}

// Every batch holds each of its groups completely.
void check_whole_groups(const Batch& batch, const std::map<std::pair<std::string, std::uint64_t>, std::size_t>& sizes) {
  std::map<std::pair<std::string, std::uint64_t>, std::size_t> seen;
  for (const auto& t : batch.trajectories) ++seen[{t.task_id, t.group_id}];
  for (const auto& [k, n] : seen) EXPECT_EQ(n, sizes.at(k)) << k.first << "/" << k.second;
}

}  // namespace

TEST(Replay, ConfigValidation) {
  EXPECT_THROW(ReplayBuffer(ReplayConfig{0, 1, 1, 2}), Error);
  EXPECT_THROW(ReplayBuffer(ReplayConfig{4, -1, 1, 2}), Error);
  EXPECT_THROW(ReplayBuffer(ReplayConfig{4, 1, 10, 2}), Error);
}

TEST(Replay, DynamicBatchBounds) {
  ReplayBuffer b(ReplayConfig{64, 1, 10, 20});
  EXPECT_TRUE(b.try_drain().empty());
  b.push_all(make_group("a", 1, 0, 2, 3));  // 6 steps
  EXPECT_TRUE(b.try_drain().empty());
  b.push_all(make_group("b", 2, 0, 2, 3));  // 12
  b.push_all(make_group("c", 3, 0, 2, 3));  // 18
  b.push_all(make_group("d", 4, 0, 2, 3));  // 24
  auto batch = b.try_drain();
  EXPECT_EQ(batch.total_steps(), 18u);
  EXPECT_EQ(b.buffered_steps(), 6u);
  b.push_all(make_group("big", 5, 0, 4, 10));  // 40 > max_steps
  auto big = b.try_drain();
  // "d" leaves on its own: adding "big" would pass max_steps.
  EXPECT_EQ(big.total_steps(), 6u);
  EXPECT_EQ(big.trajectories.size(), 2u);
  auto lone = b.try_drain();
  EXPECT_EQ(lone.total_steps(), 40u);
  check_conservation(b, 2 * 3 + 2 + 4);
}

TEST(Replay, StalenessBound) {
  ReplayBuffer b(ReplayConfig{64, 1, 1, 1000});
  b.push_all(make_group("a", 1, 0, 2, 1));
  b.advance_version(1);
  EXPECT_EQ(b.size(), 2u);
  b.push_all(make_group("b", 2, 1, 2, 1));
  EXPECT_EQ(b.advance_version(2), 2u);
  EXPECT_FALSE(b.push(make_group("c", 3, 0, 1, 1)[0]));
  for (const auto& t : b.try_drain().trajectories) EXPECT_LE(b.current_version() - t.policy_version, 1);
  auto c = b.counters();
  EXPECT_EQ(c.evicted_stale, 2u);
  EXPECT_EQ(c.rejected_stale, 1u);
  try {
    b.advance_version(1);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), Errc::kVersionRegression);
  }
}

TEST(Replay, CapacityEvictsOldestGroupWhole) {
  ReplayBuffer b(ReplayConfig{5, 1, 1, 100});
  b.push_all(make_group("a", 1, 0, 3, 1));
  b.push_all(make_group("b", 2, 0, 2, 1));
  b.push_all(make_group("c", 3, 0, 2, 1));  // evicts all of "a"
  EXPECT_EQ(b.size(), 4u);
  EXPECT_EQ(b.counters().evicted_capacity, 3u);
  EXPECT_EQ(b.push_all(make_group("huge", 4, 0, 6, 1)), 0u);
  EXPECT_EQ(b.counters().rejected_capacity, 6u);
  check_conservation(b, 0);
}

TEST(Replay, RandomizedInvariants) {
  Rng rng(12);
  for (int round = 0; round < 50; ++round) {
    ReplayConfig cfg{4 + rng.below(40), static_cast<std::int64_t>(rng.below(3)), 1 + rng.below(20), 0};
    cfg.max_steps = cfg.min_steps + rng.below(30);
    ReplayBuffer b(cfg);
    std::map<std::pair<std::string, std::uint64_t>, std::size_t> sizes;
    std::uint64_t drained = 0, gid = 0;
    std::int64_t version = 0;
    for (int op = 0; op < 200; ++op) {
      switch (rng.below(3)) {
        case 0: {
          auto task = std::string(1, static_cast<char>('a' + rng.below(5)));
          std::int64_t v = std::max<std::int64_t>(0, version - static_cast<std::int64_t>(rng.below(3)));
          auto g = make_group(task, ++gid, v, 1 + rng.below(6), 1 + rng.below(5));
          sizes[{task, gid}] = g.size();
          b.push_all(g);
          break;
        }
        case 1: {
          auto batch = b.try_drain();
          drained += batch.trajectories.size();
          check_whole_groups(batch, sizes);
          for (const auto& t : batch.trajectories) EXPECT_LE(version - t.policy_version, cfg.staleness_limit);
          break;
        }
        default:
          version += static_cast<std::int64_t>(rng.below(2));
          b.advance_version(version);
      }
      EXPECT_LE(b.size(), cfg.capacity);
    }
    check_conservation(b, drained);
  }
}

TEST(Replay, ConcurrentProducersOneConsumer) {
  ReplayBuffer b(ReplayConfig{4096, 1, 16, 64});
  std::vector<std::thread> producers;
  for (int p = 0; p < 4; ++p)
    producers.emplace_back([&, p] {
      for (int g = 0; g < 50; ++g)
        b.push_all(make_group("t" + std::to_string(p), static_cast<std::uint64_t>(p * 1000 + g), 0, 4, 2));
    });
  std::size_t got = 0;
  std::thread consumer([&] {
    while (true) {
      auto batch = b.drain_batch(16, 64, std::chrono::milliseconds(200));
      if (batch.empty() && b.closed()) break;
      std::map<std::uint64_t, int> per;
      for (const auto& t : batch.trajectories) ++per[t.group_id];
      for (auto [g, n] : per) EXPECT_EQ(n, 4);
      got += batch.trajectories.size();
    }
  });
  for (auto& t : producers) t.join();
  while (b.buffered_steps() >= 16) std::this_thread::sleep_for(std::chrono::milliseconds(5));
  b.close();
  consumer.join();
  EXPECT_EQ(got + b.size(), 800u);
  check_conservation(b, got);
}

TEST(Replay, BlockingDrainTimesOut) {
  ReplayBuffer b;
  auto t0 = std::chrono::steady_clock::now();
  EXPECT_TRUE(b.drain_batch(1, 10, std::chrono::milliseconds(50)).empty());
  EXPECT_GE(std::chrono::steady_clock::now() - t0, std::chrono::milliseconds(45));
}
