#pragma once

#include <chrono>
#include <condition_variable>
#include <cstdint>
#include <deque>
#include <mutex>
#include <optional>
#include <vector>

#include "deskgrid/trajectory.hpp"

namespace deskgrid {

struct ReplayConfig {
  std::size_t capacity = 256;  // trajectories
  std::int64_t staleness_limit = 1;
  std::size_t min_steps = 128;
  std::size_t max_steps = 512;
};

struct ReplayCounters {
  std::uint64_t pushes = 0;
  std::uint64_t drained = 0;
  std::uint64_t evicted_capacity = 0;
  std::uint64_t evicted_stale = 0;
  std::uint64_t rejected_stale = 0;
  std::uint64_t rejected_capacity = 0;
  std::uint64_t batches = 0;

  std::uint64_t evictions() const { return evicted_capacity + evicted_stale; }
  std::uint64_t rejections() const { return rejected_stale + rejected_capacity; }
};

/// Trajectories drained together; whole task groups only.
struct Batch {
  std::vector<Trajectory> trajectories;
  std::size_t total_steps() const;
  bool empty() const { return trajectories.empty(); }
};

/// Bounded FIFO of trajectories between rollout producers and the trainer.
/// Every entry stays within `staleness_limit` versions of the current policy.
/// All members are linearizable.
class ReplayBuffer {
 public:
  explicit ReplayBuffer(ReplayConfig config = {});

  /// Appends a reward-assigned trajectory unless it is stale. At capacity the
  /// oldest group is evicted whole; a push that would split its own group is
  /// rejected instead.
  bool push(Trajectory traj);
  /// Pushes every trajectory under one lock, so a drain never sees part of
  /// the set. A group larger than the capacity is rejected whole. Returns the
  /// number accepted.
  std::size_t push_all(std::vector<Trajectory> trajs);

  /// Takes whole groups in FIFO order until at least `min_steps` steps are
  /// collected, then keeps taking groups while the total stays within
  /// `max_steps`. A single group larger than `max_steps` is returned alone.
  /// Returns an empty batch when fewer than `min_steps` steps are buffered.
  Batch try_drain(std::size_t min_steps, std::size_t max_steps);
  Batch try_drain() { return try_drain(config_.min_steps, config_.max_steps); }
  /// Blocks until `min_steps` are buffered, the buffer is closed, or the
  /// timeout elapses (then returns an empty batch).
  Batch drain_batch(std::size_t min_steps, std::size_t max_steps, std::chrono::milliseconds timeout);

  /// Raises the current policy version and evicts entries now beyond the
  /// staleness limit. Returns the number evicted.
  std::size_t advance_version(std::int64_t new_version);

  void close();
  bool closed() const;

  std::int64_t current_version() const;
  std::size_t size() const;
  std::size_t buffered_steps() const;
  ReplayCounters counters() const;
  const ReplayConfig& config() const { return config_; }

 private:
  bool push_locked(Trajectory traj);
  std::size_t steps_locked() const;
  Batch take_locked(std::size_t min_steps, std::size_t max_steps);

  ReplayConfig config_;
  mutable std::mutex mu_;
  std::condition_variable cv_;
  std::deque<Trajectory> entries_;
  std::int64_t version_ = 0;
  bool closed_ = false;
  ReplayCounters counters_;
};

}  // namespace deskgrid
