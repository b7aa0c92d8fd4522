#include "deskgrid/replay.hpp"

#include "deskgrid/common.hpp"

namespace deskgrid {

std::size_t Batch::total_steps() const {
  std::size_t n = 0;
  for (const auto& t : trajectories) n += t.length();
  return n;
}

ReplayBuffer::ReplayBuffer(ReplayConfig config) : config_(config) {
  if (config_.capacity == 0) throw Error(Errc::kInvalidConfig, "replay capacity must be positive");
  if (config_.staleness_limit < 0) throw Error(Errc::kInvalidConfig, "staleness limit must be >= 0");
  if (config_.min_steps > config_.max_steps) throw Error(Errc::kInvalidConfig, "replay min_steps > max_steps");
}

bool ReplayBuffer::push_locked(Trajectory traj) {
  ++counters_.pushes;
  if (version_ - traj.policy_version > config_.staleness_limit) {
    ++counters_.rejected_stale;
    return false;
  }
  if (entries_.size() >= config_.capacity) {
    const auto& head = entries_.front();
    if (head.group_id == traj.group_id && head.task_id == traj.task_id) {
      ++counters_.rejected_capacity;
      return false;
    }
    std::uint64_t gid = head.group_id;
    std::string tid = head.task_id;
    while (!entries_.empty() && entries_.front().group_id == gid && entries_.front().task_id == tid) {
      entries_.pop_front();
      ++counters_.evicted_capacity;
    }
  }
  entries_.push_back(std::move(traj));
  return true;
}

bool ReplayBuffer::push(Trajectory traj) {
  bool ok;
  {
    std::lock_guard lock(mu_);
    ok = push_locked(std::move(traj));
  }
  cv_.notify_all();
  return ok;
}

std::size_t ReplayBuffer::push_all(std::vector<Trajectory> trajs) {
  std::size_t ok = 0;
  {
    std::lock_guard lock(mu_);
    for (std::size_t i = 0; i < trajs.size();) {
      std::size_t end = i + 1;
      while (end < trajs.size() && trajs[end].group_id == trajs[i].group_id && trajs[end].task_id == trajs[i].task_id)
        ++end;
      if (end - i > config_.capacity) {
        counters_.pushes += end - i;
        counters_.rejected_capacity += end - i;
      } else {
        for (std::size_t k = i; k < end; ++k) ok += push_locked(std::move(trajs[k]));
      }
      i = end;
    }
  }
  cv_.notify_all();
  return ok;
}

std::size_t ReplayBuffer::steps_locked() const {
  std::size_t n = 0;
  for (const auto& t : entries_) n += t.length();
  return n;
}

Batch ReplayBuffer::take_locked(std::size_t min_steps, std::size_t max_steps) {
  Batch batch;
  if (entries_.empty() || steps_locked() < std::max<std::size_t>(min_steps, 1)) return batch;

  // Group boundaries: consecutive runs sharing (task_id, group_id).
  auto group_end = [&](std::size_t start) {
    std::size_t end = start + 1;
    while (end < entries_.size() && entries_[end].group_id == entries_[start].group_id &&
           entries_[end].task_id == entries_[start].task_id)
      ++end;
    return end;
  };
  auto group_steps = [&](std::size_t start, std::size_t end) {
    std::size_t n = 0;
    for (std::size_t i = start; i < end; ++i) n += entries_[i].length();
    return n;
  };

  std::size_t taken = 0, total = 0;
  while (taken < entries_.size()) {
    std::size_t end = group_end(taken);
    std::size_t g = group_steps(taken, end);
    if (total >= min_steps && total + g > max_steps) break;
    if (total > 0 && total + g > max_steps) break;
    taken = end;
    total += g;
    if (total > max_steps) break;  // a lone oversized group
  }
  for (std::size_t i = 0; i < taken; ++i) batch.trajectories.push_back(std::move(entries_[i]));
  entries_.erase(entries_.begin(), entries_.begin() + static_cast<std::ptrdiff_t>(taken));
  counters_.drained += taken;
  ++counters_.batches;
  return batch;
}

Batch ReplayBuffer::try_drain(std::size_t min_steps, std::size_t max_steps) {
  std::lock_guard lock(mu_);
  return take_locked(min_steps, max_steps);
}

Batch ReplayBuffer::drain_batch(std::size_t min_steps, std::size_t max_steps, std::chrono::milliseconds timeout) {
  std::unique_lock lock(mu_);
  cv_.wait_for(lock, timeout, [&] { return closed_ || steps_locked() >= std::max<std::size_t>(min_steps, 1); });
  return take_locked(min_steps, max_steps);
}

std::size_t ReplayBuffer::advance_version(std::int64_t new_version) {
  std::lock_guard lock(mu_);
  if (new_version < version_)
    throw Error(Errc::kVersionRegression,
                "version " + std::to_string(new_version) + " < current " + std::to_string(version_));
  version_ = new_version;
  std::size_t before = entries_.size();
  std::erase_if(entries_, [&](const Trajectory& t) { return version_ - t.policy_version > config_.staleness_limit; });
  std::size_t evicted = before - entries_.size();
  counters_.evicted_stale += evicted;
  return evicted;
}

void ReplayBuffer::close() {
  {
    std::lock_guard lock(mu_);
    closed_ = true;
  }
  cv_.notify_all();
}

bool ReplayBuffer::closed() const {
  std::lock_guard lock(mu_);
  return closed_;
}

std::int64_t ReplayBuffer::current_version() const {
  std::lock_guard lock(mu_);
  return version_;
}

std::size_t ReplayBuffer::size() const {
  std::lock_guard lock(mu_);
  return entries_.size();
}

std::size_t ReplayBuffer::buffered_steps() const {
  std::lock_guard lock(mu_);
  return steps_locked();
}

ReplayCounters ReplayBuffer::counters() const {
  std::lock_guard lock(mu_);
  return counters_;
}

}  // namespace deskgrid
