#pragma once

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace deskgrid {

inline constexpr int kTrajectorySchemaVersion = 1;

/// One prompt-response pair: the serialized history the action was chosen
/// from, the emitted action text, and the candidate set it was chosen among.
struct Step {
  std::string context;
  std::string action;
  std::vector<std::string> candidates;
  double old_log_prob = 0.0;  // under the generating policy; <= 0
  bool has_old_log_prob = false;
  double reward = 0.0;
  bool reward_assigned = false;
  bool well_formed = true;
  bool accepted = false;
  std::string teacher;  // per-step actor when collected from a teacher pool

  std::optional<std::size_t> action_index() const;
  friend bool operator==(const Step&, const Step&) = default;
};

struct Trajectory {
  std::string task_id;
  std::vector<Step> steps;
  double accuracy = 0.0;
  bool success = false;  // accuracy == 1.0
  bool complete = false;  // terminal verification recorded
  std::int64_t policy_version = 0;
  std::uint64_t group_id = 0;  // trajectories sampled together for one task
  std::uint64_t seed = 0;
  std::string source;  // "policy", "teacher:<id>", "pool", "augment"

  std::size_t length() const { return steps.size(); }
  /// Dedup key: the task plus the exact action sequence.
  std::string action_signature() const;
  friend bool operator==(const Trajectory&, const Trajectory&) = default;
};

/// Line-delimited trajectory log, one JSON record per trajectory, versioned.
/// Shared by the replay engine, behavior cloning and Entropulse.
std::string trajectory_to_json_line(const Trajectory& traj);
Trajectory trajectory_from_json_line(std::string_view line);

void write_trajectory_log(const std::string& path, const std::vector<Trajectory>& trajs, bool append = false);
std::vector<Trajectory> read_trajectory_log(const std::string& path);

/// Serialized history the policy conditions on at one step.
std::string build_context(std::string_view goal_text, const std::vector<std::string>& history,
                          std::string_view observation);

}  // namespace deskgrid
