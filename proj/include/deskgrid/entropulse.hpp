#pragma once

#include <cstdint>
#include <functional>
#include <map>
#include <set>
#include <string>
#include <vector>

#include "deskgrid/policy.hpp"
#include "deskgrid/trajectory.hpp"

namespace deskgrid {

/// Successful rollouts per task, deduplicated by action sequence.
class SuccessStore {
 public:
  /// Stores the trajectory iff it succeeded and its action sequence is new for the task.
  bool record_success(const Trajectory& traj);

  const std::map<std::string, std::vector<Trajectory>>& by_task() const { return by_task_; }
  std::size_t size() const;
  bool empty() const { return by_task_.empty(); }

 private:
  std::map<std::string, std::vector<Trajectory>> by_task_;
  std::set<std::uint64_t> seen_;
};

struct ManifestEntry {
  std::string task_id;
  std::int64_t policy_version = 0;
  std::uint64_t group_id = 0;
  std::uint64_t seed = 0;
  std::string source;
  std::size_t steps = 0;
};

struct SftDataset {
  std::vector<SftExample> examples;
  std::vector<ManifestEntry> manifest;  // one per selected trajectory
  std::uint64_t seed = 0;
  int per_task_k = 0;

  std::string manifest_json() const;
  /// Distinct generating policy versions among the selected trajectories.
  std::set<std::int64_t> versions() const;
};

/// Up to per_task_k trajectories drawn per task without replacement (seeded),
/// flattened to step pairs. Throws EmptyStore.
SftDataset build_sft_dataset(const SuccessStore& store, int per_task_k, std::uint64_t seed);

struct SftReport {
  double entropy_before = 0.0;
  double entropy_after = 0.0;
  double eval_reward_before = 0.0;
  double eval_reward_after = 0.0;
  double nll_before = 0.0;
  double nll_after = 0.0;
  int epochs = 0;
  std::size_t examples = 0;
  bool eval_stable = true;  // eval_reward_after >= eval_reward_before - 0.05
};

/// Mean policy entropy over probe states.
double mean_entropy(const PolicyParams& params, const std::vector<SftExample>& probe);

using EvalFn = std::function<double(const PolicyParams&)>;

/// `epochs` full-batch NLL steps; entropy is measured on `probe`, reward by `eval` when given.
PolicyParams run_sft_phase(const PolicyParams& params, const SftDataset& dataset, int epochs, double lr,
                           const std::vector<SftExample>& probe, const EvalFn& eval, SftReport* report);

struct PlateauConfig {
  int window = 20;
  double min_slope = 0.002;  // reward per update
  double entropy_floor = 0.5;
};

struct SeriesPoint {
  double reward = 0.0;
  double entropy = 0.0;
};

/// Least-squares slope of the reward over the last `window` points is below
/// min_slope and their mean entropy is below entropy_floor. Throws SeriesTooShort.
bool detect_plateau(const std::vector<SeriesPoint>& series, const PlateauConfig& config);
double least_squares_slope(const std::vector<double>& y);

}  // namespace deskgrid
