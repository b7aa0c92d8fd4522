#pragma once

#include <map>
#include <string>
#include <vector>

#include "deskgrid/rollout.hpp"

namespace deskgrid {

struct EpisodeEval {
  std::string task_id;
  Domain domain = Domain::kOS;
  bool success = false;
  double accuracy = 0.0;
  int steps = 0;  // actions before DONE
};

struct EvalResult {
  std::vector<EpisodeEval> episodes;
  std::map<Domain, double> domain_success;
  double average = 0.0;  // mean episode success

  /// Median steps over successful episodes; 0 when none succeeded.
  double median_success_steps() const;
  std::size_t successes() const;
  /// Success rate of one task over its episodes.
  double task_success(std::string_view task_id) const;
  /// Columns OS, Office, Daily, Professional, Workflow, Avg; rates in percent.
  std::string table(const std::string& row_label) const;
  static std::string table_header();
};

struct EvalConfig {
  int episodes_per_task = 1;
  bool greedy = true;
  std::uint64_t seed = 0;
};

/// `episodes_per_task` seeded rollouts per task with the actors from `actors`.
EvalResult evaluate(const std::vector<TaskSpec>& tasks, ActionMode mode, const ActorFactory& actors,
                    RolloutBackend& backend, const EvalConfig& config = {});

EvalResult evaluate_policy(const std::vector<TaskSpec>& tasks, ActionMode mode, const PolicyParams& params,
                           RolloutBackend& backend, const EvalConfig& config = {});

}  // namespace deskgrid
