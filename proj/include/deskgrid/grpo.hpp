#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "deskgrid/policy.hpp"
#include "deskgrid/trajectory.hpp"

namespace deskgrid {

inline constexpr double kDegenerateStd = 1e-8;

struct TrainerConfig {
  int group_size = 8;
  double clip_eps = 0.2;
  double kl_coef = 0.01;
  double learning_rate = 0.05;
  int updates_per_phase = 50;
  enum class ReferenceReset { kPhaseStart, kNever } reference_reset = ReferenceReset::kPhaseStart;

  void validate() const;
};

/// All trajectories sampled together for one task.
struct TaskGroup {
  std::string task_id;
  std::vector<Trajectory> trajectories;
};

struct AdvantageTable {
  std::vector<double> rewards;                  // pooled R, trajectory-major
  std::vector<std::vector<double>> advantages;  // [trajectory][step]
  double mean = 0.0;
  double std = 0.0;
  bool degenerate = false;
};

AdvantageTable compute_advantages(const TaskGroup& group);
std::vector<TaskGroup> group_batch(const std::vector<Trajectory>& trajectories);

struct LossResult {
  double loss = 0.0;
  std::vector<double> gradient;  // dense, length = params.dim()
  double mean_entropy = 0.0;
  double mean_kl = 0.0;
  double clip_fraction = 0.0;
  std::size_t steps = 0;
};

/// Clipped step-level surrogate with per-step exact KL to the reference:
///   loss = -(1/sum L) sum_ij [ min(rho A, clip(rho, 1-eps, 1+eps) A) - beta KL_ij ]
/// with rho = exp(log pi_theta - old_log_prob). Old and reference are frozen.
LossResult surrogate_loss(const std::vector<TaskGroup>& batch, const std::vector<AdvantageTable>& advantages,
                          const PolicyParams& params, const PolicyParams& reference, const TrainerConfig& config);

struct UpdateMetrics {
  std::int64_t update = 0;
  double mean_reward = 0.0;  // success rate of the batch trajectories
  double mean_accuracy = 0.0;
  double mean_entropy = 0.0;
  double mean_kl = 0.0;
  double clip_fraction = 0.0;
  double loss = 0.0;
  std::size_t steps = 0;
  std::size_t trajectories = 0;
  std::int64_t reference_version = 0;
};

/// Holds pi_theta and pi_ref; one gradient-descent step per batch.
class GrpoTrainer {
 public:
  GrpoTrainer(PolicyParams initial, TrainerConfig config);

  UpdateMetrics update(const std::vector<Trajectory>& batch);
  void reset_reference();

  const PolicyParams& params() const { return params_; }
  const PolicyParams& reference() const { return reference_; }
  void set_params(PolicyParams p) { params_ = std::move(p); }
  const TrainerConfig& config() const { return config_; }
  std::int64_t updates() const { return updates_; }

 private:
  PolicyParams params_;
  PolicyParams reference_;
  TrainerConfig config_;
  std::int64_t updates_ = 0;
};

}  // namespace deskgrid
