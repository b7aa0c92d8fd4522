#pragma once

#include <condition_variable>
#include <cstdint>
#include <functional>
#include <mutex>
#include <optional>
#include <string>
#include <vector>

#include "deskgrid/bc.hpp"
#include "deskgrid/entropulse.hpp"
#include "deskgrid/eval.hpp"
#include "deskgrid/grpo.hpp"
#include "deskgrid/replay.hpp"
#include "deskgrid/rollout.hpp"

namespace deskgrid {

enum class PhaseKind { kBc, kRl, kSft };
std::string_view phase_kind_name(PhaseKind k);

/// `bc <epochs>`, `rl <updates>`, `sft <epochs>`, one per line, run in order.
struct PhaseSpec {
  PhaseKind kind = PhaseKind::kRl;
  int amount = 1;
};
std::vector<PhaseSpec> parse_schedule(std::string_view text);
std::string schedule_to_text(const std::vector<PhaseSpec>& schedule);

/// Operator commands, applied between updates.
class RunControl {
 public:
  void pause();
  void resume();
  void abort();
  bool paused() const;
  bool aborted() const;
  /// Blocks while paused; throws AbortedByOperator once aborted.
  void checkpoint();

 private:
  mutable std::mutex mu_;
  std::condition_variable cv_;
  bool paused_ = false;
  bool aborted_ = false;
};

struct PipelineConfig {
  int tasks_per_wave = 8;
  std::size_t min_steps = 128;
  std::size_t max_steps = 2048;
  std::size_t capacity = 2048;
  std::int64_t staleness_limit = 1;
  ActionMode mode = ActionMode::kApiGui;
  std::uint64_t seed = 1;
};

struct BcConfig {
  std::vector<TeacherSpec> teachers;
  int n_per_task = 4;
  double lr = 1.0;
  int augment_rounds = 4;
  int augment_epochs = 3;
};

struct EntropulseConfig {
  int per_task_k = 2;
  double lr = 1.0;
  PlateauConfig plateau;
  bool auto_pulse = false;
};

struct RunConfig {
  TrainerConfig trainer;
  PipelineConfig pipeline;
  BcConfig bc;
  EntropulseConfig entropulse;
  EvalConfig eval;
  std::vector<TaskSpec> tasks;

  void validate() const;
};

struct MetricRecord {
  std::int64_t update = 0;  // global across phases
  int phase_index = 0;
  PhaseKind phase = PhaseKind::kRl;
  UpdateMetrics m;
  std::int64_t policy_version = 0;
};

struct PhaseRecord {
  int index = 0;
  PhaseKind kind = PhaseKind::kRl;
  int amount = 0;
  std::int64_t first_update = 0;
  std::int64_t last_update = 0;
  std::int64_t start_version = 0;
  std::int64_t end_version = 0;
  bool reference_reset = false;
  bool plateau = false;
  SftReport sft;           // sft and bc
  std::size_t trajectories = 0;
  std::size_t dataset_examples = 0;
  std::string note;
};

struct ConsumptionRecord {
  std::int64_t update = 0;
  std::int64_t trainer_version = 0;
  std::int64_t trajectory_version = 0;
  std::uint64_t group_id = 0;
  std::string task_id;
};

struct RunSinks {
  std::function<void(const MetricRecord&)> on_metric;
  std::function<void(const PhaseRecord&)> on_phase;
  std::function<void(const std::vector<Trajectory>&)> on_trajectories;
  std::function<void(const SftDataset&, int phase_index)> on_sft_dataset;
};

std::string metric_to_json(const MetricRecord& r);
std::string phase_to_json(const PhaseRecord& r);
std::string consumption_to_json(const ConsumptionRecord& r);

/// Drives BC, RL and SFT phases over a rollout backend. RL phases run the
/// rollout producer one policy version behind the trainer, through a replay
/// buffer; metrics are identical across runs with the same config and seeds.
class Orchestrator {
 public:
  Orchestrator(RunConfig config, RolloutBackend& backend, RunControl* control = nullptr, RunSinks sinks = {});

  void run(const std::vector<PhaseSpec>& schedule);
  PhaseRecord run_phase(const PhaseSpec& phase);

  const PolicyParams& params() const { return trainer_.params(); }
  void set_params(PolicyParams p);
  const GrpoTrainer& trainer() const { return trainer_; }
  const std::vector<MetricRecord>& metrics() const { return metrics_; }
  const std::vector<PhaseRecord>& phases() const { return phases_; }
  const std::vector<ConsumptionRecord>& consumption() const { return consumption_; }
  const SuccessStore& store() const { return store_; }
  const ReplayCounters& replay_counters() const { return replay_totals_; }
  const RunConfig& config() const { return config_; }

 private:
  PhaseRecord run_bc(int epochs, PhaseRecord rec);
  PhaseRecord run_rl(int updates, PhaseRecord rec);
  PhaseRecord run_sft(int epochs, PhaseRecord rec);
  std::vector<TaskSpec> next_tasks(int n);
  double eval_success(const PolicyParams& p);

  RunConfig config_;
  RolloutBackend* backend_;
  RunControl* control_;
  RunSinks sinks_;
  GrpoTrainer trainer_;
  SuccessStore store_;
  std::vector<MetricRecord> metrics_;
  std::vector<PhaseRecord> phases_;
  std::vector<ConsumptionRecord> consumption_;
  std::vector<SftExample> last_probe_;
  ReplayCounters replay_totals_;
  std::optional<PhaseKind> last_kind_;
  std::uint64_t task_cursor_ = 0;
  std::uint64_t group_seq_ = 0;
  std::int64_t update_seq_ = 0;
};

}  // namespace deskgrid
