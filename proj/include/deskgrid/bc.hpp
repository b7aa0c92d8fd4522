#pragma once

#include <cstdint>
#include <memory>
#include <string>
#include <vector>

#include "deskgrid/policy.hpp"
#include "deskgrid/rollout.hpp"

namespace deskgrid {

enum class TeacherKind { kScriptedOptimal, kScriptedNoisy, kPolicyCheckpoint };
std::string_view teacher_kind_name(TeacherKind kind);

struct TeacherSpec {
  std::string teacher_id;
  TeacherKind kind = TeacherKind::kScriptedOptimal;
  double p_error = 0.0;            // scripted_noisy: chance of a uniformly random candidate
  std::uint64_t seed = 0;
  std::vector<App> expertise;      // empty: every app
  std::string checkpoint;          // policy_checkpoint: path to the weights
};

/// Teachers file: one per line, `id kind [p=0.2] [seed=3] [apps=sheet,files] [checkpoint=path]`.
std::vector<TeacherSpec> parse_teachers(std::string_view text);

/// Scripted teacher: follows the solver on its apps and emits the no-op
/// SCROLL(1) when the remaining work lies elsewhere.
class TeacherActor : public Actor {
 public:
  TeacherActor(TeacherSpec spec, std::shared_ptr<const PolicyParams> checkpoint = nullptr);
  ActorChoice choose(const ActorInput& in, Rng& rng) override;
  const TeacherSpec& spec() const { return spec_; }

 private:
  TeacherSpec spec_;
  std::shared_ptr<const PolicyParams> checkpoint_;
};

/// Picks one member uniformly at every step from its own seeded stream.
class PoolActor : public Actor {
 public:
  PoolActor(std::vector<std::unique_ptr<Actor>> members, std::vector<std::string> ids, std::uint64_t seed);
  ActorChoice choose(const ActorInput& in, Rng& rng) override;

 private:
  std::vector<std::unique_ptr<Actor>> members_;
  std::vector<std::string> ids_;
  Rng pick_;
};

std::unique_ptr<Actor> make_teacher(const TeacherSpec& spec);

struct CollectConfig {
  int n_per_task = 4;
  ActionMode mode = ActionMode::kApiGui;
  std::uint64_t seed = 0;
};

/// n_per_task trajectories for every (task, teacher), each tagged with its teacher.
std::vector<Trajectory> collect_initial(const std::vector<TaskSpec>& tasks, const std::vector<TeacherSpec>& teachers,
                                        const CollectConfig& config, RolloutBackend& backend);

enum class StratumClass { kFullySolved, kPartiallySolved, kUnsolved };
std::string_view stratum_name(StratumClass c);

struct OutcomeStratum {
  std::string task_id;
  std::vector<double> accuracies;
  StratumClass cls = StratumClass::kUnsolved;
};

/// unsolved iff every accuracy is 0; fully_solved iff the mean accuracy is 1;
/// partially_solved otherwise. One stratum per task id, in `task_ids` order.
std::vector<OutcomeStratum> stratify(const std::vector<Trajectory>& log, const std::vector<std::string>& task_ids);
StratumClass classify(const std::vector<double>& accuracies);

/// flattened (context, action, candidates) pairs of successful trajectories, step order kept.
std::vector<SftExample> filter_success(const std::vector<Trajectory>& log);
std::vector<SftExample> flatten(const std::vector<Trajectory>& trajectories);

struct AugmentConfig {
  int rounds = 4;
  int sft_epochs = 3;
  double sft_lr = 1.0;
  ActionMode mode = ActionMode::kApiGui;
  std::uint64_t seed = 0;
};

/// SFT-trains the base policy on the successes of the partially solved tasks,
/// then samples `rounds` new trajectories per such task.
/// Throws NoSuccessfulSeed when one of them has no success in the log.
std::vector<Trajectory> augment_partial(const std::vector<OutcomeStratum>& strata, const std::vector<TaskSpec>& tasks,
                                        const std::vector<Trajectory>& log, const PolicyParams& base,
                                        const AugmentConfig& config, RolloutBackend& backend);

/// A single episode where every step is taken by a uniformly chosen pool member.
Trajectory pool_rollout(const TaskSpec& task, const std::vector<TeacherSpec>& pool, std::uint64_t seed,
                        RolloutBackend& backend, ActionMode mode = ActionMode::kApiGui);

}  // namespace deskgrid
