#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <string>
#include <vector>

#include "deskgrid/envsim.hpp"
#include "deskgrid/policy.hpp"
#include "deskgrid/trajectory.hpp"

namespace deskgrid {

/// What an agent sees of a live environment after reset or a step.
struct SessionView {
  std::string observation;
  std::vector<std::string> candidates;
  bool done = false;
  bool accepted = false;
  bool malformed = false;
  double accuracy = 0.0;  // terminal verification, valid once done
};

/// One environment episode, local or behind the cluster protocol.
class EnvSession {
 public:
  virtual ~EnvSession() = default;
  virtual const TaskSpec& task() const = 0;
  virtual ActionMode mode() const = 0;
  virtual SessionView current() = 0;
  virtual SessionView step(const std::string& raw_action) = 0;
};

class LocalSession : public EnvSession {
 public:
  LocalSession(const TaskSpec& task, std::uint64_t seed, ActionMode mode,
               const ApiRegistry& registry = default_registry());
  const TaskSpec& task() const override { return env_.task(); }
  ActionMode mode() const override { return env_.mode(); }
  SessionView current() override;
  SessionView step(const std::string& raw_action) override;
  const Env& env() const { return env_; }

 private:
  SessionView view(const StepOutcome* outcome) const;
  Env env_;
};

std::vector<std::string> candidate_strings(const std::vector<Action>& actions);

struct ActorInput {
  const TaskSpec& task;
  ActionMode mode;
  const std::string& context;
  const std::string& observation;
  const std::vector<std::string>& candidates;
};

struct ActorChoice {
  std::string action;
  double log_prob = 0.0;
  bool has_log_prob = false;
  std::string teacher;
};

class Actor {
 public:
  virtual ~Actor() = default;
  virtual ActorChoice choose(const ActorInput& in, Rng& rng) = 0;
};

/// Linear-softmax policy; samples, or takes the argmax when greedy.
class PolicyActor : public Actor {
 public:
  PolicyActor(std::shared_ptr<const PolicyParams> params, bool greedy);
  ActorChoice choose(const ActorInput& in, Rng& rng) override;

 private:
  std::shared_ptr<const PolicyParams> params_;
  bool greedy_;
};

struct RolloutRequest {
  TaskSpec task;
  std::uint64_t seed = 0;
  std::uint64_t group_id = 0;
  ActionMode mode = ActionMode::kApiGui;
  std::int64_t policy_version = 0;
  std::string source = "policy";
};

/// Drives one episode to termination and assigns rewards.
Trajectory run_episode(EnvSession& session, Actor& actor, const RolloutRequest& request);

using ActorFactory = std::function<std::unique_ptr<Actor>(const RolloutRequest&)>;

class RolloutBackend {
 public:
  virtual ~RolloutBackend() = default;
  /// Results are in request order regardless of scheduling.
  virtual std::vector<Trajectory> run(const std::vector<RolloutRequest>& requests, const ActorFactory& actors) = 0;
};

/// In-process environments on a fixed pool of threads.
class LocalBackend : public RolloutBackend {
 public:
  explicit LocalBackend(std::size_t threads = 0, const ApiRegistry& registry = default_registry());
  std::vector<Trajectory> run(const std::vector<RolloutRequest>& requests, const ActorFactory& actors) override;
  std::size_t threads() const { return threads_; }

 private:
  std::size_t threads_;
  const ApiRegistry* registry_;
};

/// Runs fn(i) for i in [0, n) on up to `threads` threads; rethrows the first error.
void parallel_for(std::size_t n, std::size_t threads, const std::function<void(std::size_t)>& fn);

}  // namespace deskgrid
