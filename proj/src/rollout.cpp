#include "deskgrid/rollout.hpp"

#include <atomic>
#include <cmath>
#include <exception>
#include <mutex>
#include <thread>

namespace deskgrid {

LocalSession::LocalSession(const TaskSpec& task, std::uint64_t seed, ActionMode mode, const ApiRegistry& registry)
    : env_(create_env(task, seed, mode, registry)) {}

std::vector<std::string> candidate_strings(const std::vector<Action>& actions) {
  std::vector<std::string> out;
  out.reserve(actions.size());
  for (const auto& a : actions) out.push_back(a.to_string());
  return out;
}

SessionView LocalSession::view(const StepOutcome* outcome) const {
  SessionView v;
  v.observation = outcome ? outcome->observation : env_.observation();
  v.done = env_.done();
  if (outcome) {
    v.accepted = outcome->accepted;
    v.malformed = outcome->malformed;
  }
  if (v.done) {
    v.accuracy = env_.verify();
  } else {
    v.candidates = candidate_strings(env_.candidates());
  }
  return v;
}

SessionView LocalSession::current() { return view(nullptr); }

SessionView LocalSession::step(const std::string& raw_action) {
  StepOutcome out = env_.step(raw_action);
  return view(&out);
}

PolicyActor::PolicyActor(std::shared_ptr<const PolicyParams> params, bool greedy)
    : params_(std::move(params)), greedy_(greedy) {}

ActorChoice PolicyActor::choose(const ActorInput& in, Rng& rng) {
  FeaturizedStep fs(in.context, in.candidates, params_->dim());
  auto lp = softmax_log_probs(*params_, fs);
  std::vector<double> p(lp.size());
  for (std::size_t i = 0; i < lp.size(); ++i) p[i] = std::exp(lp[i]);
  std::size_t idx = greedy_ ? argmax_index(p) : sample_index(p, rng);
  return ActorChoice{in.candidates[idx], lp[idx], true, {}};
}

Trajectory run_episode(EnvSession& session, Actor& actor, const RolloutRequest& request) {
  Trajectory traj;
  traj.task_id = session.task().task_id;
  traj.group_id = request.group_id;
  traj.seed = request.seed;
  traj.policy_version = request.policy_version;
  traj.source = request.source;

  Rng rng(request.seed);
  const std::string goal = session.task().goal_text();
  std::vector<std::string> history;
  SessionView view = session.current();
  while (!view.done) {
    std::string context = build_context(goal, history, view.observation);
    ActorInput in{session.task(), session.mode(), context, view.observation, view.candidates};
    ActorChoice choice = actor.choose(in, rng);

    Step step;
    step.context = std::move(context);
    step.action = choice.action;
    step.candidates = view.candidates;
    step.old_log_prob = choice.log_prob;
    step.has_old_log_prob = choice.has_log_prob;
    step.teacher = choice.teacher;

    view = session.step(choice.action);
    step.well_formed = !view.malformed;
    step.accepted = view.accepted;
    traj.steps.push_back(std::move(step));
    history.push_back(choice.action);
  }
  traj.complete = true;
  assign_rewards(traj, view.accuracy);
  return traj;
}

void parallel_for(std::size_t n, std::size_t threads, const std::function<void(std::size_t)>& fn) {
  if (n == 0) return;
  threads = std::max<std::size_t>(1, std::min(threads, n));
  if (threads == 1) {
    for (std::size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::exception_ptr error;
  std::mutex error_mu;
  std::vector<std::jthread> pool;
  pool.reserve(threads);
  for (std::size_t t = 0; t < threads; ++t) {
    pool.emplace_back([&] {
      for (std::size_t i = next++; i < n; i = next++) {
        try {
          fn(i);
        } catch (...) {
          std::lock_guard lock(error_mu);
          if (!error) error = std::current_exception();
        }
      }
    });
  }
  pool.clear();
  if (error) std::rethrow_exception(error);
}

LocalBackend::LocalBackend(std::size_t threads, const ApiRegistry& registry)
    : threads_(threads ? threads : std::max(1u, std::thread::hardware_concurrency())), registry_(&registry) {}

std::vector<Trajectory> LocalBackend::run(const std::vector<RolloutRequest>& requests, const ActorFactory& actors) {
  std::vector<Trajectory> out(requests.size());
  parallel_for(requests.size(), threads_, [&](std::size_t i) {
    const auto& req = requests[i];
    LocalSession session(req.task, req.seed, req.mode, *registry_);
    auto actor = actors(req);
    out[i] = run_episode(session, *actor, req);
  });
  return out;
}

}  // namespace deskgrid
