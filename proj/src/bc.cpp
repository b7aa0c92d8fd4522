#include "deskgrid/bc.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <set>

#include "deskgrid/common.hpp"

namespace deskgrid {

std::string_view teacher_kind_name(TeacherKind kind) {
  switch (kind) {
    case TeacherKind::kScriptedOptimal: return "scripted_optimal";
    case TeacherKind::kScriptedNoisy: return "scripted_noisy";
    case TeacherKind::kPolicyCheckpoint: return "policy_checkpoint";
  }
  return "?";
}

std::vector<TeacherSpec> parse_teachers(std::string_view text) {
  std::vector<TeacherSpec> out;
  std::set<std::string> ids;
  for (const auto& raw : split(text, '\n')) {
    std::string_view line = trim(raw);
    if (line.empty() || line.front() == '#') continue;
    std::vector<std::string> tok;
    for (const auto& t : split(line, ' '))
      if (!t.empty()) tok.push_back(t);
    if (tok.size() < 2) throw Error(Errc::kParse, "teacher line needs an id and a kind: " + std::string(line));
    TeacherSpec t;
    t.teacher_id = tok[0];
    if (!ids.insert(t.teacher_id).second) throw Error(Errc::kParse, "duplicate teacher id " + t.teacher_id);
    if (tok[1] == "scripted_optimal") t.kind = TeacherKind::kScriptedOptimal;
    else if (tok[1] == "scripted_noisy") t.kind = TeacherKind::kScriptedNoisy;
    else if (tok[1] == "policy_checkpoint") t.kind = TeacherKind::kPolicyCheckpoint;
    else throw Error(Errc::kParse, "unknown teacher kind " + tok[1]);
    for (std::size_t i = 2; i < tok.size(); ++i) {
      auto eq = tok[i].find('=');
      if (eq == std::string::npos) throw Error(Errc::kParse, "bad teacher option " + tok[i]);
      std::string k = tok[i].substr(0, eq), v = tok[i].substr(eq + 1);
      try {
        if (k == "p") {
          t.p_error = std::stod(v);
        } else if (k == "seed") {
          t.seed = std::stoull(v);
        } else if (k == "apps") {
          for (const auto& a : split(v, ',')) {
            auto app = parse_app(a);
            if (!app) throw Error(Errc::kParse, "unknown app " + a);
            t.expertise.push_back(*app);
          }
        } else if (k == "checkpoint") {
          t.checkpoint = v;
        } else {
          throw Error(Errc::kParse, "unknown teacher option " + k);
        }
      } catch (const std::invalid_argument&) {
        throw Error(Errc::kParse, "bad value in " + tok[i]);
      }
    }
    if (t.p_error < 0.0 || t.p_error > 1.0) throw Error(Errc::kParse, "p must be in [0,1] for " + t.teacher_id);
    if (t.kind == TeacherKind::kPolicyCheckpoint && t.checkpoint.empty())
      throw Error(Errc::kParse, "policy_checkpoint teacher needs checkpoint=<path>");
    out.push_back(std::move(t));
  }
  return out;
}

TeacherActor::TeacherActor(TeacherSpec spec, std::shared_ptr<const PolicyParams> checkpoint)
    : spec_(std::move(spec)), checkpoint_(std::move(checkpoint)) {}

ActorChoice TeacherActor::choose(const ActorInput& in, Rng& rng) {
  ActorChoice c;
  c.teacher = spec_.teacher_id;
  if (spec_.kind == TeacherKind::kPolicyCheckpoint) {
    PolicyActor inner(checkpoint_, false);
    c.action = inner.choose(in, rng).action;
    return c;
  }
  if (spec_.kind == TeacherKind::kScriptedNoisy && rng.uniform() < spec_.p_error) {
    c.action = in.candidates[rng.below(in.candidates.size())];
    return c;
  }
  EnvState st = parse_observation(in.observation);
  auto next = plan_next(in.task.goal, st, in.mode, spec_.expertise);
  c.action = next ? next->to_string() : Action::scroll(1).to_string();
  return c;
}

PoolActor::PoolActor(std::vector<std::unique_ptr<Actor>> members, std::vector<std::string> ids, std::uint64_t seed)
    : members_(std::move(members)), ids_(std::move(ids)), pick_(mix_seed(seed, fnv1a("pool"))) {
  if (members_.empty()) throw Error(Errc::kInvalidConfig, "empty teacher pool");
}

ActorChoice PoolActor::choose(const ActorInput& in, Rng& rng) {
  std::size_t k = members_.size() == 1 ? 0 : pick_.below(members_.size());
  ActorChoice c = members_[k]->choose(in, rng);
  c.teacher = ids_[k];
  return c;
}

std::unique_ptr<Actor> make_teacher(const TeacherSpec& spec) {
  std::shared_ptr<const PolicyParams> ckpt;
  if (spec.kind == TeacherKind::kPolicyCheckpoint)
    ckpt = std::make_shared<const PolicyParams>(load_checkpoint(spec.checkpoint));
  return std::make_unique<TeacherActor>(spec, std::move(ckpt));
}

std::vector<Trajectory> collect_initial(const std::vector<TaskSpec>& tasks, const std::vector<TeacherSpec>& teachers,
                                        const CollectConfig& config, RolloutBackend& backend) {
  std::vector<RolloutRequest> reqs;
  std::vector<const TeacherSpec*> who;
  for (std::size_t ti = 0; ti < tasks.size(); ++ti) {
    for (std::size_t k = 0; k < teachers.size(); ++k) {
      for (int n = 0; n < config.n_per_task; ++n) {
        RolloutRequest r;
        r.task = tasks[ti];
        r.seed = mix_seed(config.seed, teachers[k].seed, ti, k, static_cast<std::uint64_t>(n));
        r.group_id = ti;
        r.mode = config.mode;
        r.source = "teacher:" + teachers[k].teacher_id;
        reqs.push_back(std::move(r));
        who.push_back(&teachers[k]);
      }
    }
  }
  std::map<std::string, std::shared_ptr<const PolicyParams>> checkpoints;
  for (const auto& t : teachers)
    if (t.kind == TeacherKind::kPolicyCheckpoint && !checkpoints.count(t.checkpoint))
      checkpoints[t.checkpoint] = std::make_shared<const PolicyParams>(load_checkpoint(t.checkpoint));
  std::map<std::string, const TeacherSpec*> by_source;
  for (const auto& t : teachers) by_source["teacher:" + t.teacher_id] = &t;
  return backend.run(reqs, [&](const RolloutRequest& r) -> std::unique_ptr<Actor> {
    const TeacherSpec* spec = by_source.at(r.source);
    auto it = checkpoints.find(spec->checkpoint);
    return std::make_unique<TeacherActor>(*spec, it == checkpoints.end() ? nullptr : it->second);
  });
}

std::string_view stratum_name(StratumClass c) {
  switch (c) {
    case StratumClass::kFullySolved: return "fully_solved";
    case StratumClass::kPartiallySolved: return "partially_solved";
    case StratumClass::kUnsolved: return "unsolved";
  }
  return "?";
}

StratumClass classify(const std::vector<double>& accuracies) {
  if (std::all_of(accuracies.begin(), accuracies.end(), [](double a) { return a == 0.0; }))
    return StratumClass::kUnsolved;
  double sum = 0.0;
  for (double a : accuracies) sum += a;
  if (sum / static_cast<double>(accuracies.size()) == 1.0) return StratumClass::kFullySolved;
  return StratumClass::kPartiallySolved;
}

std::vector<OutcomeStratum> stratify(const std::vector<Trajectory>& log, const std::vector<std::string>& task_ids) {
  std::map<std::string, std::vector<double>> acc;
  for (const auto& t : log) acc[t.task_id].push_back(t.accuracy);
  std::vector<OutcomeStratum> out;
  for (const auto& id : task_ids) {
    auto it = acc.find(id);
    if (it == acc.end()) throw Error(Errc::kMissingTask, id);
    out.push_back(OutcomeStratum{id, it->second, classify(it->second)});
  }
  return out;
}

std::vector<SftExample> flatten(const std::vector<Trajectory>& trajectories) {
  std::vector<SftExample> out;
  for (const auto& t : trajectories)
    for (const auto& s : t.steps) out.push_back(SftExample{s.context, s.action, s.candidates});
  return out;
}

std::vector<SftExample> filter_success(const std::vector<Trajectory>& log) {
  std::vector<Trajectory> ok;
  for (const auto& t : log)
    if (t.success) ok.push_back(t);
  return flatten(ok);
}

std::vector<Trajectory> augment_partial(const std::vector<OutcomeStratum>& strata, const std::vector<TaskSpec>& tasks,
                                        const std::vector<Trajectory>& log, const PolicyParams& base,
                                        const AugmentConfig& config, RolloutBackend& backend) {
  std::vector<const TaskSpec*> targets;
  std::vector<Trajectory> seeds;
  for (const auto& s : strata) {
    if (s.cls != StratumClass::kPartiallySolved) continue;
    const TaskSpec* task = find_task(tasks, s.task_id);
    if (!task) throw Error(Errc::kMissingTask, s.task_id);
    std::size_t found = 0;
    for (const auto& t : log) {
      if (t.task_id == s.task_id && t.success) {
        seeds.push_back(t);
        ++found;
      }
    }
    if (found == 0) throw Error(Errc::kNoSuccessfulSeed, s.task_id);
    targets.push_back(task);
  }
  if (targets.empty()) return {};

  auto data = flatten(seeds);
  PolicyParams tuned = base;
  for (int e = 0; e < config.sft_epochs; ++e) tuned = sft_update(tuned, data, config.sft_lr);
  auto shared = std::make_shared<const PolicyParams>(std::move(tuned));

  std::vector<RolloutRequest> reqs;
  for (std::size_t i = 0; i < targets.size(); ++i) {
    for (int r = 0; r < config.rounds; ++r) {
      RolloutRequest q;
      q.task = *targets[i];
      q.seed = mix_seed(config.seed, fnv1a("augment"), i, static_cast<std::uint64_t>(r));
      q.group_id = i;
      q.mode = config.mode;
      q.policy_version = shared->version;
      q.source = "augment";
      reqs.push_back(std::move(q));
    }
  }
  return backend.run(reqs, [&](const RolloutRequest&) { return std::make_unique<PolicyActor>(shared, false); });
}

Trajectory pool_rollout(const TaskSpec& task, const std::vector<TeacherSpec>& pool, std::uint64_t seed,
                        RolloutBackend& backend, ActionMode mode) {
  if (pool.empty()) throw Error(Errc::kInvalidConfig, "empty teacher pool");
  RolloutRequest r;
  r.task = task;
  r.seed = seed;
  r.mode = mode;
  r.source = "pool";
  auto out = backend.run({r}, [&](const RolloutRequest& req) -> std::unique_ptr<Actor> {
    std::vector<std::unique_ptr<Actor>> members;
    std::vector<std::string> ids;
    for (const auto& t : pool) {
      members.push_back(make_teacher(t));
      ids.push_back(t.teacher_id);
    }
    return std::make_unique<PoolActor>(std::move(members), std::move(ids), req.seed);
  });
  return out.at(0);
}

}  // namespace deskgrid
