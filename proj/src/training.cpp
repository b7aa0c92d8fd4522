#include "deskgrid/training.hpp"

#include <algorithm>
#include <nlohmann/json.hpp>
#include <numeric>
#include <thread>

#include "deskgrid/common.hpp"
#include "deskgrid/eval.hpp"

namespace deskgrid {

std::string_view phase_kind_name(PhaseKind k) {
  switch (k) {
    case PhaseKind::kBc: return "bc";
    case PhaseKind::kRl: return "rl";
    case PhaseKind::kSft: return "sft";
  }
  return "?";
}

std::vector<PhaseSpec> parse_schedule(std::string_view text) {
  std::vector<PhaseSpec> out;
  int lineno = 0;
  for (const auto& raw : split(text, '\n')) {
    ++lineno;
    std::string_view line = trim(raw);
    if (line.empty() || line.front() == '#') continue;
    auto parts = split(line, ' ');
    std::erase_if(parts, [](const std::string& s) { return s.empty(); });
    if (parts.size() != 2) throw Error(Errc::kInvalidConfig, "schedule line " + std::to_string(lineno));
    PhaseSpec p;
    if (parts[0] == "bc") p.kind = PhaseKind::kBc;
    else if (parts[0] == "rl") p.kind = PhaseKind::kRl;
    else if (parts[0] == "sft") p.kind = PhaseKind::kSft;
    else throw Error(Errc::kInvalidConfig, "unknown phase '" + parts[0] + "' on schedule line " + std::to_string(lineno));
    try {
      p.amount = std::stoi(parts[1]);
    } catch (const std::exception&) {
      throw Error(Errc::kInvalidConfig, "bad budget on schedule line " + std::to_string(lineno));
    }
    if (p.amount < 1) throw Error(Errc::kInvalidConfig, "budget must be positive on line " + std::to_string(lineno));
    out.push_back(p);
  }
  if (out.empty()) throw Error(Errc::kInvalidConfig, "empty schedule");
  return out;
}

std::string schedule_to_text(const std::vector<PhaseSpec>& schedule) {
  std::string out;
  for (const auto& p : schedule) out += std::string(phase_kind_name(p.kind)) + " " + std::to_string(p.amount) + "\n";
  return out;
}

void RunControl::pause() {
  std::lock_guard lock(mu_);
  paused_ = true;
}

void RunControl::resume() {
  {
    std::lock_guard lock(mu_);
    paused_ = false;
  }
  cv_.notify_all();
}

void RunControl::abort() {
  {
    std::lock_guard lock(mu_);
    aborted_ = true;
  }
  cv_.notify_all();
}

bool RunControl::paused() const {
  std::lock_guard lock(mu_);
  return paused_;
}

bool RunControl::aborted() const {
  std::lock_guard lock(mu_);
  return aborted_;
}

void RunControl::checkpoint() {
  std::unique_lock lock(mu_);
  cv_.wait(lock, [&] { return !paused_ || aborted_; });
  if (aborted_) throw Error(Errc::kAbortedByOperator, "run aborted");
}

void RunConfig::validate() const {
  trainer.validate();
  if (tasks.empty()) throw Error(Errc::kInvalidConfig, "no tasks");
  for (const auto& t : tasks) validate_task(t);
  const auto& p = pipeline;
  if (p.tasks_per_wave < 1) throw Error(Errc::kInvalidConfig, "pipeline.tasks_per_wave must be >= 1");
  if (p.min_steps < 1 || p.min_steps > p.max_steps) throw Error(Errc::kInvalidConfig, "need 1 <= min_steps <= max_steps");
  if (p.staleness_limit < 1) throw Error(Errc::kInvalidConfig, "pipeline.staleness_limit must be >= 1");
  int longest = 0;
  for (const auto& t : tasks) longest = std::max(longest, t.max_steps);
  std::size_t chunk = static_cast<std::size_t>(p.tasks_per_wave) * trainer.group_size * longest;
  if (p.max_steps < p.min_steps + chunk)
    throw Error(Errc::kInvalidConfig, "pipeline.max_steps must be >= min_steps + tasks_per_wave*G*max task steps (" +
                                          std::to_string(p.min_steps + chunk) + ")");
  if (p.capacity < p.max_steps) throw Error(Errc::kInvalidConfig, "pipeline.capacity must be >= max_steps");
  if (bc.n_per_task < 1) throw Error(Errc::kInvalidConfig, "bc.n_per_task must be >= 1");
  if (entropulse.per_task_k < 1) throw Error(Errc::kInvalidConfig, "entropulse.per_task_k must be >= 1");
}

std::string metric_to_json(const MetricRecord& r) {
  nlohmann::json j = {{"update", r.update},
                      {"phase", phase_kind_name(r.phase)},
                      {"phase_index", r.phase_index},
                      {"mean_reward", r.m.mean_reward},
                      {"mean_accuracy", r.m.mean_accuracy},
                      {"entropy", r.m.mean_entropy},
                      {"kl", r.m.mean_kl},
                      {"clip_fraction", r.m.clip_fraction},
                      {"loss", r.m.loss},
                      {"steps", r.m.steps},
                      {"trajectories", r.m.trajectories},
                      {"reference_version", r.m.reference_version},
                      {"policy_version", r.policy_version}};
  return j.dump();
}

std::string phase_to_json(const PhaseRecord& r) {
  nlohmann::json j = {{"record", "phase"},
                      {"index", r.index},
                      {"kind", phase_kind_name(r.kind)},
                      {"amount", r.amount},
                      {"first_update", r.first_update},
                      {"last_update", r.last_update},
                      {"start_version", r.start_version},
                      {"end_version", r.end_version},
                      {"reference_reset", r.reference_reset},
                      {"plateau", r.plateau},
                      {"trajectories", r.trajectories},
                      {"dataset_examples", r.dataset_examples}};
  if (r.kind != PhaseKind::kRl) {
    j["entropy_before"] = r.sft.entropy_before;
    j["entropy_after"] = r.sft.entropy_after;
    j["eval_reward_before"] = r.sft.eval_reward_before;
    j["eval_reward_after"] = r.sft.eval_reward_after;
    j["eval_stable"] = r.sft.eval_stable;
  }
  if (!r.note.empty()) j["note"] = r.note;
  return j.dump();
}

std::string consumption_to_json(const ConsumptionRecord& r) {
  nlohmann::json j = {{"update", r.update},
                      {"trainer_version", r.trainer_version},
                      {"trajectory_version", r.trajectory_version},
                      {"group_id", r.group_id},
                      {"task_id", r.task_id}};
  return j.dump();
}

Orchestrator::Orchestrator(RunConfig config, RolloutBackend& backend, RunControl* control, RunSinks sinks)
    : config_(std::move(config)),
      backend_(&backend),
      control_(control),
      sinks_(std::move(sinks)),
      trainer_(PolicyParams::zeros(), config_.trainer) {
  config_.validate();
}

void Orchestrator::set_params(PolicyParams p) { trainer_.set_params(std::move(p)); }

void Orchestrator::run(const std::vector<PhaseSpec>& schedule) {
  for (const auto& phase : schedule) run_phase(phase);
}

PhaseRecord Orchestrator::run_phase(const PhaseSpec& phase) {
  if (control_) control_->checkpoint();
  PhaseRecord rec;
  rec.index = static_cast<int>(phases_.size());
  rec.kind = phase.kind;
  rec.amount = phase.amount;
  rec.start_version = trainer_.params().version;
  rec.first_update = update_seq_ + 1;
  switch (phase.kind) {
    case PhaseKind::kBc: rec = run_bc(phase.amount, rec); break;
    case PhaseKind::kRl: rec = run_rl(phase.amount, rec); break;
    case PhaseKind::kSft: rec = run_sft(phase.amount, rec); break;
  }
  rec.last_update = update_seq_;
  rec.end_version = trainer_.params().version;
  last_kind_ = phase.kind;
  phases_.push_back(rec);
  if (sinks_.on_phase) sinks_.on_phase(rec);
  return rec;
}

double Orchestrator::eval_success(const PolicyParams& p) {
  return evaluate_policy(config_.tasks, config_.pipeline.mode, p, *backend_, config_.eval).average;
}

std::vector<TaskSpec> Orchestrator::next_tasks(int n) {
  const auto& tasks = config_.tasks;
  std::vector<TaskSpec> out;
  std::uint64_t cached_epoch = ~std::uint64_t{0};
  std::vector<std::size_t> perm(tasks.size());
  for (int i = 0; i < n; ++i, ++task_cursor_) {
    std::uint64_t epoch = task_cursor_ / tasks.size();
    if (epoch != cached_epoch) {
      std::iota(perm.begin(), perm.end(), 0);
      Rng rng(mix_seed(config_.pipeline.seed, fnv1a("tasks"), epoch));
      for (std::size_t k = perm.size(); k > 1; --k) std::swap(perm[k - 1], perm[rng.below(k)]);
      cached_epoch = epoch;
    }
    out.push_back(tasks[perm[task_cursor_ % tasks.size()]]);
  }
  return out;
}

PhaseRecord Orchestrator::run_bc(int epochs, PhaseRecord rec) {
  const auto& bc = config_.bc;
  if (bc.teachers.empty()) throw Error(Errc::kInvalidConfig, "bc phase needs teachers");
  CollectConfig cc{bc.n_per_task, config_.pipeline.mode, mix_seed(config_.pipeline.seed, fnv1a("bc"))};
  auto log = collect_initial(config_.tasks, bc.teachers, cc, *backend_);
  std::vector<std::string> ids;
  for (const auto& t : config_.tasks) ids.push_back(t.task_id);
  auto strata = stratify(log, ids);

  std::vector<OutcomeStratum> seeded;
  std::size_t skipped = 0;
  for (const auto& s : strata) {
    if (s.cls != StratumClass::kPartiallySolved) continue;
    bool any = std::any_of(log.begin(), log.end(), [&](const Trajectory& t) { return t.task_id == s.task_id && t.success; });
    if (any) seeded.push_back(s);
    else ++skipped;
  }
  AugmentConfig ac{bc.augment_rounds, bc.augment_epochs, bc.lr, config_.pipeline.mode,
                   mix_seed(config_.pipeline.seed, fnv1a("augment"))};
  auto extra = augment_partial(seeded, config_.tasks, log, trainer_.params(), ac, *backend_);
  log.insert(log.end(), extra.begin(), extra.end());
  if (sinks_.on_trajectories) sinks_.on_trajectories(log);

  SftDataset ds;
  ds.examples = filter_success(log);
  for (const auto& t : log)
    if (t.success) ds.manifest.push_back({t.task_id, t.policy_version, t.group_id, t.seed, t.source, t.length()});
  auto probe = flatten(log);
  PolicyParams next = run_sft_phase(trainer_.params(), ds, epochs, bc.lr, probe,
                                    [&](const PolicyParams& p) { return eval_success(p); }, &rec.sft);
  set_params(std::move(next));
  rec.trajectories = log.size();
  rec.dataset_examples = ds.examples.size();
  std::size_t counts[3] = {0, 0, 0};
  for (const auto& s : strata) ++counts[static_cast<int>(s.cls)];
  rec.note = "fully_solved=" + std::to_string(counts[0]) + " partially_solved=" + std::to_string(counts[1]) +
             " unsolved=" + std::to_string(counts[2]) + " augmented=" + std::to_string(extra.size()) +
             " partial_without_success=" + std::to_string(skipped);
  return rec;
}

PhaseRecord Orchestrator::run_sft(int epochs, PhaseRecord rec) {
  if (last_kind_ == PhaseKind::kRl) {
    trainer_.reset_reference();
    rec.reference_reset = true;
  }
  auto ds = build_sft_dataset(store_, config_.entropulse.per_task_k,
                              mix_seed(config_.pipeline.seed, fnv1a("sft"), static_cast<std::uint64_t>(rec.index)));
  if (sinks_.on_sft_dataset) sinks_.on_sft_dataset(ds, rec.index);
  PolicyParams next = run_sft_phase(trainer_.params(), ds, epochs, config_.entropulse.lr, last_probe_,
                                    [&](const PolicyParams& p) { return eval_success(p); }, &rec.sft);
  set_params(std::move(next));
  rec.dataset_examples = ds.examples.size();
  rec.trajectories = ds.manifest.size();
  return rec;
}

namespace {

struct PipelineShared {
  std::mutex mu;
  std::condition_variable cv;
  std::map<std::int64_t, std::shared_ptr<const PolicyParams>> published;
  int waves_drained = 0;
  bool stop = false;
  std::exception_ptr error;
};

}  // namespace

PhaseRecord Orchestrator::run_rl(int updates, PhaseRecord rec) {
  if (config_.trainer.reference_reset == TrainerConfig::ReferenceReset::kPhaseStart) {
    trainer_.reset_reference();
    rec.reference_reset = true;
  }
  const auto& pc = config_.pipeline;
  const int G = config_.trainer.group_size;
  ReplayBuffer replay(ReplayConfig{pc.capacity, pc.staleness_limit, pc.min_steps, pc.max_steps});
  const std::int64_t v0 = trainer_.params().version;
  replay.advance_version(v0);

  PipelineShared sh;
  sh.published[v0] = std::make_shared<const PolicyParams>(trainer_.params());

  auto producer_body = [&] {
    try {
      for (int w = 0; w < updates; ++w) {
        const std::int64_t need = v0 + std::max(0, w - 1);
        std::shared_ptr<const PolicyParams> params;
        {
          std::unique_lock lock(sh.mu);
          sh.cv.wait(lock, [&] { return sh.stop || sh.published.count(need); });
          if (sh.stop) return;
          params = sh.published[need];
        }
        std::vector<Trajectory> wave;
        std::size_t steps = 0;
        do {
          std::vector<RolloutRequest> reqs;
          for (const auto& task : next_tasks(pc.tasks_per_wave)) {
            std::uint64_t gid = group_seq_++;
            for (int m = 0; m < G; ++m) {
              RolloutRequest r;
              r.task = task;
              r.seed = mix_seed(pc.seed, fnv1a("rollout"), gid, static_cast<std::uint64_t>(m));
              r.group_id = gid;
              r.mode = pc.mode;
              r.policy_version = params->version;
              reqs.push_back(std::move(r));
            }
          }
          auto out = backend_->run(reqs, [&](const RolloutRequest&) { return std::make_unique<PolicyActor>(params, false); });
          for (auto& t : out) {
            steps += t.length();
            wave.push_back(std::move(t));
          }
        } while (steps < pc.min_steps);
        {
          std::unique_lock lock(sh.mu);
          sh.cv.wait(lock, [&] { return sh.stop || sh.waves_drained >= w; });
          if (sh.stop) return;
        }
        replay.push_all(std::move(wave));
      }
    } catch (...) {
      {
        std::lock_guard lock(sh.mu);
        sh.error = std::current_exception();
        sh.stop = true;
      }
      sh.cv.notify_all();
      replay.close();
    }
  };
  std::thread producer(producer_body);

  auto shutdown = [&] {
    {
      std::lock_guard lock(sh.mu);
      sh.stop = true;
    }
    sh.cv.notify_all();
    replay.close();
    if (producer.joinable()) producer.join();
  };

  std::vector<SeriesPoint> series;
  try {
    for (int u = 1; u <= updates; ++u) {
      if (control_) control_->checkpoint();
      Batch batch;
      while (batch.empty()) {
        batch = replay.drain_batch(pc.min_steps, pc.max_steps, std::chrono::milliseconds(200));
        std::lock_guard lock(sh.mu);
        if (sh.error) std::rethrow_exception(sh.error);
        if (batch.empty() && sh.stop) throw Error(Errc::kClusterUnavailable, "rollout producer stopped");
      }
      if (replay.size() != 0) throw Error(Errc::kProtocol, "rollout wave split across batches");
      {
        std::lock_guard lock(sh.mu);
        ++sh.waves_drained;
      }
      sh.cv.notify_all();

      const std::int64_t trainer_version = trainer_.params().version;
      for (const auto& t : batch.trajectories)
        consumption_.push_back({update_seq_ + 1, trainer_version, t.policy_version, t.group_id, t.task_id});
      if (sinks_.on_trajectories) sinks_.on_trajectories(batch.trajectories);

      UpdateMetrics m = trainer_.update(batch.trajectories);
      ++update_seq_;
      m.update = update_seq_;
      MetricRecord mr{update_seq_, rec.index, PhaseKind::kRl, m, trainer_.params().version};
      metrics_.push_back(mr);
      if (sinks_.on_metric) sinks_.on_metric(mr);

      const std::int64_t v = trainer_.params().version;
      {
        std::lock_guard lock(sh.mu);
        sh.published[v] = std::make_shared<const PolicyParams>(trainer_.params());
        while (!sh.published.empty() && sh.published.begin()->first < v - 2) sh.published.erase(sh.published.begin());
      }
      sh.cv.notify_all();
      replay.advance_version(v);

      for (const auto& t : batch.trajectories) store_.record_success(t);
      last_probe_ = flatten(batch.trajectories);
      rec.trajectories += batch.trajectories.size();

      series.push_back({m.mean_reward, m.mean_entropy});
      if (config_.entropulse.auto_pulse && series.size() >= static_cast<std::size_t>(config_.entropulse.plateau.window) &&
          detect_plateau(series, config_.entropulse.plateau)) {
        rec.plateau = true;
        rec.note = "plateau detected";
        break;
      }
    }
  } catch (...) {
    shutdown();
    throw;
  }
  shutdown();
  auto c = replay.counters();
  replay_totals_.pushes += c.pushes;
  replay_totals_.drained += c.drained;
  replay_totals_.evicted_capacity += c.evicted_capacity;
  replay_totals_.evicted_stale += c.evicted_stale;
  replay_totals_.rejected_stale += c.rejected_stale;
  replay_totals_.rejected_capacity += c.rejected_capacity;
  replay_totals_.batches += c.batches;
  return rec;
}

}  // namespace deskgrid
