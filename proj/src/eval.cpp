#include "deskgrid/eval.hpp"

#include <algorithm>
#include <cstdio>

namespace deskgrid {

double EvalResult::median_success_steps() const {
  std::vector<int> s;
  for (const auto& e : episodes)
    if (e.success) s.push_back(e.steps);
  if (s.empty()) return 0.0;
  std::sort(s.begin(), s.end());
  std::size_t n = s.size();
  return n % 2 ? s[n / 2] : 0.5 * (s[n / 2 - 1] + s[n / 2]);
}

std::size_t EvalResult::successes() const {
  return static_cast<std::size_t>(
      std::count_if(episodes.begin(), episodes.end(), [](const EpisodeEval& e) { return e.success; }));
}

double EvalResult::task_success(std::string_view task_id) const {
  int ok = 0, n = 0;
  for (const auto& e : episodes)
    if (e.task_id == task_id) {
      ok += e.success;
      ++n;
    }
  return n ? static_cast<double>(ok) / n : 0.0;
}

std::string EvalResult::table_header() {
  char buf[128];
  std::snprintf(buf, sizeof buf, "%-16s %7s %7s %7s %13s %9s %7s", "", "OS", "Office", "Daily", "Professional",
                "Workflow", "Avg");
  return buf;
}

std::string EvalResult::table(const std::string& row_label) const {
  auto pct = [&](Domain d) {
    auto it = domain_success.find(d);
    return it == domain_success.end() ? 0.0 : 100.0 * it->second;
  };
  char buf[160];
  std::snprintf(buf, sizeof buf, "%-16s %7.1f %7.1f %7.1f %13.1f %9.1f %7.1f", row_label.c_str(), pct(Domain::kOS),
                pct(Domain::kOffice), pct(Domain::kDaily), pct(Domain::kProfessional), pct(Domain::kWorkflow),
                100.0 * average);
  return buf;
}

EvalResult evaluate(const std::vector<TaskSpec>& tasks, ActionMode mode, const ActorFactory& actors,
                    RolloutBackend& backend, const EvalConfig& config) {
  if (config.episodes_per_task < 1) throw Error(Errc::kInvalidConfig, "episodes_per_task must be >= 1");
  std::vector<RolloutRequest> reqs;
  std::vector<Domain> domains;
  for (std::size_t i = 0; i < tasks.size(); ++i)
    for (int k = 0; k < config.episodes_per_task; ++k) {
      RolloutRequest r;
      r.task = tasks[i];
      r.seed = mix_seed(config.seed, fnv1a("eval"), i, static_cast<std::uint64_t>(k));
      r.group_id = i;
      r.mode = mode;
      r.source = "eval";
      reqs.push_back(std::move(r));
      domains.push_back(tasks[i].domain);
    }
  auto trajs = backend.run(reqs, actors);
  EvalResult res;
  std::map<Domain, std::pair<int, int>> per;
  for (std::size_t i = 0; i < trajs.size(); ++i) {
    const auto& t = trajs[i];
    EpisodeEval e;
    e.task_id = t.task_id;
    e.domain = domains[i];
    e.success = t.success;
    e.accuracy = t.accuracy;
    e.steps = static_cast<int>(t.steps.size());
    if (!t.steps.empty() && t.steps.back().action == "DONE") --e.steps;
    res.episodes.push_back(e);
    auto& [ok, n] = per[e.domain];
    ok += e.success;
    ++n;
  }
  for (const auto& [d, c] : per) res.domain_success[d] = static_cast<double>(c.first) / c.second;
  if (!trajs.empty()) res.average = static_cast<double>(res.successes()) / static_cast<double>(trajs.size());
  return res;
}

EvalResult evaluate_policy(const std::vector<TaskSpec>& tasks, ActionMode mode, const PolicyParams& params,
                           RolloutBackend& backend, const EvalConfig& config) {
  auto shared = std::make_shared<const PolicyParams>(params);
  bool greedy = config.greedy;
  return evaluate(
      tasks, mode, [&](const RolloutRequest&) { return std::make_unique<PolicyActor>(shared, greedy); }, backend,
      config);
}

}  // namespace deskgrid
