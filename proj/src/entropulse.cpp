#include "deskgrid/entropulse.hpp"

#include <nlohmann/json.hpp>
#include <numeric>

#include "deskgrid/common.hpp"

namespace deskgrid {

bool SuccessStore::record_success(const Trajectory& traj) {
  if (!traj.success) return false;
  if (!seen_.insert(fnv1a(traj.action_signature())).second) return false;
  by_task_[traj.task_id].push_back(traj);
  return true;
}

std::size_t SuccessStore::size() const {
  std::size_t n = 0;
  for (const auto& [_, v] : by_task_) n += v.size();
  return n;
}

std::string SftDataset::manifest_json() const {
  nlohmann::json j;
  j["seed"] = seed;
  j["per_task_k"] = per_task_k;
  j["examples"] = examples.size();
  j["versions"] = versions();
  auto& items = j["trajectories"] = nlohmann::json::array();
  for (const auto& m : manifest)
    items.push_back({{"task_id", m.task_id},
                     {"policy_version", m.policy_version},
                     {"group_id", m.group_id},
                     {"seed", m.seed},
                     {"source", m.source},
                     {"steps", m.steps}});
  return j.dump(2);
}

std::set<std::int64_t> SftDataset::versions() const {
  std::set<std::int64_t> v;
  for (const auto& m : manifest) v.insert(m.policy_version);
  return v;
}

SftDataset build_sft_dataset(const SuccessStore& store, int per_task_k, std::uint64_t seed) {
  if (store.empty()) throw Error(Errc::kEmptyStore, "no successful trajectories recorded");
  if (per_task_k < 1) throw Error(Errc::kInvalidConfig, "per_task_k must be >= 1");
  SftDataset ds;
  ds.seed = seed;
  ds.per_task_k = per_task_k;
  for (const auto& [task, trajs] : store.by_task()) {
    Rng rng(mix_seed(seed, fnv1a(task)));
    std::vector<std::size_t> idx(trajs.size());
    std::iota(idx.begin(), idx.end(), 0);
    std::size_t take = std::min<std::size_t>(idx.size(), static_cast<std::size_t>(per_task_k));
    for (std::size_t i = 0; i < take; ++i) std::swap(idx[i], idx[i + rng.below(idx.size() - i)]);
    for (std::size_t i = 0; i < take; ++i) {
      const Trajectory& t = trajs[idx[i]];
      ds.manifest.push_back({t.task_id, t.policy_version, t.group_id, t.seed, t.source, t.length()});
      for (const auto& s : t.steps) ds.examples.push_back({s.context, s.action, s.candidates});
    }
  }
  return ds;
}

double mean_entropy(const PolicyParams& params, const std::vector<SftExample>& probe) {
  if (probe.empty()) return 0.0;
  double h = 0.0;
  for (const auto& ex : probe) {
    FeaturizedStep fs(ex.context, ex.candidates, params.dim());
    h += entropy_of(softmax_probs(params, fs));
  }
  return h / static_cast<double>(probe.size());
}

PolicyParams run_sft_phase(const PolicyParams& params, const SftDataset& dataset, int epochs, double lr,
                           const std::vector<SftExample>& probe, const EvalFn& eval, SftReport* report) {
  SftReport r;
  r.epochs = epochs;
  r.examples = dataset.examples.size();
  r.entropy_before = mean_entropy(params, probe);
  r.nll_before = mean_nll(params, dataset.examples);
  if (eval) r.eval_reward_before = eval(params);
  PolicyParams p = params;
  for (int e = 0; e < epochs; ++e) p = sft_update(p, dataset.examples, lr);
  r.entropy_after = mean_entropy(p, probe);
  r.nll_after = mean_nll(p, dataset.examples);
  if (eval) r.eval_reward_after = epochs == 0 ? r.eval_reward_before : eval(p);
  r.eval_stable = r.eval_reward_after >= r.eval_reward_before - 0.05;
  if (report) *report = r;
  return p;
}

double least_squares_slope(const std::vector<double>& y) {
  const double n = static_cast<double>(y.size());
  if (y.size() < 2) return 0.0;
  double mx = (n - 1.0) / 2.0, my = 0.0;
  for (double v : y) my += v;
  my /= n;
  double sxy = 0.0, sxx = 0.0;
  for (std::size_t i = 0; i < y.size(); ++i) {
    double dx = static_cast<double>(i) - mx;
    sxy += dx * (y[i] - my);
    sxx += dx * dx;
  }
  return sxy / sxx;
}

bool detect_plateau(const std::vector<SeriesPoint>& series, const PlateauConfig& config) {
  if (config.window < 2) throw Error(Errc::kInvalidConfig, "plateau window must be >= 2");
  if (series.size() < static_cast<std::size_t>(config.window))
    throw Error(Errc::kSeriesTooShort,
                std::to_string(series.size()) + " points, window " + std::to_string(config.window));
  std::vector<double> rewards;
  double ent = 0.0;
  for (std::size_t i = series.size() - config.window; i < series.size(); ++i) {
    rewards.push_back(series[i].reward);
    ent += series[i].entropy;
  }
  ent /= config.window;
  return least_squares_slope(rewards) < config.min_slope && ent < config.entropy_floor;
}

}  // namespace deskgrid
