#include "deskgrid/grpo.hpp"

#include <algorithm>
#include <cmath>
#include <map>

#include "deskgrid/common.hpp"

namespace deskgrid {

void TrainerConfig::validate() const {
  if (group_size < 2) throw Error(Errc::kInvalidConfig, "group_size must be >= 2");
  if (!(clip_eps > 0.0 && clip_eps < 1.0)) throw Error(Errc::kInvalidConfig, "clip_eps must be in (0,1)");
  if (!(kl_coef >= 0.0) || !std::isfinite(kl_coef)) throw Error(Errc::kInvalidConfig, "kl_coef must be >= 0");
  if (!(learning_rate >= 0.0) || !std::isfinite(learning_rate))
    throw Error(Errc::kInvalidConfig, "learning_rate must be >= 0");
  if (updates_per_phase < 1) throw Error(Errc::kInvalidConfig, "updates_per_phase must be >= 1");
}

AdvantageTable compute_advantages(const TaskGroup& group) {
  if (group.trajectories.size() < 2) throw Error(Errc::kGroupTooSmall, group.task_id);
  AdvantageTable t;
  for (const auto& traj : group.trajectories) {
    if (traj.task_id != group.task_id) throw Error(Errc::kMixedTasks, traj.task_id + " in group " + group.task_id);
    for (const auto& s : traj.steps) {
      if (!s.reward_assigned) throw Error(Errc::kIncompleteTrajectory, traj.task_id + ": reward not assigned");
      t.rewards.push_back(s.reward);
    }
  }
  const double n = static_cast<double>(t.rewards.size());
  if (n > 0) {
    double sum = 0.0;
    for (double r : t.rewards) sum += r;
    t.mean = sum / n;
    double ss = 0.0;
    for (double r : t.rewards) ss += (r - t.mean) * (r - t.mean);
    t.std = std::sqrt(ss / n);
  }
  t.degenerate = t.std < kDegenerateStd;
  for (const auto& traj : group.trajectories) {
    std::vector<double> a;
    a.reserve(traj.steps.size());
    for (const auto& s : traj.steps) a.push_back(t.degenerate ? 0.0 : (s.reward - t.mean) / t.std);
    t.advantages.push_back(std::move(a));
  }
  return t;
}

std::vector<TaskGroup> group_batch(const std::vector<Trajectory>& trajectories) {
  std::vector<TaskGroup> groups;
  std::map<std::pair<std::string, std::uint64_t>, std::size_t> index;
  for (const auto& t : trajectories) {
    auto key = std::make_pair(t.task_id, t.group_id);
    auto it = index.find(key);
    if (it == index.end()) {
      index[key] = groups.size();
      groups.push_back(TaskGroup{t.task_id, {t}});
    } else {
      groups[it->second].trajectories.push_back(t);
    }
  }
  return groups;
}

LossResult surrogate_loss(const std::vector<TaskGroup>& batch, const std::vector<AdvantageTable>& advantages,
                          const PolicyParams& params, const PolicyParams& reference, const TrainerConfig& config) {
  LossResult out;
  out.gradient.assign(params.dim(), 0.0);
  const double lo = 1.0 - config.clip_eps, hi = 1.0 + config.clip_eps;
  const double beta = config.kl_coef;
  double objective = 0.0, ent = 0.0, kl_sum = 0.0;
  std::size_t clipped = 0, n = 0;
  std::vector<double> coef;

  for (std::size_t gi = 0; gi < batch.size(); ++gi) {
    const auto& group = batch[gi];
    for (std::size_t ti = 0; ti < group.trajectories.size(); ++ti) {
      const auto& traj = group.trajectories[ti];
      for (std::size_t si = 0; si < traj.steps.size(); ++si) {
        const Step& s = traj.steps[si];
        if (!s.has_old_log_prob) throw Error(Errc::kMissingOldLogProb, traj.task_id);
        const double A = advantages[gi].advantages[ti][si];
        FeaturizedStep fs(s.context, s.candidates, params.dim());
        auto lp = softmax_log_probs(params, fs);
        auto lq = beta > 0.0 ? softmax_log_probs(reference, fs) : lp;
        const std::size_t a = candidate_index(s.action, s.candidates);
        const std::size_t C = fs.size();

        std::vector<double> p(C);
        double kl = 0.0, h = 0.0;
        for (std::size_t b = 0; b < C; ++b) {
          p[b] = std::exp(lp[b]);
          kl += p[b] * (lp[b] - lq[b]);
          if (p[b] > 0.0) h -= p[b] * lp[b];
        }
        const double rho = std::exp(lp[a] - s.old_log_prob);
        const double surr = std::min(rho * A, std::clamp(rho, lo, hi) * A);
        objective += surr - beta * kl;
        ent += h;
        kl_sum += kl;
        ++n;

        // d surr / d logpi(a): rho*A inside the trust band on the active side, else 0.
        const bool active = A >= 0.0 ? rho < hi : rho > lo;
        if (A != 0.0 && !active) ++clipped;
        const double g_surr = active ? rho * A : 0.0;

        // d objective/dw = g_surr (phi_a - E phi) - beta sum_b p_b (l_b - KL) phi_b
        coef.assign(C, 0.0);
        for (std::size_t b = 0; b < C; ++b) {
          coef[b] = -g_surr * p[b];
          if (beta > 0.0) coef[b] -= beta * p[b] * ((lp[b] - lq[b]) - kl);
        }
        coef[a] += g_surr;
        for (std::size_t b = 0; b < C; ++b) {
          if (coef[b] == 0.0) continue;
          for (auto i : fs.phi[b]) out.gradient[i] += coef[b];
        }
      }
    }
  }
  out.steps = n;
  if (n == 0) return out;
  const double inv = 1.0 / static_cast<double>(n);
  out.loss = -objective * inv;
  for (double& g : out.gradient) g *= -inv;
  out.mean_entropy = ent * inv;
  out.mean_kl = kl_sum * inv;
  out.clip_fraction = static_cast<double>(clipped) * inv;
  return out;
}

GrpoTrainer::GrpoTrainer(PolicyParams initial, TrainerConfig config)
    : params_(std::move(initial)), reference_(params_), config_(config) {
  config_.validate();
}

void GrpoTrainer::reset_reference() { reference_ = params_; }

UpdateMetrics GrpoTrainer::update(const std::vector<Trajectory>& batch) {
  auto groups = group_batch(batch);
  std::vector<AdvantageTable> adv;
  adv.reserve(groups.size());
  for (const auto& g : groups) adv.push_back(compute_advantages(g));
  auto res = surrogate_loss(groups, adv, params_, reference_, config_);
  for (double g : res.gradient)
    if (!std::isfinite(g)) throw Error(Errc::kNonFiniteGradient, "update " + std::to_string(updates_ + 1));

  UpdateMetrics m;
  m.update = ++updates_;
  m.loss = res.loss;
  m.mean_entropy = res.mean_entropy;
  m.mean_kl = res.mean_kl;
  m.clip_fraction = res.clip_fraction;
  m.steps = res.steps;
  m.trajectories = batch.size();
  m.reference_version = reference_.version;
  for (const auto& t : batch) {
    m.mean_reward += t.success ? 1.0 : 0.0;
    m.mean_accuracy += t.accuracy;
  }
  if (!batch.empty()) {
    m.mean_reward /= static_cast<double>(batch.size());
    m.mean_accuracy /= static_cast<double>(batch.size());
  }

  for (std::size_t i = 0; i < res.gradient.size(); ++i) params_.weights[i] -= config_.learning_rate * res.gradient[i];
  ++params_.version;
  return m;
}

}  // namespace deskgrid
