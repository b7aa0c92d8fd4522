#pragma once

// Random GRPO batches shared by the unit and acceptance tests.

#include <algorithm>
#include <cmath>

#include "oracles.hpp"

namespace oracle {

// A batch whose steps carry old log-probs drawn near the current policy.
struct Instance {
  std::vector<deskgrid::TaskGroup> batch;
  std::vector<deskgrid::AdvantageTable> adv;
  deskgrid::PolicyParams params, reference;
  deskgrid::TrainerConfig cfg;
};

inline Instance random_instance(deskgrid::Rng& rng, std::size_t dim) {
  Instance in;
  in.params.weights = random_weights(rng, dim);
  in.reference.weights = random_weights(rng, dim, 0.5);
  in.cfg.clip_eps = 0.1 + 0.2 * rng.uniform();
  in.cfg.kl_coef = rng.uniform() < 0.3 ? 0.0 : 0.05 * rng.uniform();
  std::size_t groups = 1 + rng.below(2);
  for (std::size_t g = 0; g < groups; ++g) {
    deskgrid::TaskGroup grp{"t" + std::to_string(g), {}};
    std::size_t n = 2 + rng.below(2);
    for (std::size_t i = 0; i < n; ++i) {
      auto traj = random_trajectory(rng, grp.task_id, 1 + rng.below(3), rng.uniform() < 0.6);
      for (auto& s : traj.steps) {
        double lp = deskgrid::log_prob(in.params, s.context, s.action, s.candidates);
        s.old_log_prob = std::min(0.0, lp + 0.4 * (2 * rng.uniform() - 1));
        s.has_old_log_prob = true;
      }
      grp.trajectories.push_back(traj);
    }
    in.batch.push_back(grp);
    in.adv.push_back(deskgrid::compute_advantages(grp));
  }
  return in;
}

// Distance of every step's ratio from the clip boundaries.
inline double kink_margin(const Instance& in) {
  double m = 1e9;
  for (const auto& g : in.batch)
    for (const auto& t : g.trajectories)
      for (const auto& s : t.steps) {
        double rho = std::exp(deskgrid::log_prob(in.params, s.context, s.action, s.candidates) - s.old_log_prob);
        m = std::min({m, std::abs(rho - (1 - in.cfg.clip_eps)), std::abs(rho - (1 + in.cfg.clip_eps))});
      }
  return m;
}

}  // namespace oracle
