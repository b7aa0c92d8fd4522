// Independent reference implementations and random instance generators shared
// by the unit tests and the acceptance binary. Nothing here calls the library
// routine it checks.
#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <string>
#include <vector>

#include "deskgrid/common.hpp"
#include "deskgrid/grpo.hpp"
#include "deskgrid/policy.hpp"
#include "deskgrid/trajectory.hpp"

namespace oracle {

using deskgrid::Rng;

// Step rewards R_ij of one group, pooled over all its trajectories, with the
// mean and population std in long double; std below 1e-8 gives all zeros.
inline std::vector<std::vector<double>> advantages(const std::vector<std::vector<double>>& rewards) {
  long double n = 0, sum = 0;
  for (const auto& t : rewards)
    for (double r : t) {
      sum += r;
      n += 1;
    }
  std::vector<std::vector<double>> out;
  if (n == 0) {
    for (const auto& t : rewards) out.emplace_back(t.size(), 0.0);
    return out;
  }
  long double mean = sum / n, ss = 0;
  for (const auto& t : rewards)
    for (double r : t) ss += (r - mean) * (r - mean);
  long double sd = std::sqrt(ss / n);
  for (const auto& t : rewards) {
    std::vector<double> a;
    for (double r : t) a.push_back(sd < 1e-8L ? 0.0 : static_cast<double>((r - mean) / sd));
    out.push_back(a);
  }
  return out;
}

// The reward rule written out by hand: a solved trajectory (accuracy exactly
// 1) pays 1 for each well-formed, accepted action; anything else pays 0.
inline std::vector<double> rewards(const deskgrid::Trajectory& t, double accuracy) {
  std::vector<double> r;
  for (const auto& s : t.steps) {
    double v = 0.0;
    if (accuracy == 1.0) {
      if (s.well_formed) {
        if (s.accepted) v = 1.0;
      }
    }
    r.push_back(v);
  }
  return r;
}

// log softmax of w . phi over the candidates, in long double.
inline std::vector<long double> log_softmax(const std::vector<double>& w,
                                            const std::vector<std::vector<std::uint32_t>>& phi) {
  std::vector<long double> s;
  for (const auto& f : phi) {
    long double v = 0;
    for (auto i : f) v += w[i];
    s.push_back(v);
  }
  long double m = *std::max_element(s.begin(), s.end()), z = 0;
  for (auto v : s) z += std::exp(v - m);
  for (auto& v : s) v = v - m - std::log(z);
  return s;
}

// Clipped surrogate with exact per-step KL, straight from its definition.
inline double surrogate(const std::vector<deskgrid::TaskGroup>& batch,
                        const std::vector<std::vector<std::vector<double>>>& adv, const std::vector<double>& w,
                        const std::vector<double>& ref, double eps, double beta) {
  long double total = 0;
  long double steps = 0;
  for (std::size_t g = 0; g < batch.size(); ++g)
    for (std::size_t t = 0; t < batch[g].trajectories.size(); ++t) {
      const auto& traj = batch[g].trajectories[t];
      for (std::size_t j = 0; j < traj.steps.size(); ++j) {
        const auto& s = traj.steps[j];
        deskgrid::FeaturizedStep fs(s.context, s.candidates, w.size());
        auto lp = log_softmax(w, fs.phi);
        auto lq = log_softmax(ref, fs.phi);
        std::size_t a = 0;
        while (s.candidates[a] != s.action) ++a;
        long double rho = std::exp(lp[a] - s.old_log_prob);
        long double A = adv[g][t][j];
        long double clipped = std::min(std::max(rho, 1.0L - eps), 1.0L + eps);
        long double kl = 0;
        for (std::size_t b = 0; b < lp.size(); ++b) kl += std::exp(lp[b]) * (lp[b] - lq[b]);
        total += std::min(rho * A, clipped * A) - beta * kl;
        steps += 1;
      }
    }
  return steps == 0 ? 0.0 : static_cast<double>(-total / steps);
}

inline double central_difference(const std::function<double(const std::vector<double>&)>& f, std::vector<double> w,
                                 std::size_t i, double h) {
  const double w0 = w[i];
  w[i] = w0 + h;
  const double up = f(w);
  w[i] = w0 - h;
  const double down = f(w);
  return (up - down) / (2 * h);
}

// max |a - b| / max(max |b|, floor).
inline double relative_error(const std::vector<double>& analytic, const std::vector<double>& numeric,
                             double floor = 1e-8) {
  double diff = 0, scale = floor;
  for (std::size_t i = 0; i < analytic.size(); ++i) {
    diff = std::max(diff, std::abs(analytic[i] - numeric[i]));
    scale = std::max(scale, std::abs(numeric[i]));
  }
  return diff / scale;
}

inline const std::vector<std::string>& action_pool() {
  static const std::vector<std::string> pool = {
      "CLICK(0,0)", "CLICK(3,4)", "CLICK(31,1)", "TYPE(\"alpha\")", "TYPE(\"42\")", "KEY(\"enter\")",
      "KEY(\"ctrl+s\")", "SCROLL(1)", "SCROLL(-2)", "DONE", "API sheet.set_cell(cell=\"A1\",value=\"3\")",
      "API files.mkdir(path=\"/docs\")", "API editor.append_line(text=\"beta\")"};
  return pool;
}

inline std::string random_context(Rng& rng) {
  static const char* goals[] = {"cell A1=3", "dir /docs", "line alpha", "sum B4=B1:B3", "file /a.txt"};
  static const char* apps[] = {"sheet", "files", "editor"};
  static const char* focus[] = {"none", "cell:3", "prompt:mkdir", "line:1"};
  const auto& pool = action_pool();
  std::vector<std::string> history;
  for (std::size_t i = rng.below(3); i > 0; --i) history.push_back(pool[rng.below(pool.size())]);
  std::string obs = std::string("app=") + apps[rng.below(3)] + "\nfocus=" + focus[rng.below(4)] +
                    "\nsteps=" + std::to_string(rng.below(9)) + "\nrow " + std::to_string(rng.below(1000));
  return deskgrid::build_context(goals[rng.below(5)], history, obs);
}

inline std::vector<std::string> random_candidates(Rng& rng, std::size_t min_n = 2, std::size_t max_n = 6) {
  auto pool = action_pool();
  for (std::size_t i = pool.size(); i > 1; --i) std::swap(pool[i - 1], pool[rng.below(i)]);
  pool.resize(min_n + rng.below(max_n - min_n + 1));
  return pool;
}

inline std::vector<double> random_weights(Rng& rng, std::size_t dim, double scale = 1.0) {
  std::vector<double> w(dim);
  for (auto& v : w) v = (2 * rng.uniform() - 1) * scale;
  return w;
}

// A trajectory of `len` steps whose rewards are already assigned.
inline deskgrid::Trajectory random_trajectory(Rng& rng, const std::string& task, std::size_t len, bool solved) {
  deskgrid::Trajectory t;
  t.task_id = task;
  t.complete = true;
  t.success = solved;
  t.accuracy = solved ? 1.0 : 0.5;
  for (std::size_t j = 0; j < len; ++j) {
    deskgrid::Step s;
    s.context = random_context(rng);
    s.candidates = random_candidates(rng);
    s.action = s.candidates[rng.below(s.candidates.size())];
    s.reward = solved && rng.uniform() < 0.7 ? 1.0 : 0.0;
    s.reward_assigned = true;
    s.well_formed = true;
    s.accepted = s.reward == 1.0;
    t.steps.push_back(s);
  }
  return t;
}

}  // namespace oracle
