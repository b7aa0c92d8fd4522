#pragma once

#include <cstdint>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "deskgrid/common.hpp"

namespace deskgrid {

inline constexpr std::size_t kDefaultFeatureDim = std::size_t{1} << 16;
inline constexpr std::size_t kMaxFeaturesPerPair = 9;

/// Tokens of a step context that the featurizer conditions on.
struct ContextKey {
  std::uint64_t goal = 0;   // goal line
  std::uint64_t state = 0;  // observation body without the step counter
  std::string prev_kind;    // kind of the previous action, "none" at the start
  std::string active_app;
  std::string focus_kind;
  int pending = -1;         // goal facts not yet met on screen, capped at 3; -1 if unreadable
  std::vector<std::string> history;
};

ContextKey context_key(std::string_view context);

/// Coarse action class used by the generalizing features, e.g. "tab",
/// "click", "type", "key:enter", "api:sheet.fill_row", "done".
std::string action_kind(std::string_view action);

/// Hashed feature indices in [0, dim), each with value 1. At most
/// kMaxFeaturesPerPair entries; collisions add up.
std::vector<std::uint32_t> featurize(const ContextKey& key, std::string_view action, std::size_t dim);

using SparseVector = std::vector<std::pair<std::uint32_t, double>>;

struct PolicyParams {
  std::vector<double> weights;
  std::int64_t version = 0;

  static PolicyParams zeros(std::size_t dim = kDefaultFeatureDim);
  std::size_t dim() const { return weights.size(); }
  friend bool operator==(const PolicyParams&, const PolicyParams&) = default;
};

/// Features of every candidate at one state, computed once and reused.
struct FeaturizedStep {
  std::vector<std::vector<std::uint32_t>> phi;

  FeaturizedStep(std::string_view context, const std::vector<std::string>& candidates, std::size_t dim);
  std::size_t size() const { return phi.size(); }
};

/// Stable softmax of weight . phi over the candidates.
std::vector<double> softmax_probs(const PolicyParams& params, const FeaturizedStep& fs);
std::vector<double> softmax_log_probs(const PolicyParams& params, const FeaturizedStep& fs);

struct ActionDistribution {
  std::vector<std::string> candidates;
  std::vector<double> probs;
  std::vector<double> log_probs;
};

ActionDistribution distribution(const PolicyParams& params, std::string_view context,
                                const std::vector<std::string>& candidates);
double log_prob(const PolicyParams& params, std::string_view context, std::string_view action,
                const std::vector<std::string>& candidates);
double entropy(const PolicyParams& params, std::string_view context, const std::vector<std::string>& candidates);
/// phi(action) - E_p[phi], merged and sorted by index.
SparseVector grad_log_prob(const PolicyParams& params, std::string_view context, std::string_view action,
                           const std::vector<std::string>& candidates);
double kl_divergence(const PolicyParams& p, const PolicyParams& ref, std::string_view context,
                     const std::vector<std::string>& candidates);

double entropy_of(const std::vector<double>& probs);
std::size_t candidate_index(std::string_view action, const std::vector<std::string>& candidates);
std::size_t argmax_index(const std::vector<double>& probs);
std::size_t sample_index(const std::vector<double>& probs, Rng& rng);

struct SftExample {
  std::string context;
  std::string action;
  std::vector<std::string> candidates;
};

double mean_nll(const PolicyParams& params, const std::vector<SftExample>& dataset);
/// One full-batch step on the mean negative log-likelihood; version + 1.
PolicyParams sft_update(const PolicyParams& params, const std::vector<SftExample>& dataset, double learning_rate);

/// Binary checkpoint: magic, format, dim, version, weights, checksum.
void save_checkpoint(const std::string& path, const PolicyParams& params);
PolicyParams load_checkpoint(const std::string& path);
std::string encode_checkpoint(const PolicyParams& params);
PolicyParams decode_checkpoint(std::string_view bytes);

}  // namespace deskgrid
