#include "deskgrid/policy.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <iterator>
#include <limits>

#include "deskgrid/envsim.hpp"

namespace deskgrid {

namespace {

std::uint64_t mix_token(std::uint64_t h, std::string_view s) { return fnv1a(s, splitmix64(h)); }

std::uint32_t bucket(std::uint64_t h, std::size_t dim) { return static_cast<std::uint32_t>(splitmix64(h) % dim); }

std::string_view line_value(std::string_view context, std::string_view prefix) {
  std::size_t pos = 0;
  while (pos < context.size()) {
    auto end = context.find('\n', pos);
    if (end == std::string_view::npos) end = context.size();
    auto line = context.substr(pos, end - pos);
    if (starts_with(line, prefix)) return line.substr(prefix.size());
    pos = end + 1;
  }
  return {};
}

std::vector<std::string> split_on(std::string_view s, std::string_view sep) {
  std::vector<std::string> out;
  std::size_t pos = 0;
  while (true) {
    auto next = s.find(sep, pos);
    if (next == std::string_view::npos) {
      out.emplace_back(s.substr(pos));
      return out;
    }
    out.emplace_back(s.substr(pos, next - pos));
    pos = next + sep.size();
  }
}

}  // namespace

ContextKey context_key(std::string_view context) {
  ContextKey key;
  key.goal = fnv1a(line_value(context, "goal: "));
  auto prev = line_value(context, "prev: ");
  key.prev_kind = prev.empty() || prev == "none" ? std::string("none") : action_kind(prev);
  key.active_app = std::string(line_value(context, "app="));
  auto focus = line_value(context, "focus=");
  key.focus_kind = std::string(focus.substr(0, focus.find(':')));
  auto hist = line_value(context, "history: ");
  if (!hist.empty() && hist != "none") key.history = split_on(hist, " | ");

  auto obs = context.find("app=");
  std::uint64_t h = fnv1a("state");
  if (obs != std::string_view::npos) {
    std::size_t pos = obs;
    while (pos < context.size()) {
      auto end = context.find('\n', pos);
      if (end == std::string_view::npos) end = context.size();
      auto line = context.substr(pos, end - pos);
      if (!starts_with(line, "steps=")) h = fnv1a(line, fnv1a("\n", h));
      pos = end + 1;
    }
  }
  key.state = h;
  if (obs != std::string_view::npos) {
    try {
      FactList goal = parse_facts(line_value(context, "goal: "));
      EnvState st = parse_observation(context.substr(obs));
      int n = 0;
      for (const auto& f : goal) n += !fact_satisfied(f, st);
      key.pending = std::min(n, 3);
    } catch (const Error&) {
      key.pending = -1;
    }
  }
  return key;
}

std::string action_kind(std::string_view a) {
  if (a == "DONE") return "done";
  if (starts_with(a, "CLICK(")) {
    auto comma = a.find(',');
    auto x = a.substr(6, comma - 6);
    auto y = a.substr(comma + 1, a.size() - comma - 2);
    if (x == "31") return "tab";
    if (y == "23") return "toolbar";
    return "click";
  }
  if (starts_with(a, "TYPE(")) return "type";
  if (starts_with(a, "KEY(\"")) return "key:" + std::string(a.substr(5, a.size() - 7));
  if (starts_with(a, "SCROLL(")) return "scroll";
  if (starts_with(a, "API ")) return "api:" + std::string(a.substr(4, a.find('(') - 4));
  return "other";
}

std::vector<std::uint32_t> featurize(const ContextKey& key, std::string_view action, std::size_t dim) {
  const std::string kind = action_kind(action);
  std::vector<std::uint32_t> out;
  out.reserve(kMaxFeaturesPerPair);
  out.push_back(bucket(mix_token(key.goal ^ (key.state * 31), action) ^ 0x01, dim));
  out.push_back(bucket(mix_token(key.goal, action) ^ 0x02, dim));
  out.push_back(bucket(mix_token(key.goal, kind) ^ 0x03, dim));
  out.push_back(bucket(mix_token(fnv1a(key.focus_kind), kind) ^ 0x04, dim));
  out.push_back(bucket(mix_token(fnv1a(key.active_app), kind) ^ 0x05, dim));
  out.push_back(bucket(mix_token(fnv1a(key.prev_kind), kind) ^ 0x06, dim));
  out.push_back(bucket(fnv1a(kind) ^ 0x07, dim));
  out.push_back(bucket(mix_token(static_cast<std::uint64_t>(key.pending + 1), kind) ^ 0x08, dim));
  auto repeats = std::count(key.history.begin(), key.history.end(), action);
  out.push_back(bucket(mix_token(static_cast<std::uint64_t>(std::min<long>(repeats, 2)), kind) ^ 0x09, dim));
  return out;
}

PolicyParams PolicyParams::zeros(std::size_t dim) {
  PolicyParams p;
  p.weights.assign(dim, 0.0);
  return p;
}

FeaturizedStep::FeaturizedStep(std::string_view context, const std::vector<std::string>& candidates,
                               std::size_t dim) {
  if (candidates.empty()) throw Error(Errc::kEmptyCandidates, "no candidate actions");
  if (dim == 0) throw Error(Errc::kInvalidConfig, "feature dimension is 0");
  ContextKey key = context_key(context);
  phi.reserve(candidates.size());
  for (const auto& c : candidates) phi.push_back(featurize(key, c, dim));
}

std::vector<double> softmax_log_probs(const PolicyParams& params, const FeaturizedStep& fs) {
  std::vector<double> s(fs.size());
  for (std::size_t b = 0; b < fs.size(); ++b) {
    double v = 0.0;
    for (auto i : fs.phi[b]) v += params.weights[i];
    s[b] = v;
  }
  double m = *std::max_element(s.begin(), s.end());
  double z = 0.0;
  for (double v : s) z += std::exp(v - m);
  double lse = m + std::log(z);
  for (double& v : s) v -= lse;
  return s;
}

std::vector<double> softmax_probs(const PolicyParams& params, const FeaturizedStep& fs) {
  auto lp = softmax_log_probs(params, fs);
  for (double& v : lp) v = std::exp(v);
  return lp;
}

ActionDistribution distribution(const PolicyParams& params, std::string_view context,
                                const std::vector<std::string>& candidates) {
  FeaturizedStep fs(context, candidates, params.dim());
  ActionDistribution d;
  d.candidates = candidates;
  d.log_probs = softmax_log_probs(params, fs);
  d.probs.reserve(d.log_probs.size());
  for (double v : d.log_probs) d.probs.push_back(std::exp(v));
  return d;
}

std::size_t candidate_index(std::string_view action, const std::vector<std::string>& candidates) {
  for (std::size_t i = 0; i < candidates.size(); ++i)
    if (candidates[i] == action) return i;
  throw Error(Errc::kActionNotCandidate, std::string(action));
}

double log_prob(const PolicyParams& params, std::string_view context, std::string_view action,
                const std::vector<std::string>& candidates) {
  if (candidates.empty()) throw Error(Errc::kEmptyCandidates, "no candidate actions");
  std::size_t idx = candidate_index(action, candidates);
  FeaturizedStep fs(context, candidates, params.dim());
  return softmax_log_probs(params, fs)[idx];
}

double entropy_of(const std::vector<double>& probs) {
  double h = 0.0;
  for (double p : probs)
    if (p > 0.0) h -= p * std::log(p);
  return std::max(0.0, h);
}

double entropy(const PolicyParams& params, std::string_view context, const std::vector<std::string>& candidates) {
  FeaturizedStep fs(context, candidates, params.dim());
  return entropy_of(softmax_probs(params, fs));
}

SparseVector grad_log_prob(const PolicyParams& params, std::string_view context, std::string_view action,
                           const std::vector<std::string>& candidates) {
  if (candidates.empty()) throw Error(Errc::kEmptyCandidates, "no candidate actions");
  std::size_t idx = candidate_index(action, candidates);
  FeaturizedStep fs(context, candidates, params.dim());
  auto p = softmax_probs(params, fs);
  SparseVector g;
  for (auto i : fs.phi[idx]) g.emplace_back(i, 1.0);
  for (std::size_t b = 0; b < fs.size(); ++b)
    for (auto i : fs.phi[b]) g.emplace_back(i, -p[b]);
  std::sort(g.begin(), g.end(), [](const auto& a, const auto& b) { return a.first < b.first; });
  SparseVector merged;
  for (const auto& [i, v] : g) {
    if (!merged.empty() && merged.back().first == i) {
      merged.back().second += v;
    } else {
      merged.emplace_back(i, v);
    }
  }
  return merged;
}

double kl_divergence(const PolicyParams& p, const PolicyParams& ref, std::string_view context,
                     const std::vector<std::string>& candidates) {
  FeaturizedStep fs(context, candidates, p.dim());
  auto lp = softmax_log_probs(p, fs);
  auto lq = softmax_log_probs(ref, fs);
  double kl = 0.0;
  for (std::size_t b = 0; b < lp.size(); ++b) kl += std::exp(lp[b]) * (lp[b] - lq[b]);
  return std::max(0.0, kl);
}

std::size_t argmax_index(const std::vector<double>& probs) {
  std::size_t best = 0;
  for (std::size_t i = 1; i < probs.size(); ++i)
    if (probs[i] > probs[best]) best = i;
  return best;
}

std::size_t sample_index(const std::vector<double>& probs, Rng& rng) {
  double u = rng.uniform();
  double acc = 0.0;
  for (std::size_t i = 0; i < probs.size(); ++i) {
    acc += probs[i];
    if (u < acc) return i;
  }
  return probs.size() - 1;
}

double mean_nll(const PolicyParams& params, const std::vector<SftExample>& dataset) {
  if (dataset.empty()) return 0.0;
  double total = 0.0;
  for (const auto& ex : dataset) {
    FeaturizedStep fs(ex.context, ex.candidates, params.dim());
    total -= softmax_log_probs(params, fs)[candidate_index(ex.action, ex.candidates)];
  }
  return total / static_cast<double>(dataset.size());
}

PolicyParams sft_update(const PolicyParams& params, const std::vector<SftExample>& dataset, double learning_rate) {
  PolicyParams next = params;
  next.version = params.version + 1;
  if (dataset.empty() || learning_rate == 0.0) return next;
  std::vector<double> grad(params.dim(), 0.0);
  const double scale = 1.0 / static_cast<double>(dataset.size());
  for (const auto& ex : dataset) {
    FeaturizedStep fs(ex.context, ex.candidates, params.dim());
    auto p = softmax_probs(params, fs);
    std::size_t a = candidate_index(ex.action, ex.candidates);
    // d(-log p_a) = E_p[phi] - phi_a
    for (std::size_t b = 0; b < fs.size(); ++b)
      for (auto i : fs.phi[b]) grad[i] += scale * p[b];
    for (auto i : fs.phi[a]) grad[i] -= scale;
  }
  for (std::size_t i = 0; i < grad.size(); ++i) next.weights[i] -= learning_rate * grad[i];
  return next;
}

namespace {

constexpr char kMagic[4] = {'D', 'G', 'C', 'K'};
constexpr std::uint32_t kCheckpointFormat = 1;

template <typename T>
void put(std::string& out, T v) {
  char buf[sizeof(T)];
  std::memcpy(buf, &v, sizeof(T));
  out.append(buf, sizeof(T));
}

template <typename T>
T get(std::string_view bytes, std::size_t& pos) {
  if (pos + sizeof(T) > bytes.size()) throw Error(Errc::kCheckpointCorrupt, "truncated checkpoint");
  T v;
  std::memcpy(&v, bytes.data() + pos, sizeof(T));
  pos += sizeof(T);
  return v;
}

}  // namespace

std::string encode_checkpoint(const PolicyParams& params) {
  std::string out(kMagic, 4);
  put<std::uint32_t>(out, kCheckpointFormat);
  put<std::uint64_t>(out, params.dim());
  put<std::int64_t>(out, params.version);
  std::size_t body = out.size();
  for (double w : params.weights) put<double>(out, w);
  put<std::uint64_t>(out, fnv1a(std::string_view(out).substr(body)));
  return out;
}

PolicyParams decode_checkpoint(std::string_view bytes) {
  if (bytes.size() < 4 || std::memcmp(bytes.data(), kMagic, 4) != 0)
    throw Error(Errc::kCheckpointCorrupt, "bad magic");
  std::size_t pos = 4;
  if (get<std::uint32_t>(bytes, pos) != kCheckpointFormat) throw Error(Errc::kCheckpointCorrupt, "unknown format");
  auto dim = get<std::uint64_t>(bytes, pos);
  PolicyParams p;
  p.version = get<std::int64_t>(bytes, pos);
  if (dim == 0 || dim > (std::size_t{1} << 28) || bytes.size() != pos + dim * sizeof(double) + sizeof(std::uint64_t))
    throw Error(Errc::kCheckpointCorrupt, "size mismatch");
  std::size_t body = pos;
  p.weights.resize(dim);
  for (auto& w : p.weights) {
    w = get<double>(bytes, pos);
    if (!std::isfinite(w)) throw Error(Errc::kCheckpointCorrupt, "non-finite weight");
  }
  auto sum = get<std::uint64_t>(bytes, pos);
  if (sum != fnv1a(bytes.substr(body, dim * sizeof(double)))) throw Error(Errc::kCheckpointCorrupt, "checksum");
  return p;
}

void save_checkpoint(const std::string& path, const PolicyParams& params) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(Errc::kIo, "cannot write " + path);
  auto bytes = encode_checkpoint(params);
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
}

PolicyParams load_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(Errc::kIo, "cannot read " + path);
  std::string bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return decode_checkpoint(bytes);
}

}  // namespace deskgrid
