#include "deskgrid/config.hpp"

#include <algorithm>
#include <cctype>
#include <charconv>
#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

namespace deskgrid {

namespace {

KeySchema key_int(std::string key, long long def, double lo, double hi, std::string doc) {
  return {std::move(key), KeyType::kInt, std::to_string(def), lo, hi, {}, std::move(doc)};
}

KeySchema key_real(std::string key, double def, double lo, double hi, std::string doc) {
  return {std::move(key), KeyType::kReal, format_double(def), lo, hi, {}, std::move(doc)};
}

KeySchema key_bool(std::string key, bool def, std::string doc) {
  return {std::move(key), KeyType::kBool, def ? "true" : "false", 0, 0, {}, std::move(doc)};
}

KeySchema key_str(std::string key, std::string def, std::vector<std::string> choices, std::string doc) {
  return {std::move(key), KeyType::kString, std::move(def), 0, 0, std::move(choices), std::move(doc)};
}

std::optional<long long> to_int(std::string_view s) {
  long long v = 0;
  auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || p != s.data() + s.size()) return std::nullopt;
  return v;
}

std::optional<double> to_real(std::string_view s) {
  if (s.empty()) return std::nullopt;
  std::string tmp(s);
  char* end = nullptr;
  double v = std::strtod(tmp.c_str(), &end);
  if (end != tmp.c_str() + tmp.size() || !std::isfinite(v)) return std::nullopt;
  return v;
}

std::optional<bool> to_bool(std::string_view s) {
  if (s == "true" || s == "1" || s == "yes" || s == "on") return true;
  if (s == "false" || s == "0" || s == "no" || s == "off") return false;
  return std::nullopt;
}

void check_value(const KeySchema& k, const std::string& v) {
  auto bad = [&](const std::string& why) { throw Error(Errc::kInvalidConfig, k.key + " = \"" + v + "\": " + why); };
  switch (k.type) {
    case KeyType::kInt: {
      auto i = to_int(v);
      if (!i) bad("not an integer");
      if (*i < k.min || *i > k.max) bad("outside [" + format_double(k.min) + ", " + format_double(k.max) + "]");
      break;
    }
    case KeyType::kReal: {
      auto d = to_real(v);
      if (!d) bad("not a number");
      if (*d < k.min || *d > k.max) bad("outside [" + format_double(k.min) + ", " + format_double(k.max) + "]");
      break;
    }
    case KeyType::kBool:
      if (!to_bool(v)) bad("not a boolean");
      break;
    case KeyType::kString:
      if (!k.choices.empty() && std::find(k.choices.begin(), k.choices.end(), v) == k.choices.end())
        bad("expected one of " + join(k.choices, ", "));
      break;
  }
}

}  // namespace

const std::vector<KeySchema>& config_schema() {
  static const std::vector<KeySchema> schema = {
      key_str("run.mode", "api", {"api", "gui"}, "action space: api (API + GUI) or gui (GUI only)"),
      key_int("run.seed", 1, 0, 4.0e18, "master seed"),
      key_str("run.schedule", "", {}, "schedule file, one `bc|rl|sft <n>` per line"),
      key_str("suite.profile", "smoke", {"smoke", "ablation"}, "built-in task suite"),
      key_str("suite.file", "", {}, "suite file; overrides suite.profile"),
      key_str("cluster.bind", "127.0.0.1:7700", {}, "controller wire-protocol address"),
      key_str("cluster.http", "127.0.0.1:7701", {}, "controller HTTP address"),
      key_str("cluster.controller", "", {}, "external controller for train; empty starts an embedded cluster"),
      key_int("cluster.slots", 16, 1, 4096, "env slots per worker"),
      key_int("cluster.embedded_workers", 2, 1, 256, "workers of the embedded cluster"),
      key_int("cluster.concurrency", 16, 1, 4096, "concurrent rollout sessions of the trainer"),
      key_real("cluster.heartbeat_interval", 1.0, 0.01, 3600, "seconds between heartbeats"),
      key_int("cluster.heartbeat_timeout_intervals", 3, 1, 1000, "silent intervals before a worker is dead"),
      key_int("trainer.group_size", 8, 2, 1024, "G: rollouts per task per wave"),
      key_real("trainer.clip_eps", 0.2, 1e-6, 1.0, "PPO clip range"),
      key_real("trainer.kl_coef", 0.01, 0.0, 100.0, "KL penalty weight against the reference policy"),
      key_real("trainer.lr", 0.05, 1e-9, 1e4, "RL learning rate (plain gradient descent)"),
      key_int("pipeline.staleness_limit", 1, 1, 1000, "K: max policy-version gap of consumed rollouts"),
      key_int("pipeline.tasks_per_wave", 8, 1, 100000, "tasks per rollout wave"),
      key_int("pipeline.min_steps", 128, 1, 1e9, "minimum steps per training batch"),
      key_int("pipeline.max_steps", 4096, 1, 1e9, "maximum steps per training batch"),
      key_int("pipeline.capacity", 4096, 1, 1e9, "replay capacity in trajectories"),
      key_str("bc.teachers", "", {}, "teachers file for bc phases"),
      key_int("bc.n_per_task", 4, 1, 100000, "rollouts per teacher per task"),
      key_real("bc.lr", 1.0, 1e-9, 1e4, "behavior-cloning learning rate"),
      key_int("bc.augment_rounds", 4, 0, 1000, "pool rollouts per partial task"),
      key_int("entropulse.per_task_k", 2, 1, 100000, "successful rollouts per task in the SFT set"),
      key_real("entropulse.lr", 1.0, 1e-9, 1e4, "SFT learning rate"),
      key_bool("entropulse.auto_pulse", false, "insert an SFT phase when RL plateaus"),
      key_int("entropulse.plateau_window", 20, 2, 100000, "W: updates in the plateau window"),
      key_real("entropulse.plateau_slope", 0.002, 0.0, 1e3, "reward slope below which RL has plateaued"),
      key_real("entropulse.entropy_floor", 0.5, 0.0, 1e3, "entropy below which RL has collapsed"),
      key_int("eval.episodes_per_task", 1, 1, 100000, "greedy episodes per task"),
      key_int("eval.seed", 0, 0, 4.0e18, "evaluation seed"),
  };
  return schema;
}

const KeySchema* find_key(std::string_view key) {
  for (const auto& k : config_schema())
    if (k.key == key) return &k;
  return nullptr;
}

std::string env_name(std::string_view key) {
  std::string out = "DESKGRID_";
  for (char c : key) out += c == '.' ? '_' : static_cast<char>(std::toupper(static_cast<unsigned char>(c)));
  return out;
}

Config::Config() {
  for (const auto& k : config_schema()) {
    values_[k.key] = k.default_value;
    origins_[k.key] = "default";
  }
}

void Config::set(const std::string& key, const std::string& value, const std::string& origin) {
  const KeySchema* k = find_key(key);
  if (!k) throw Error(Errc::kInvalidConfig, "unknown config key " + key + " (" + origin + ")");
  check_value(*k, value);
  values_[key] = value;
  origins_[key] = origin;
}

void Config::set_assignment(std::string_view assignment) {
  auto eq = assignment.find('=');
  if (eq == std::string_view::npos) throw Error(Errc::kInvalidConfig, "expected key=value: " + std::string(assignment));
  set(std::string(trim(assignment.substr(0, eq))), std::string(trim(assignment.substr(eq + 1))));
}

void Config::merge_text(std::string_view text, const std::string& origin) {
  int n = 0;
  for (const auto& raw : split(text, '\n')) {
    ++n;
    auto line = trim(raw);
    if (line.empty() || line.front() == '#') continue;
    auto eq = line.find('=');
    if (eq == std::string_view::npos)
      throw Error(Errc::kParse, origin + ":" + std::to_string(n) + ": expected `key = value`");
    set(std::string(trim(line.substr(0, eq))), std::string(trim(line.substr(eq + 1))),
        origin + ":" + std::to_string(n));
  }
}

void Config::merge_file(const std::string& path) { merge_text(read_text_file(path), path); }

void Config::merge_env() {
  for (const auto& k : config_schema()) {
    std::string name = env_name(k.key);
    if (const char* v = std::getenv(name.c_str())) set(k.key, v, name);
  }
}

const std::string& Config::str(std::string_view key) const {
  auto it = values_.find(std::string(key));
  if (it == values_.end()) throw Error(Errc::kInvalidConfig, "unknown config key " + std::string(key));
  return it->second;
}

long long Config::integer(std::string_view key) const { return *to_int(str(key)); }
double Config::real(std::string_view key) const { return *to_real(str(key)); }
bool Config::flag(std::string_view key) const { return *to_bool(str(key)); }
std::string Config::origin(std::string_view key) const { return origins_.at(std::string(key)); }

std::string Config::to_text() const {
  std::string out;
  for (const auto& [k, v] : values_) out += k + " = " + v + "\n";
  return out;
}

nlohmann::json Config::to_json() const {
  nlohmann::json j = nlohmann::json::object();
  for (const auto& [k, v] : values_) j[k] = v;
  return j;
}

std::vector<TaskSpec> load_suite(const Config& c) {
  if (!c.str("suite.file").empty()) return parse_suite(read_text_file(c.str("suite.file")));
  return task_suite(*parse_suite_profile(c.str("suite.profile")));
}

ActionMode run_mode(const Config& c) {
  auto m = parse_action_mode(c.str("run.mode"));
  if (!m) throw Error(Errc::kInvalidConfig, "run.mode: unknown mode " + c.str("run.mode"));
  return *m;
}

RunConfig make_run_config(const Config& c) {
  RunConfig rc;
  rc.tasks = load_suite(c);
  rc.trainer.group_size = static_cast<int>(c.integer("trainer.group_size"));
  rc.trainer.clip_eps = c.real("trainer.clip_eps");
  rc.trainer.kl_coef = c.real("trainer.kl_coef");
  rc.trainer.learning_rate = c.real("trainer.lr");
  rc.pipeline.tasks_per_wave = static_cast<int>(c.integer("pipeline.tasks_per_wave"));
  rc.pipeline.min_steps = static_cast<std::size_t>(c.integer("pipeline.min_steps"));
  rc.pipeline.max_steps = static_cast<std::size_t>(c.integer("pipeline.max_steps"));
  rc.pipeline.capacity = static_cast<std::size_t>(c.integer("pipeline.capacity"));
  rc.pipeline.staleness_limit = c.integer("pipeline.staleness_limit");
  rc.pipeline.mode = run_mode(c);
  rc.pipeline.seed = static_cast<std::uint64_t>(c.integer("run.seed"));
  if (!c.str("bc.teachers").empty()) rc.bc.teachers = parse_teachers(read_text_file(c.str("bc.teachers")));
  rc.bc.n_per_task = static_cast<int>(c.integer("bc.n_per_task"));
  rc.bc.lr = c.real("bc.lr");
  rc.bc.augment_rounds = static_cast<int>(c.integer("bc.augment_rounds"));
  rc.entropulse.per_task_k = static_cast<int>(c.integer("entropulse.per_task_k"));
  rc.entropulse.lr = c.real("entropulse.lr");
  rc.entropulse.auto_pulse = c.flag("entropulse.auto_pulse");
  rc.entropulse.plateau.window = static_cast<int>(c.integer("entropulse.plateau_window"));
  rc.entropulse.plateau.min_slope = c.real("entropulse.plateau_slope");
  rc.entropulse.plateau.entropy_floor = c.real("entropulse.entropy_floor");
  rc.eval.episodes_per_task = static_cast<int>(c.integer("eval.episodes_per_task"));
  rc.eval.seed = static_cast<std::uint64_t>(c.integer("eval.seed"));
  rc.eval.greedy = true;
  rc.validate();
  return rc;
}

HeartbeatConfig heartbeat_config(const Config& c) {
  HeartbeatConfig hb;
  hb.interval = c.real("cluster.heartbeat_interval");
  hb.timeout_intervals = static_cast<int>(c.integer("cluster.heartbeat_timeout_intervals"));
  return hb;
}

ControllerConfig controller_config(const Config& c) {
  ControllerConfig cc;
  cc.bind = parse_host_port(c.str("cluster.bind"));
  cc.http = parse_host_port(c.str("cluster.http"));
  cc.heartbeat = heartbeat_config(c);
  return cc;
}

WorkerConfig worker_config(const Config& c) {
  WorkerConfig wc;
  wc.controller = parse_host_port(c.str("cluster.bind"));
  wc.slots = static_cast<int>(c.integer("cluster.slots"));
  wc.heartbeat = std::chrono::milliseconds(static_cast<long long>(c.real("cluster.heartbeat_interval") * 1000));
  return wc;
}

std::string read_text_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(Errc::kInvalidConfig, "cannot read " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_text_file(const std::string& path, std::string_view text) {
  auto parent = std::filesystem::path(path).parent_path();
  std::error_code ec;
  if (!parent.empty()) std::filesystem::create_directories(parent, ec);
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(Errc::kIo, "cannot write " + path);
  out << text;
  if (!out) throw Error(Errc::kIo, "write failed: " + path);
}

}  // namespace deskgrid
