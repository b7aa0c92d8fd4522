#pragma once

#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "deskgrid/cluster.hpp"
#include "deskgrid/training.hpp"

namespace deskgrid {

inline constexpr std::string_view kVersion = "0.1.0";

enum class KeyType { kInt, kReal, kBool, kString };

struct KeySchema {
  std::string key;
  KeyType type = KeyType::kString;
  std::string default_value;
  double min = 0;
  double max = 0;
  std::vector<std::string> choices;  // strings only; empty means free text
  std::string doc;
};

const std::vector<KeySchema>& config_schema();
const KeySchema* find_key(std::string_view key);
/// DESKGRID_ + key upper-cased with '.' -> '_'.
std::string env_name(std::string_view key);

/// Flat dotted keys over the schema defaults. Every value is validated as it
/// is set; unknown keys are rejected.
class Config {
 public:
  Config();

  /// `key = value` lines, '#' comments. Throws InvalidConfig or Parse.
  void merge_text(std::string_view text, const std::string& origin = "config");
  void merge_file(const std::string& path);
  /// Applies DESKGRID_* variables from the process environment.
  void merge_env();
  void set(const std::string& key, const std::string& value, const std::string& origin = "override");
  /// "key=value".
  void set_assignment(std::string_view assignment);

  const std::string& str(std::string_view key) const;
  long long integer(std::string_view key) const;
  double real(std::string_view key) const;
  bool flag(std::string_view key) const;
  std::string origin(std::string_view key) const;

  /// Resolved `key = value` lines, sorted; feeding them back reproduces the config.
  std::string to_text() const;
  nlohmann::json to_json() const;

 private:
  std::map<std::string, std::string> values_;
  std::map<std::string, std::string> origins_;
};

/// Tasks from `suite.file` when set, else the built-in `suite.profile`.
std::vector<TaskSpec> load_suite(const Config& c);
RunConfig make_run_config(const Config& c);
ActionMode run_mode(const Config& c);
HeartbeatConfig heartbeat_config(const Config& c);
ControllerConfig controller_config(const Config& c);
WorkerConfig worker_config(const Config& c);

std::string read_text_file(const std::string& path);
void write_text_file(const std::string& path, std::string_view text);

}  // namespace deskgrid
