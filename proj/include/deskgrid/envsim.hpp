#pragma once

#include <array>
#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "deskgrid/action.hpp"
#include "deskgrid/api_registry.hpp"
#include "deskgrid/apps.hpp"
#include "deskgrid/trajectory.hpp"

namespace deskgrid {

inline constexpr int kScreenCols = 32;
inline constexpr int kScreenRows = 24;
inline constexpr int kSheetSize = 8;
inline constexpr std::size_t kMaxCandidates = 64;

// Screen widgets shared by all apps. App tabs sit in the rightmost column;
// the files toolbar sits on the bottom row.
inline constexpr int kTabColumn = kScreenCols - 1;
inline constexpr int kToolbarRow = kScreenRows - 1;
inline constexpr int kButtonNewFolder = 0;
inline constexpr int kButtonNewFile = 1;
inline constexpr int kButtonDelete = 2;
inline constexpr int kButtonRename = 3;

/// A subgoal of a task or one item of an initial state.
///
///   cell A1=v     sheet cell equals v (empty v: cleared)
///   sum B4=B1:B3  cell holds the integer sum of the range
///   dir /p        directory exists          file /p   file exists
///   absent /p     path does not exist
///   line text     saved document has a line equal to text
///   noline text   saved document has no line equal to text
///   replace a>b   saved document never contains a and contains b
struct Fact {
  enum class Kind { kCell, kSum, kDir, kFile, kAbsent, kLine, kNoLine, kReplace };
  Kind kind = Kind::kCell;
  std::string a;
  std::string b;

  App app() const;
  std::string to_string() const;
  friend bool operator==(const Fact&, const Fact&) = default;
};

using FactList = std::vector<Fact>;

std::string facts_to_string(const FactList& facts);
FactList parse_facts(std::string_view text);

struct TaskSpec {
  std::string task_id;
  App app = App::kSheet;
  Domain domain = Domain::kOffice;
  FactList goal;
  FactList initial;
  int max_steps = 1;
  std::string verifier_id = "fraction";

  /// Apps present in the environment: the primary app first, then every app
  /// referenced by the goal or the initial state.
  std::vector<App> apps() const;
  std::string goal_text() const { return facts_to_string(goal); }

  /// Suite record: id, app, domain, max_steps, verifier, initial, goal (tab-separated).
  std::string to_line() const;
  static TaskSpec from_line(std::string_view line);
  friend bool operator==(const TaskSpec&, const TaskSpec&) = default;
};

enum class FocusKind { kNone, kTab, kCell, kPrompt, kEntry, kConfirm, kLine, kLineEnd };

struct Focus {
  FocusKind kind = FocusKind::kNone;
  int index = 0;          // cell index or line index
  std::string op;         // prompt op: mkdir | touch | rename
  std::string path;       // selected / confirmed / renamed entry
  std::string text;       // prompt text

  std::string to_string() const;
  static Focus parse(std::string_view s);
  friend bool operator==(const Focus&, const Focus&) = default;
};

struct EnvState {
  std::vector<App> apps;
  App active = App::kSheet;
  Focus focus;
  std::array<std::string, kSheetSize * kSheetSize> cells;
  std::map<std::string, bool> entries;  // path -> is_dir
  std::vector<std::string> lines;       // editor buffer
  std::vector<std::string> saved;       // last saved document
  int step_count = 0;
  int max_steps = 1;
  bool done = false;
  std::string last_result;
  std::uint64_t seed = 0;

  bool has_app(App app) const;
  bool modified() const { return lines != saved; }

  std::string serialize() const;
  static EnvState deserialize(std::string_view text);
  friend bool operator==(const EnvState&, const EnvState&) = default;
};

struct StepOutcome {
  std::string observation;
  bool done = false;
  bool accepted = false;
  bool malformed = false;
  std::string message;
};

enum class ActionMode { kApiGui, kGuiOnly };
std::string_view action_mode_name(ActionMode mode);
std::optional<ActionMode> parse_action_mode(std::string_view s);

// Cells are addressed A1..H8; index = row * 8 + col.
std::optional<int> parse_cell(std::string_view name);
std::string cell_name(int index);
bool fact_satisfied(const Fact& fact, const EnvState& state);

/// Verifiers by id: "fraction" (satisfied-subgoal fraction) and "strict"
/// (1.0 only when every subgoal holds).
bool has_verifier(std::string_view id);
double run_verifier(std::string_view id, const FactList& goal, const EnvState& state);

/// Canonical text listing of state: header, one section per present app, and
/// the API names callable in this environment. Stable ordering.
std::string serialize_observation(const EnvState& state, const std::vector<std::string>& api_names);

/// Inverse of serialize_observation for everything a scripted solver needs.
EnvState parse_observation(std::string_view observation);

/// One simulated desktop. Single-threaded: one step in flight at a time.
class Env {
 public:
  Env(TaskSpec task, std::uint64_t seed, ActionMode mode = ActionMode::kApiGui,
      const ApiRegistry& registry = default_registry());

  StepOutcome step(std::string_view raw_text);
  StepOutcome step(const Action& action) { return step(action.to_string()); }

  double verify() const;
  std::string observation() const;
  /// Grammar closure at the current state over the task vocabulary, capped at
  /// kMaxCandidates, in a fixed order.
  std::vector<Action> candidates() const;

  const EnvState& state() const { return state_; }
  const TaskSpec& task() const { return task_; }
  ActionMode mode() const { return mode_; }
  bool done() const { return state_.done; }
  std::vector<std::string> api_names() const;

 private:
  bool apply(const Action& action, std::string& message);
  bool apply_api(const Action& action, std::string& message);

  TaskSpec task_;
  ActionMode mode_;
  const ApiRegistry* registry_;
  EnvState state_;
};

/// Validates the task and builds its environment in the initial state.
/// Throws UnknownVerifier / InvalidTask.
Env create_env(const TaskSpec& task, std::uint64_t seed, ActionMode mode = ActionMode::kApiGui,
               const ApiRegistry& registry = default_registry());
void validate_task(const TaskSpec& task);
EnvState initial_state(const TaskSpec& task, std::uint64_t seed);

struct OpResult {
  bool accepted = false;
  std::string message;
};

/// Executes a built-in op. With `guarded` false, bad input raises
/// std::runtime_error instead of a rejected result (an artifact without
/// error handling).
OpResult apply_op(EnvState& state, const OpDef& op, const std::map<std::string, std::string>& slots,
                  bool guarded = true);

/// Rule-based step rewards. A trajectory solves its task iff accuracy == 1.0;
/// then every well-formed, accepted step earns 1 and every other step 0. A
/// failed trajectory earns 0 on every step. Writes the rewards into `traj`.
/// Throws IncompleteTrajectory when no terminal verification was recorded.
std::vector<double> assign_rewards(Trajectory& traj, double accuracy);

// --- scripted solver ---------------------------------------------------

/// Next action of a scripted solver that sees the goal and the state. With a
/// non-empty `expertise`, only subgoals of those apps are pursued; returns
/// nullopt when the remaining work lies outside it. DONE once verified.
std::optional<Action> plan_next(const FactList& goal, const EnvState& state, ActionMode mode,
                                const std::vector<App>& expertise = {});

/// Drives a fresh environment with the solver; the returned sequence ends in DONE.
std::vector<Action> scripted_solution(const TaskSpec& task, ActionMode mode);

// --- task suite ------------------------------------------------------------

enum class SuiteProfile { kSmoke, kAblation };
std::optional<SuiteProfile> parse_suite_profile(std::string_view s);

std::vector<TaskSpec> task_suite(SuiteProfile profile);
std::string suite_to_text(const std::vector<TaskSpec>& tasks);
std::vector<TaskSpec> parse_suite(std::string_view text);
const TaskSpec* find_task(const std::vector<TaskSpec>& tasks, std::string_view id);

}  // namespace deskgrid
