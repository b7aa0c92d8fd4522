#include "deskgrid/trajectory.hpp"

#include <fstream>
#include <nlohmann/json.hpp>

#include "deskgrid/common.hpp"

namespace deskgrid {

using nlohmann::json;

std::optional<std::size_t> Step::action_index() const {
  for (std::size_t i = 0; i < candidates.size(); ++i)
    if (candidates[i] == action) return i;
  return std::nullopt;
}

std::string Trajectory::action_signature() const {
  std::string sig = task_id;
  for (const auto& s : steps) {
    sig += '\n';
    sig += s.action;
  }
  return sig;
}

std::string trajectory_to_json_line(const Trajectory& traj) {
  json steps = json::array();
  for (const auto& s : traj.steps) {
    json js = {{"context", s.context},
               {"action", s.action},
               {"candidates", s.candidates},
               {"well_formed", s.well_formed},
               {"accepted", s.accepted}};
    if (s.has_old_log_prob) js["old_log_prob"] = s.old_log_prob;
    if (s.reward_assigned) js["reward"] = s.reward;
    if (!s.teacher.empty()) js["teacher"] = s.teacher;
    steps.push_back(std::move(js));
  }
  json j = {{"schema", kTrajectorySchemaVersion},
            {"task_id", traj.task_id},
            {"accuracy", traj.accuracy},
            {"success", traj.success},
            {"complete", traj.complete},
            {"policy_version", traj.policy_version},
            {"group_id", traj.group_id},
            {"seed", traj.seed},
            {"source", traj.source},
            {"steps", std::move(steps)}};
  return j.dump();
}

Trajectory trajectory_from_json_line(std::string_view line) {
  json j;
  try {
    j = json::parse(line);
  } catch (const json::exception& e) {
    throw Error(Errc::kParse, std::string("trajectory record: ") + e.what());
  }
  if (j.value("schema", 0) != kTrajectorySchemaVersion)
    throw Error(Errc::kParse, "unsupported trajectory schema " + std::to_string(j.value("schema", 0)));
  Trajectory t;
  t.task_id = j.at("task_id").get<std::string>();
  t.accuracy = j.at("accuracy").get<double>();
  t.success = j.at("success").get<bool>();
  t.complete = j.value("complete", true);
  t.policy_version = j.at("policy_version").get<std::int64_t>();
  t.group_id = j.value("group_id", std::uint64_t{0});
  t.seed = j.value("seed", std::uint64_t{0});
  t.source = j.value("source", std::string());
  for (const auto& js : j.at("steps")) {
    Step s;
    s.context = js.at("context").get<std::string>();
    s.action = js.at("action").get<std::string>();
    s.candidates = js.at("candidates").get<std::vector<std::string>>();
    s.well_formed = js.value("well_formed", true);
    s.accepted = js.value("accepted", false);
    if (js.contains("old_log_prob")) {
      s.old_log_prob = js["old_log_prob"].get<double>();
      s.has_old_log_prob = true;
    }
    if (js.contains("reward")) {
      s.reward = js["reward"].get<double>();
      s.reward_assigned = true;
    }
    s.teacher = js.value("teacher", std::string());
    t.steps.push_back(std::move(s));
  }
  return t;
}

void write_trajectory_log(const std::string& path, const std::vector<Trajectory>& trajs, bool append) {
  std::ofstream out(path, append ? std::ios::app : std::ios::trunc);
  if (!out) throw Error(Errc::kIo, "cannot open " + path);
  for (const auto& t : trajs) out << trajectory_to_json_line(t) << '\n';
}

std::vector<Trajectory> read_trajectory_log(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error(Errc::kIo, "cannot open " + path);
  std::vector<Trajectory> out;
  std::string line;
  while (std::getline(in, line)) {
    if (trim(line).empty()) continue;
    out.push_back(trajectory_from_json_line(line));
  }
  return out;
}

std::string build_context(std::string_view goal_text, const std::vector<std::string>& history,
                          std::string_view observation) {
  std::string ctx = "goal: ";
  ctx += goal_text;
  ctx += "\nprev: ";
  ctx += history.empty() ? std::string("none") : history.back();
  ctx += "\nhistory: ";
  ctx += history.empty() ? std::string("none") : join(history, " | ");
  ctx += '\n';
  ctx += observation;
  return ctx;
}

}  // namespace deskgrid
