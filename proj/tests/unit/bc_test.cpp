#include <gtest/gtest.h>

#include <set>

#include "deskgrid/bc.hpp"
#include "deskgrid/config.hpp"

using namespace deskgrid;

namespace {

Trajectory traj(const std::string& task, double acc) {
  Trajectory t;
  t.task_id = task;
  t.accuracy = acc;
  t.success = acc == 1.0;
  t.complete = true;
  Step s;
  s.context = "ctx " + task;
  s.action = "DONE";
  s.candidates = {"DONE", "SCROLL(1)"};
  t.steps = {s};
  return t;
}

std::vector<TeacherSpec> ablation_teachers() {
  return parse_teachers(read_text_file(std::string(DESKGRID_SOURCE_DIR) + "/data/teachers/ablation.txt"));
}

TeacherSpec optimal(const std::string& id, App app) {
  TeacherSpec t;
  t.teacher_id = id;
  t.kind = TeacherKind::kScriptedOptimal;
  t.expertise = {app};
  return t;
}

}  // namespace

TEST(Bc, ClassifyMatchesDefinition) {
  EXPECT_EQ(classify({0, 0, 0}), StratumClass::kUnsolved);
  EXPECT_EQ(classify({1, 1}), StratumClass::kFullySolved);
  EXPECT_EQ(classify({1, 0}), StratumClass::kPartiallySolved);
  EXPECT_EQ(classify({0.5, 0.5}), StratumClass::kPartiallySolved);
  EXPECT_EQ(classify({0, 0.01}), StratumClass::kPartiallySolved);
}

TEST(Bc, StratifyIsAnExactPartition) {
  Rng rng(4);
  static const double accs[] = {0.0, 0.0, 0.5, 1.0, 1.0, 0.25};
  for (int round = 0; round < 100; ++round) {
    std::vector<Trajectory> log;
    std::vector<std::string> ids;
    std::map<std::string, std::vector<double>> want;
    for (int t = 0; t < 12; ++t) {
      auto id = "t" + std::to_string(t);
      ids.push_back(id);
      for (std::size_t n = 1 + rng.below(5); n > 0; --n) {
        double a = accs[rng.below(6)];
        log.push_back(traj(id, a));
        want[id].push_back(a);
      }
    }
    auto strata = stratify(log, ids);
    ASSERT_EQ(strata.size(), ids.size());
    std::set<std::string> seen;
    for (std::size_t i = 0; i < strata.size(); ++i) {
      EXPECT_EQ(strata[i].task_id, ids[i]);
      EXPECT_TRUE(seen.insert(strata[i].task_id).second);
      EXPECT_EQ(strata[i].accuracies, want[ids[i]]);
      const auto& a = want[ids[i]];
      bool all_zero = std::all_of(a.begin(), a.end(), [](double x) { return x == 0; });
      bool all_one = std::all_of(a.begin(), a.end(), [](double x) { return x == 1; });
      auto expect = all_zero ? StratumClass::kUnsolved : all_one ? StratumClass::kFullySolved
                                                                 : StratumClass::kPartiallySolved;
      EXPECT_EQ(strata[i].cls, expect);
    }
  }
  try {
    stratify({traj("a", 1)}, {"a", "b"});
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), Errc::kMissingTask);
  }
}

TEST(Bc, FilterSuccessKeepsOnlySolvedStepsInOrder) {
  auto a = traj("a", 1.0), b = traj("b", 0.5), c = traj("c", 1.0);
  a.steps.push_back(a.steps[0]);
  a.steps[0].action = "SCROLL(1)";
  auto out = filter_success({a, b, c});
  ASSERT_EQ(out.size(), 3u);
  EXPECT_EQ(out[0].action, "SCROLL(1)");
  EXPECT_EQ(out[1].action, "DONE");
  EXPECT_EQ(out[2].context, "ctx c");
}

TEST(Bc, TeachersFileParses) {
  auto ts = ablation_teachers();
  ASSERT_EQ(ts.size(), 3u);
  EXPECT_EQ(ts[0].teacher_id, "t1");
  EXPECT_EQ(ts[0].kind, TeacherKind::kScriptedNoisy);
  EXPECT_DOUBLE_EQ(ts[0].p_error, 0.3);
  EXPECT_EQ(ts[1].seed, 2u);
  EXPECT_EQ(ts[2].expertise, std::vector<App>{App::kEditor});
  EXPECT_THROW(parse_teachers("t1 wizard"), Error);
  EXPECT_THROW(parse_teachers("t1 scripted_noisy p=2"), Error);
}

TEST(Bc, CollectionIsDeterministicAndTagged) {
  auto tasks = task_suite(SuiteProfile::kSmoke);
  auto teachers = ablation_teachers();
  CollectConfig cfg{2, ActionMode::kApiGui, 9};
  LocalBackend b1(4), b2(2);
  auto x = collect_initial(tasks, teachers, cfg, b1);
  auto y = collect_initial(tasks, teachers, cfg, b2);
  EXPECT_EQ(x.size(), tasks.size() * teachers.size() * 2);
  EXPECT_EQ(x, y);
  std::set<std::string> sources;
  for (const auto& t : x) {
    sources.insert(t.source);
    for (const auto& s : t.steps) EXPECT_EQ("teacher:" + s.teacher, t.source);
  }
  EXPECT_EQ(sources, (std::set<std::string>{"teacher:t1", "teacher:t2", "teacher:t3"}));
}

TEST(Bc, SpecialistTeachersSolveOnlyTheirApps) {
  LocalBackend backend(2);
  for (const auto& task : task_suite(SuiteProfile::kSmoke)) {
    if (task.domain == Domain::kWorkflow) continue;
    for (App app : {App::kSheet, App::kFiles, App::kEditor}) {
      auto log = collect_initial({task}, {optimal("x", app)}, {1, ActionMode::kApiGui, 1}, backend);
      bool own = task.app == app;
      EXPECT_EQ(log[0].success, own) << task.task_id << " " << app_name(app);
    }
  }
}

TEST(Bc, PoolRolloutSolvesAMixedTaskNoTeacherSolvesAlone) {
  const auto suite = task_suite(SuiteProfile::kAblation);
  const TaskSpec* mixed = find_task(suite, "wf01");  // a folder plus a sheet cell
  ASSERT_NE(mixed, nullptr);
  std::vector<TeacherSpec> pool = {optimal("sheet", App::kSheet), optimal("files", App::kFiles)};
  LocalBackend backend(2);
  for (const auto& t : pool) {
    auto log = collect_initial({*mixed}, {t}, {8, ActionMode::kApiGui, 3}, backend);
    for (const auto& tr : log) EXPECT_FALSE(tr.success) << t.teacher_id;
  }
  int solved = 0;
  std::set<std::string> voices;
  for (std::uint64_t seed = 1; seed <= 20; ++seed) {
    auto tr = pool_rollout(*mixed, pool, seed, backend);
    EXPECT_EQ(tr.source, "pool");
    if (tr.success) {
      ++solved;
      for (const auto& s : tr.steps) voices.insert(s.teacher);
    }
  }
  EXPECT_GT(solved, 0);
  EXPECT_EQ(voices, (std::set<std::string>{"sheet", "files"}));
  EXPECT_EQ(pool_rollout(*mixed, pool, 5, backend), pool_rollout(*mixed, pool, 5, backend));
}

TEST(Bc, AugmentNeedsASuccessfulSeed) {
  auto tasks = task_suite(SuiteProfile::kSmoke);
  std::vector<OutcomeStratum> strata = {{tasks[0].task_id, {0.5}, StratumClass::kPartiallySolved}};
  LocalBackend backend(1);
  try {
    augment_partial(strata, tasks, {traj(tasks[0].task_id, 0.5)}, PolicyParams::zeros(), {}, backend);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), Errc::kNoSuccessfulSeed);
  }
  std::vector<OutcomeStratum> none = {{tasks[0].task_id, {1.0}, StratumClass::kFullySolved}};
  EXPECT_TRUE(augment_partial(none, tasks, {}, PolicyParams::zeros(), {}, backend).empty());
}

TEST(Bc, AugmentSamplesRoundsPerPartialTask) {
  auto tasks = task_suite(SuiteProfile::kSmoke);
  auto teachers = ablation_teachers();
  LocalBackend backend(4);
  auto log = collect_initial(tasks, teachers, {4, ActionMode::kApiGui, 1}, backend);
  std::vector<std::string> ids;
  for (const auto& t : tasks) ids.push_back(t.task_id);
  // Partial tasks without any success (the mixed ones here) cannot seed augmentation.
  std::vector<OutcomeStratum> strata;
  for (const auto& s : stratify(log, ids)) {
    bool seeded = std::any_of(log.begin(), log.end(), [&](const Trajectory& t) { return t.task_id == s.task_id && t.success; });
    if (s.cls != StratumClass::kPartiallySolved || seeded) strata.push_back(s);
  }
  std::size_t partial = 0;
  for (const auto& s : strata) partial += s.cls == StratumClass::kPartiallySolved;
  ASSERT_GT(partial, 0u);
  AugmentConfig cfg;
  cfg.rounds = 3;
  auto extra = augment_partial(strata, tasks, log, PolicyParams::zeros(), cfg, backend);
  EXPECT_EQ(extra.size(), partial * 3);
  for (const auto& t : extra)
    EXPECT_EQ(std::find_if(strata.begin(), strata.end(), [&](const OutcomeStratum& s) { return s.task_id == t.task_id; })->cls,
              StratumClass::kPartiallySolved);
}
