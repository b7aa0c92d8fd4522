#include <gtest/gtest.h>

#include <cstdlib>

#include "deskgrid/config.hpp"

using namespace deskgrid;

namespace {

std::string src(const std::string& rel) { return std::string(DESKGRID_SOURCE_DIR) + "/" + rel; }

Errc code_of(const std::function<void()>& fn) {
  try {
    fn();
  } catch (const Error& e) {
    return e.code();
  }
  ADD_FAILURE() << "no error";
  return Errc::kIo;
}

Config shipped(const std::string& name) {
  Config c;
  c.merge_file(src("data/configs/" + name));
  if (!c.str("bc.teachers").empty()) c.set("bc.teachers", src(c.str("bc.teachers")));
  if (!c.str("run.schedule").empty()) c.set("run.schedule", src(c.str("run.schedule")));
  return c;
}

}  // namespace

TEST(Config, DefaultsComeFromTheSchema) {
  Config c;
  for (const auto& k : config_schema()) {
    EXPECT_EQ(c.str(k.key), k.default_value) << k.key;
    EXPECT_EQ(c.origin(k.key), "default");
  }
  EXPECT_EQ(c.integer("trainer.group_size"), 8);
  EXPECT_DOUBLE_EQ(c.real("trainer.clip_eps"), 0.2);
  EXPECT_FALSE(c.flag("entropulse.auto_pulse"));
  EXPECT_EQ(env_name("trainer.kl_coef"), "DESKGRID_TRAINER_KL_COEF");
}

TEST(Config, RejectsUnknownKeysAndBadValues) {
  Config c;
  EXPECT_EQ(code_of([&] { c.set("trainer.nope", "1"); }), Errc::kInvalidConfig);
  EXPECT_EQ(code_of([&] { c.set("trainer.group_size", "1"); }), Errc::kInvalidConfig);
  EXPECT_EQ(code_of([&] { c.set("trainer.group_size", "eight"); }), Errc::kInvalidConfig);
  EXPECT_EQ(code_of([&] { c.set("trainer.clip_eps", "2"); }), Errc::kInvalidConfig);
  EXPECT_EQ(code_of([&] { c.set("entropulse.auto_pulse", "maybe"); }), Errc::kInvalidConfig);
  EXPECT_EQ(code_of([&] { c.set("run.mode", "api_gui"); }), Errc::kInvalidConfig);
  EXPECT_EQ(code_of([&] { c.merge_text("just words\n"); }), Errc::kParse);
  EXPECT_EQ(code_of([&] { c.set_assignment("novalue"); }), Errc::kInvalidConfig);
  EXPECT_EQ(c.integer("trainer.group_size"), 8);
}

TEST(Config, LayeringAndOrigins) {
  Config c;
  c.merge_text("# comment\ntrainer.lr = 3\n\ntrainer.group_size=4\n", "file.conf");
  ::setenv("DESKGRID_TRAINER_LR", "7", 1);
  c.merge_env();
  ::unsetenv("DESKGRID_TRAINER_LR");
  c.set_assignment("pipeline.min_steps=64");
  EXPECT_DOUBLE_EQ(c.real("trainer.lr"), 7);
  EXPECT_EQ(c.integer("trainer.group_size"), 4);
  EXPECT_EQ(c.integer("pipeline.min_steps"), 64);
  EXPECT_NE(c.origin("trainer.lr").find("DESKGRID_TRAINER_LR"), std::string::npos);
  EXPECT_NE(c.origin("trainer.group_size").find("file.conf"), std::string::npos);

  ::setenv("DESKGRID_TRAINER_GROUP_SIZE", "1", 1);
  EXPECT_EQ(code_of([&] { c.merge_env(); }), Errc::kInvalidConfig);
  ::unsetenv("DESKGRID_TRAINER_GROUP_SIZE");
}

TEST(Config, ResolvedTextRoundTrips) {
  Config c;
  c.set("trainer.lr", "2.5");
  c.set("suite.profile", "ablation");
  Config d;
  d.merge_text(c.to_text());
  EXPECT_EQ(d.to_text(), c.to_text());
  EXPECT_EQ(c.to_json()["trainer.lr"], "2.5");
}

TEST(Config, ShippedConfigsLoad) {
  for (const char* name : {"smoke.conf", "ablation.conf"}) {
    auto c = shipped(name);
    auto rc = make_run_config(c);
    EXPECT_NO_THROW(rc.validate()) << name;
    EXPECT_EQ(rc.bc.teachers.size(), 3u);
    EXPECT_FALSE(parse_schedule(read_text_file(c.str("run.schedule"))).empty());
  }
  auto abl = make_run_config(shipped("ablation.conf"));
  EXPECT_EQ(abl.tasks.size(), 50u);
  EXPECT_EQ(abl.trainer.group_size, 8);
  EXPECT_EQ(abl.pipeline.tasks_per_wave, 25);
  EXPECT_EQ(abl.entropulse.per_task_k, 4);
  EXPECT_EQ(make_run_config(shipped("smoke.conf")).tasks.size(), 10u);
}

TEST(Config, SuiteFileOverridesProfile) {
  Config c;
  c.set("suite.profile", "ablation");
  c.set("suite.file", src("data/suites/smoke.txt"));
  EXPECT_EQ(load_suite(c), task_suite(SuiteProfile::kSmoke));
  c.set("suite.file", src("data/suites/missing.txt"));
  EXPECT_THROW(load_suite(c), Error);
}

TEST(Config, ClusterSections) {
  Config c;
  c.set("cluster.heartbeat_interval", "0.5");
  c.set("cluster.heartbeat_timeout_intervals", "4");
  c.set("cluster.bind", "0.0.0.0:9000");
  EXPECT_DOUBLE_EQ(heartbeat_config(c).timeout(), 2.0);
  EXPECT_EQ(controller_config(c).bind.port, 9000);
  EXPECT_EQ(worker_config(c).slots, 16);
  c.set("cluster.bind", "nonsense");
  EXPECT_THROW(controller_config(c), Error);
  c.set("run.mode", "gui");
  EXPECT_EQ(run_mode(c), ActionMode::kGuiOnly);
}
