#include <gtest/gtest.h>

#include <thread>

#include "deskgrid/config.hpp"
#include "deskgrid/training.hpp"

using namespace deskgrid;
using namespace std::chrono_literals;

namespace {

RunConfig smoke_config() {
  Config c;
  c.merge_file(std::string(DESKGRID_SOURCE_DIR) + "/data/configs/smoke.conf");
  c.set("bc.teachers", std::string(DESKGRID_SOURCE_DIR) + "/" + c.str("bc.teachers"));
  return make_run_config(c);
}

const std::vector<PhaseSpec> kShort = parse_schedule("bc 1\nrl 3\nsft 2\nrl 3\n");

std::vector<std::string> metric_lines(const Orchestrator& o) {
  std::vector<std::string> out;
  for (const auto& m : o.metrics()) out.push_back(metric_to_json(m));
  return out;
}

}  // namespace

TEST(Schedule, ParseAndPrint) {
  auto s = parse_schedule("# plan\nbc 3\nrl   100\n\nsft 8\nrl 100\n");
  ASSERT_EQ(s.size(), 4u);
  EXPECT_EQ(s[0].kind, PhaseKind::kBc);
  EXPECT_EQ(s[1].amount, 100);
  EXPECT_EQ(s[2].kind, PhaseKind::kSft);
  EXPECT_EQ(parse_schedule(schedule_to_text(s)).size(), 4u);
  EXPECT_EQ(schedule_to_text(parse_schedule(schedule_to_text(s))), schedule_to_text(s));
  for (const char* bad : {"rl", "rl 0", "rl x", "dance 3", "rl 3 4"}) EXPECT_THROW(parse_schedule(bad), Error) << bad;
}

TEST(RunConfig, Validation) {
  auto rc = smoke_config();
  EXPECT_NO_THROW(rc.validate());
  auto bad = rc;
  bad.pipeline.max_steps = 10;
  EXPECT_THROW(bad.validate(), Error);
  bad = rc;
  bad.tasks.clear();
  EXPECT_THROW(bad.validate(), Error);
  bad = rc;
  bad.pipeline.min_steps = bad.pipeline.max_steps + 1;
  EXPECT_THROW(bad.validate(), Error);
}

TEST(Orchestrator, SameSeedsSameMetricsAcrossThreadCounts) {
  auto rc = smoke_config();
  LocalBackend b1(1), b2(6);
  Orchestrator x(rc, b1), y(rc, b2);
  x.run(kShort);
  y.run(kShort);
  ASSERT_EQ(x.metrics().size(), 6u);
  EXPECT_EQ(metric_lines(x), metric_lines(y));
  EXPECT_EQ(x.params(), y.params());
  auto other = rc;
  other.pipeline.seed = 99;
  LocalBackend b3(2);
  Orchestrator z(other, b3);
  z.run(kShort);
  EXPECT_NE(metric_lines(x), metric_lines(z));
}

TEST(Orchestrator, PhasesStalenessAndReferenceReset) {
  auto rc = smoke_config();
  LocalBackend backend(4);
  std::vector<PhaseRecord> seen;
  RunSinks sinks;
  sinks.on_phase = [&](const PhaseRecord& p) { seen.push_back(p); };
  Orchestrator o(rc, backend, nullptr, sinks);
  o.run(kShort);
  ASSERT_EQ(o.phases().size(), 4u);
  EXPECT_EQ(seen.size(), 4u);
  EXPECT_EQ(o.phases()[0].kind, PhaseKind::kBc);
  EXPECT_GT(o.phases()[0].dataset_examples, 0u);
  EXPECT_EQ(o.phases()[2].kind, PhaseKind::kSft);
  EXPECT_TRUE(o.phases()[3].reference_reset);
  EXPECT_FALSE(o.store().empty());

  ASSERT_FALSE(o.consumption().empty());
  for (const auto& c : o.consumption()) {
    EXPECT_LE(c.trainer_version - c.trajectory_version, rc.pipeline.staleness_limit);
    EXPECT_GE(c.trainer_version, c.trajectory_version);
  }
  std::int64_t prev = -1;
  for (const auto& m : o.metrics()) {
    EXPECT_GT(m.update, prev);
    prev = m.update;
    EXPECT_GE(m.m.mean_entropy, 0.0);
    EXPECT_GT(m.m.trajectories, 0u);
  }
  auto line = metric_to_json(o.metrics()[0]);
  for (const char* k : {"\"update\"", "\"phase\"", "\"mean_reward\"", "\"entropy\"", "\"kl\"", "\"policy_version\""})
    EXPECT_NE(line.find(k), std::string::npos) << k;
}

TEST(Orchestrator, SftWithoutSuccessesFailsWithEmptyStore) {
  auto rc = smoke_config();
  LocalBackend backend(2);
  Orchestrator o(rc, backend);
  try {
    o.run_phase({PhaseKind::kSft, 1});
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), Errc::kEmptyStore);
  }
}

TEST(RunControl, AbortStopsTheRunBetweenUpdates) {
  auto rc = smoke_config();
  LocalBackend backend(2);
  RunControl control;
  RunSinks sinks;
  sinks.on_metric = [&](const MetricRecord& m) {
    if (m.update >= 1) control.abort();
  };
  Orchestrator o(rc, backend, &control, sinks);
  try {
    o.run(parse_schedule("rl 10"));
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), Errc::kAbortedByOperator);
  }
  EXPECT_LT(o.metrics().size(), 10u);
}

TEST(RunControl, PauseBlocksUntilResume) {
  RunControl c;
  c.pause();
  EXPECT_TRUE(c.paused());
  std::atomic<bool> passed{false};
  std::thread t([&] {
    c.checkpoint();
    passed = true;
  });
  std::this_thread::sleep_for(50ms);
  EXPECT_FALSE(passed);
  c.resume();
  t.join();
  EXPECT_TRUE(passed);
  c.pause();
  std::thread u([&] {
    try {
      c.checkpoint();
    } catch (const Error& e) {
      EXPECT_EQ(e.code(), Errc::kAbortedByOperator);
    }
  });
  std::this_thread::sleep_for(20ms);
  c.abort();
  u.join();
  EXPECT_TRUE(c.aborted());
}
