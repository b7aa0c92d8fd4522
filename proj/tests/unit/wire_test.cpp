#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>
#include <sstream>

#include "deskgrid/trajectory.hpp"
#include "deskgrid/wire.hpp"

using namespace deskgrid;

namespace {

std::string golden(const std::string& name) {
  std::ifstream in(std::string(DESKGRID_SOURCE_DIR) + "/tests/golden/wire/" + name + ".json");
  std::string line;
  std::getline(in, line);
  return line;
}

}  // namespace

TEST(Wire, GoldenFilesDecodeAndReencodeByteForByte) {
  const std::map<std::string, MsgType> files = {
      {"register", MsgType::kRegister},       {"heartbeat", MsgType::kHeartbeat}, {"allocate", MsgType::kAllocate},
      {"allocated", MsgType::kAllocated},     {"step", MsgType::kStep},           {"step_result", MsgType::kStepResult},
      {"reset", MsgType::kReset},             {"release", MsgType::kRelease},     {"status_query", MsgType::kStatusQuery},
      {"publish", MsgType::kPublish},         {"ack", MsgType::kAck},             {"error", MsgType::kError}};
  for (const auto& [name, type] : files) {
    auto text = golden(name);
    ASSERT_FALSE(text.empty()) << name;
    auto m = decode_message(text);
    EXPECT_EQ(m.type, type) << name;
    EXPECT_EQ(m.proto_version, kProtoVersion);
    EXPECT_EQ(encode_message(m), text) << name;
  }
}

TEST(Wire, GoldenContents) {
  auto a = decode_message(golden("allocate"));
  EXPECT_EQ(a.correlation_id, "trainer#7");
  EXPECT_EQ(a.body.at("replaces"), "s00000003");
  auto v = view_from_json(decode_message(golden("allocated")).body.at("view"));
  EXPECT_FALSE(v.done);
  EXPECT_FALSE(v.candidates.empty());
  EXPECT_EQ(view_to_json(v), decode_message(golden("step_result")).body.at("view"));
}

TEST(Wire, EveryRequestHasOneReply) {
  for (MsgType t : {MsgType::kRegister, MsgType::kHeartbeat, MsgType::kAllocate, MsgType::kStep, MsgType::kReset,
                    MsgType::kRelease, MsgType::kStatusQuery, MsgType::kPublish}) {
    EXPECT_TRUE(is_request(t));
    ASSERT_TRUE(reply_type(t)) << msg_type_name(t);
    EXPECT_FALSE(is_request(*reply_type(t)));
  }
  EXPECT_EQ(*reply_type(MsgType::kAllocate), MsgType::kAllocated);
  EXPECT_EQ(*reply_type(MsgType::kStep), MsgType::kStepResult);
  EXPECT_EQ(*reply_type(MsgType::kStatusQuery), MsgType::kStatusReport);
  for (MsgType t : {MsgType::kAllocated, MsgType::kStepResult, MsgType::kStatusReport, MsgType::kAck, MsgType::kError})
    EXPECT_FALSE(reply_type(t));
}

TEST(Wire, CorrelationIdRoundTrips) {
  WireMessage req;
  req.type = MsgType::kStep;
  req.correlation_id = "s1#42";
  req.body = {{"session_id", "s1"}, {"action", "DONE"}};
  auto rep = make_reply(req, MsgType::kStepResult, {{"view", nullptr}}, "w1");
  EXPECT_EQ(rep.correlation_id, req.correlation_id);
  EXPECT_NO_THROW(check_reply(req, rep));
  auto back = decode_message(encode_message(rep));
  EXPECT_EQ(back, rep);

  auto err = make_error(req, Errc::kSessionLost, "gone", "controller");
  try {
    check_reply(req, decode_message(encode_message(err)));
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), Errc::kSessionLost);
    EXPECT_EQ(std::string(e.what()), "SessionLost: gone");
  }
  rep.correlation_id = "other";
  EXPECT_THROW(check_reply(req, rep), Error);
}

TEST(Wire, RejectsBadInput) {
  for (const char* bad : {"", "[]", "{", "{\"type\":\"Ack\"}",
                          "{\"proto_version\":2,\"type\":\"Ack\",\"correlation_id\":\"c\",\"sender_id\":\"s\"}",
                          "{\"proto_version\":1,\"type\":\"Nope\",\"correlation_id\":\"c\",\"sender_id\":\"s\"}"}) {
    try {
      decode_message(bad);
      FAIL() << bad;
    } catch (const Error& e) {
      EXPECT_EQ(e.code(), Errc::kProtocol) << bad;
    }
  }
}

TEST(Wire, FrameHasBigEndianLength) {
  auto f = frame("abc");
  ASSERT_EQ(f.size(), 7u);
  EXPECT_EQ(f.substr(0, 4), std::string("\0\0\0\3", 4));
  EXPECT_EQ(f.substr(4), "abc");
  std::string big(300, 'x');
  auto g = frame(big);
  EXPECT_EQ(static_cast<unsigned char>(g[2]), 1u);
  EXPECT_EQ(static_cast<unsigned char>(g[3]), 44u);
}

TEST(TrajectoryLog, LineRoundTripAndFile) {
  Trajectory t;
  t.task_id = "of01";
  t.policy_version = 3;
  t.group_id = 9;
  t.seed = 77;
  t.source = "teacher:t1";
  t.accuracy = 1.0;
  t.success = true;
  t.complete = true;
  Step s;
  s.context = "goal: x\nprev: none";
  s.action = "TYPE(\"a\\\"b\")";
  s.candidates = {s.action, "DONE"};
  s.old_log_prob = -0.6931471805599453;
  s.has_old_log_prob = true;
  s.reward = 1;
  s.reward_assigned = true;
  s.accepted = true;
  s.teacher = "t1";
  t.steps = {s, s};
  auto line = trajectory_to_json_line(t);
  EXPECT_EQ(line.find('\n'), std::string::npos);
  EXPECT_EQ(trajectory_from_json_line(line), t);
  EXPECT_NE(line.find("\"schema\":1"), std::string::npos);

  auto path = (std::filesystem::temp_directory_path() / "deskgrid_traj_test.jsonl").string();
  write_trajectory_log(path, {t});
  write_trajectory_log(path, {t, t}, true);
  EXPECT_EQ(read_trajectory_log(path).size(), 3u);
  std::filesystem::remove(path);
  EXPECT_THROW(trajectory_from_json_line("{\"schema\":99}"), Error);
}
