#include "deskgrid/wire.hpp"

#include <array>

namespace deskgrid {

namespace {

constexpr std::array<std::pair<MsgType, std::string_view>, 13> kNames = {{
    {MsgType::kRegister, "Register"},
    {MsgType::kHeartbeat, "Heartbeat"},
    {MsgType::kAllocate, "Allocate"},
    {MsgType::kAllocated, "Allocated"},
    {MsgType::kStep, "Step"},
    {MsgType::kStepResult, "StepResult"},
    {MsgType::kReset, "Reset"},
    {MsgType::kRelease, "Release"},
    {MsgType::kStatusQuery, "StatusQuery"},
    {MsgType::kStatusReport, "StatusReport"},
    {MsgType::kPublish, "Publish"},
    {MsgType::kAck, "Ack"},
    {MsgType::kError, "Error"},
}};

}  // namespace

std::string_view msg_type_name(MsgType t) {
  for (const auto& [k, n] : kNames)
    if (k == t) return n;
  return "?";
}

std::optional<MsgType> parse_msg_type(std::string_view s) {
  for (const auto& [k, n] : kNames)
    if (n == s) return k;
  return std::nullopt;
}

std::optional<MsgType> reply_type(MsgType request) {
  switch (request) {
    case MsgType::kRegister:
    case MsgType::kHeartbeat:
    case MsgType::kRelease:
    case MsgType::kPublish: return MsgType::kAck;
    case MsgType::kAllocate: return MsgType::kAllocated;
    case MsgType::kStep:
    case MsgType::kReset: return MsgType::kStepResult;
    case MsgType::kStatusQuery: return MsgType::kStatusReport;
    default: return std::nullopt;
  }
}

bool is_request(MsgType t) { return reply_type(t).has_value(); }

std::string encode_message(const WireMessage& m) {
  nlohmann::json j = {{"proto_version", m.proto_version},
                      {"type", msg_type_name(m.type)},
                      {"correlation_id", m.correlation_id},
                      {"sender_id", m.sender_id},
                      {"body", m.body}};
  return j.dump();
}

WireMessage decode_message(std::string_view text) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    throw Error(Errc::kProtocol, std::string("undecodable message: ") + e.what());
  }
  if (!j.is_object()) throw Error(Errc::kProtocol, "message is not an object");
  WireMessage m;
  try {
    m.proto_version = j.at("proto_version").get<int>();
    if (m.proto_version != kProtoVersion)
      throw Error(Errc::kProtocol, "unsupported proto_version " + std::to_string(m.proto_version));
    auto type = parse_msg_type(j.at("type").get<std::string>());
    if (!type) throw Error(Errc::kProtocol, "unknown message type " + j.at("type").dump());
    m.type = *type;
    m.correlation_id = j.at("correlation_id").get<std::string>();
    m.sender_id = j.at("sender_id").get<std::string>();
    m.body = j.value("body", nlohmann::json::object());
  } catch (const nlohmann::json::exception& e) {
    throw Error(Errc::kProtocol, std::string("bad message field: ") + e.what());
  }
  return m;
}

std::string frame(std::string_view payload) {
  if (payload.size() > kMaxFrameBytes) throw Error(Errc::kProtocol, "frame too large");
  auto n = static_cast<std::uint32_t>(payload.size());
  std::string out;
  out.reserve(payload.size() + 4);
  out.push_back(static_cast<char>(n >> 24));
  out.push_back(static_cast<char>(n >> 16));
  out.push_back(static_cast<char>(n >> 8));
  out.push_back(static_cast<char>(n));
  out.append(payload);
  return out;
}

WireMessage make_reply(const WireMessage& request, MsgType type, nlohmann::json body, std::string sender) {
  WireMessage r;
  r.type = type;
  r.correlation_id = request.correlation_id;
  r.sender_id = std::move(sender);
  r.body = std::move(body);
  return r;
}

WireMessage make_error(const WireMessage& request, Errc code, const std::string& message, std::string sender) {
  return make_reply(request, MsgType::kError, {{"code", errc_name(code)}, {"message", message}}, std::move(sender));
}

void check_reply(const WireMessage& request, const WireMessage& reply) {
  if (reply.correlation_id != request.correlation_id)
    throw Error(Errc::kProtocol, "correlation id mismatch: " + reply.correlation_id);
  if (reply.type == MsgType::kError) {
    std::string code = reply.body.value("code", "Protocol");
    std::string msg = reply.body.value("message", "");
    auto errc = parse_errc(code);
    std::string prefix = code + ": ";
    if (starts_with(msg, prefix)) msg.erase(0, prefix.size());
    throw Error(errc.value_or(Errc::kProtocol), msg);
  }
  auto want = reply_type(request.type);
  if (!want || reply.type != *want)
    throw Error(Errc::kProtocol, std::string("unexpected reply ") + std::string(msg_type_name(reply.type)) + " to " +
                                     std::string(msg_type_name(request.type)));
}

nlohmann::json view_to_json(const SessionView& v) {
  return {{"observation", v.observation}, {"candidates", v.candidates}, {"done", v.done},
          {"accepted", v.accepted},       {"malformed", v.malformed},   {"accuracy", v.accuracy}};
}

SessionView view_from_json(const nlohmann::json& j) {
  SessionView v;
  try {
    v.observation = j.at("observation").get<std::string>();
    v.candidates = j.at("candidates").get<std::vector<std::string>>();
    v.done = j.at("done").get<bool>();
    v.accepted = j.at("accepted").get<bool>();
    v.malformed = j.at("malformed").get<bool>();
    v.accuracy = j.at("accuracy").get<double>();
  } catch (const nlohmann::json::exception& e) {
    throw Error(Errc::kProtocol, std::string("bad session view: ") + e.what());
  }
  return v;
}

}  // namespace deskgrid
