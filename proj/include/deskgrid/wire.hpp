#pragma once

#include <cstdint>
#include <nlohmann/json.hpp>
#include <optional>
#include <string>
#include <string_view>

#include "deskgrid/common.hpp"
#include "deskgrid/rollout.hpp"

namespace deskgrid {

inline constexpr int kProtoVersion = 1;
inline constexpr std::size_t kMaxFrameBytes = 16u << 20;

enum class MsgType {
  kRegister,
  kHeartbeat,
  kAllocate,
  kAllocated,
  kStep,
  kStepResult,
  kReset,
  kRelease,
  kStatusQuery,
  kStatusReport,
  kPublish,
  kAck,
  kError,
};

std::string_view msg_type_name(MsgType t);
std::optional<MsgType> parse_msg_type(std::string_view s);

/// Reply variant for a request variant; nullopt for replies.
std::optional<MsgType> reply_type(MsgType request);
bool is_request(MsgType t);

struct WireMessage {
  int proto_version = kProtoVersion;
  MsgType type = MsgType::kAck;
  std::string correlation_id;
  std::string sender_id;
  nlohmann::json body = nlohmann::json::object();

  friend bool operator==(const WireMessage&, const WireMessage&) = default;
};

/// Canonical JSON text: keys sorted, no whitespace.
std::string encode_message(const WireMessage& m);
/// Throws Protocol on malformed input or an unsupported proto_version.
WireMessage decode_message(std::string_view text);

/// The 4-byte big-endian length prefix followed by the payload.
std::string frame(std::string_view payload);

WireMessage make_reply(const WireMessage& request, MsgType type, nlohmann::json body, std::string sender);
WireMessage make_error(const WireMessage& request, Errc code, const std::string& message, std::string sender);
/// Throws the Error carried by an Error reply; Protocol if `reply` does not
/// answer `request`.
void check_reply(const WireMessage& request, const WireMessage& reply);

nlohmann::json view_to_json(const SessionView& v);
SessionView view_from_json(const nlohmann::json& j);

}  // namespace deskgrid
