#include "deskgrid/common.hpp"

#include <charconv>
#include <cmath>

namespace deskgrid {

const char* errc_name(Errc code) {
  switch (code) {
    case Errc::kUnknownVerifier: return "UnknownVerifier";
    case Errc::kInvalidTask: return "InvalidTask";
    case Errc::kEpisodeFinished: return "EpisodeFinished";
    case Errc::kIncompleteTrajectory: return "IncompleteTrajectory";
    case Errc::kBackendUnavailable: return "BackendUnavailable";
    case Errc::kGenerationRejected: return "GenerationRejected";
    case Errc::kExhaustedRepairs: return "ExhaustedRepairs";
    case Errc::kDuplicateLiveWorker: return "DuplicateLiveWorker";
    case Errc::kUnknownWorker: return "UnknownWorker";
    case Errc::kUnknownSession: return "UnknownSession";
    case Errc::kNoCapacity: return "NoCapacity";
    case Errc::kSessionLost: return "SessionLost";
    case Errc::kSessionReset: return "SessionReset";
    case Errc::kTimeout: return "Timeout";
    case Errc::kVersionRegression: return "VersionRegression";
    case Errc::kEmptyCandidates: return "EmptyCandidates";
    case Errc::kActionNotCandidate: return "ActionNotCandidate";
    case Errc::kMixedTasks: return "MixedTasks";
    case Errc::kGroupTooSmall: return "GroupTooSmall";
    case Errc::kMissingOldLogProb: return "MissingOldLogProb";
    case Errc::kNonFiniteGradient: return "NonFiniteGradient";
    case Errc::kEmptyStore: return "EmptyStore";
    case Errc::kSeriesTooShort: return "SeriesTooShort";
    case Errc::kClusterUnavailable: return "ClusterUnavailable";
    case Errc::kAbortedByOperator: return "AbortedByOperator";
    case Errc::kNoSuccessfulSeed: return "NoSuccessfulSeed";
    case Errc::kMissingTask: return "MissingTask";
    case Errc::kBindFailure: return "BindFailure";
    case Errc::kControllerUnreachable: return "ControllerUnreachable";
    case Errc::kCheckpointCorrupt: return "CheckpointCorrupt";
    case Errc::kInvalidConfig: return "InvalidConfig";
    case Errc::kParse: return "Parse";
    case Errc::kIo: return "Io";
    case Errc::kProtocol: return "Protocol";
  }
  return "Unknown";
}

std::optional<Errc> parse_errc(std::string_view name) {
  for (int i = 0; i <= static_cast<int>(Errc::kProtocol); ++i)
    if (name == errc_name(static_cast<Errc>(i))) return static_cast<Errc>(i);
  return std::nullopt;
}

std::vector<std::string> split(std::string_view s, char sep) {
  std::vector<std::string> out;
  std::size_t start = 0;
  for (std::size_t i = 0; i <= s.size(); ++i) {
    if (i == s.size() || s[i] == sep) {
      out.emplace_back(s.substr(start, i - start));
      start = i + 1;
    }
  }
  return out;
}

std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t' || s.front() == '\r')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
  return s;
}

std::string join(const std::vector<std::string>& parts, std::string_view sep) {
  std::string out;
  for (std::size_t i = 0; i < parts.size(); ++i) {
    if (i) out += sep;
    out += parts[i];
  }
  return out;
}

bool starts_with(std::string_view s, std::string_view prefix) {
  return s.substr(0, prefix.size()) == prefix;
}

std::string format_double(double v) {
  if (std::isnan(v)) return "nan";
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  char buf[64];
  auto res = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, res.ptr);
}

}  // namespace deskgrid
