#pragma once

#include <cstdint>
#include <optional>
#include <random>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace deskgrid {

enum class Errc {
  kUnknownVerifier,
  kInvalidTask,
  kEpisodeFinished,
  kIncompleteTrajectory,
  kBackendUnavailable,
  kGenerationRejected,
  kExhaustedRepairs,
  kDuplicateLiveWorker,
  kUnknownWorker,
  kUnknownSession,
  kNoCapacity,
  kSessionLost,
  kSessionReset,
  kTimeout,
  kVersionRegression,
  kEmptyCandidates,
  kActionNotCandidate,
  kMixedTasks,
  kGroupTooSmall,
  kMissingOldLogProb,
  kNonFiniteGradient,
  kEmptyStore,
  kSeriesTooShort,
  kClusterUnavailable,
  kAbortedByOperator,
  kNoSuccessfulSeed,
  kMissingTask,
  kBindFailure,
  kControllerUnreachable,
  kCheckpointCorrupt,
  kInvalidConfig,
  kParse,
  kIo,
  kProtocol,
};

const char* errc_name(Errc code);
std::optional<Errc> parse_errc(std::string_view name);

/// The single exception type thrown by the library. `code()` identifies the
/// failure class named in each operation's contract.
class Error : public std::runtime_error {
 public:
  Error(Errc code, const std::string& what)
      : std::runtime_error(std::string(errc_name(code)) + ": " + what), code_(code) {}
  Errc code() const noexcept { return code_; }

 private:
  Errc code_;
};

// FNV-1a over bytes.
constexpr std::uint64_t fnv1a(std::string_view s, std::uint64_t h = 1469598103934665603ull) {
  for (unsigned char c : s) {
    h ^= c;
    h *= 1099511628211ull;
  }
  return h;
}

constexpr std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ull;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ull;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebull;
  return x ^ (x >> 31);
}

constexpr std::uint64_t mix_seed(std::uint64_t a, std::uint64_t b) {
  return splitmix64(a ^ splitmix64(b + 0x632be59bd9b4e019ull));
}

template <typename... Rest>
constexpr std::uint64_t mix_seed(std::uint64_t a, std::uint64_t b, Rest... rest) {
  return mix_seed(mix_seed(a, b), static_cast<std::uint64_t>(rest)...);
}

class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}

  std::uint64_t next() { return engine_(); }
  double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }
  std::size_t below(std::size_t n) {
    if (n == 0) throw std::invalid_argument("Rng::below(0)");
    return static_cast<std::size_t>(uniform() * static_cast<double>(n)) % n;
  }

 private:
  std::mt19937_64 engine_;
};

std::vector<std::string> split(std::string_view s, char sep);
std::string_view trim(std::string_view s);
std::string join(const std::vector<std::string>& parts, std::string_view sep);
bool starts_with(std::string_view s, std::string_view prefix);

// Shortest round-trip decimal form for doubles in text logs.
std::string format_double(double v);

}  // namespace deskgrid
