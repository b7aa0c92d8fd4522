#pragma once

#include <chrono>
#include <map>
#include <memory>
#include <set>
#include <string>
#include <vector>

#include "deskgrid/action.hpp"
#include "deskgrid/api_registry.hpp"
#include "deskgrid/common.hpp"
#include "deskgrid/envsim.hpp"

namespace deskgrid {

enum class Expect { kNoError, kValue };
std::string_view expect_name(Expect e);

/// One unit test of an API. A no_error case passes when the call raises no
/// runtime error (a handled rejection is fine). A value case passes when the
/// call is accepted and `probe` then reads `expected` from the fixture state.
///
///   probe:  cell A1 | result | path /p (-> dir, file or absent) | lines (joined by '|')
struct TestCase {
  std::string api;
  ApiArgs args;
  Expect expect = Expect::kNoError;
  std::string probe;
  std::string expected;

  std::string to_json() const;
  static TestCase from_json(std::string_view text);
  friend bool operator==(const TestCase&, const TestCase&) = default;
};

/// Where generated tests run: every app open, a few cells, files and lines.
TaskSpec test_fixture();
std::string run_probe(const EnvState& state, std::string_view probe);

struct TestReport {
  std::string api;
  int revision = 0;
  int passed = 0;
  std::vector<std::string> failures;  // one line per failing case

  bool ok() const { return failures.empty(); }
  std::string to_string() const;
};

/// Runs the cases against `artifact` through the environment's API action path.
TestReport run_tests(const ApiSpec& spec, const ApiArtifact& artifact, const std::vector<TestCase>& cases);

/// The LLM behind the pipeline.
class GeneratorBackend {
 public:
  virtual ~GeneratorBackend() = default;
  virtual std::string kind() const = 0;
  /// Capabilities the examples need that the registry lacks, most wanted first.
  virtual std::vector<ApiSpec> propose(const std::vector<std::string>& examples, const ApiRegistry& registry) = 0;
  /// `attempt` counts from 1; `feedback` is the previous failure report.
  virtual ApiArtifact implement(const ApiSpec& spec, int attempt, const std::string& feedback) = 0;
  virtual std::vector<TestCase> tests(const ApiSpec& spec) = 0;
};

/// keyword (lowercase, matched as a substring) -> published API name.
using KeywordTable = std::vector<std::pair<std::string, std::string>>;
const KeywordTable& default_keyword_table();
/// "keyword<TAB>api" lines; '#' comments.
KeywordTable parse_keyword_table(std::string_view text);

struct StubFaults {
  std::map<std::string, int> broken_attempts;  // api -> attempts that bind the wrong slots
  std::set<std::string> unguarded;             // api -> first artifact lacks error handling
  std::set<std::string> always_broken;
};

/// Deterministic templates over the published API catalogue.
class StubBackend : public GeneratorBackend {
 public:
  explicit StubBackend(KeywordTable table = default_keyword_table(), StubFaults faults = {},
                       std::vector<ApiTemplate> templates = published_api_templates());
  std::string kind() const override { return "stub"; }
  std::vector<ApiSpec> propose(const std::vector<std::string>& examples, const ApiRegistry& registry) override;
  ApiArtifact implement(const ApiSpec& spec, int attempt, const std::string& feedback) override;
  std::vector<TestCase> tests(const ApiSpec& spec) override;

 private:
  const ApiTemplate* find(const std::string& name) const;
  KeywordTable table_;
  StubFaults faults_;
  std::vector<ApiTemplate> templates_;
};

struct RemoteGeneratorConfig {
  std::string host = "127.0.0.1";
  int port = 8080;
  std::string path = "/complete";
  std::chrono::milliseconds timeout{10000};
  int retries = 2;
  std::chrono::milliseconds backoff{200};  // doubled per retry
};

/// Plain-text completion service: one POST per prompt, reply is the completion.
class RemoteGenerator : public GeneratorBackend {
 public:
  explicit RemoteGenerator(RemoteGeneratorConfig config);
  std::string kind() const override { return "remote"; }
  std::vector<ApiSpec> propose(const std::vector<std::string>& examples, const ApiRegistry& registry) override;
  ApiArtifact implement(const ApiSpec& spec, int attempt, const std::string& feedback) override;
  std::vector<TestCase> tests(const ApiSpec& spec) override;
  /// Throws BackendUnavailable after the retries.
  std::string complete(const std::string& prompt);

 private:
  RemoteGeneratorConfig config_;
};

ApiArtifact parse_artifact(const std::string& api_name, std::string_view text);

inline constexpr std::size_t kDefaultGapCap = 8;

/// Gaps only, at most `cap`.
std::vector<ApiSpec> analyze_requirements(const std::vector<std::string>& examples, const ApiRegistry& registry,
                                          GeneratorBackend& backend, std::size_t cap = kDefaultGapCap);

/// Static validation: known op, parameters from the ApiSpec, error handling and
/// logging present. Throws GenerationRejected.
void validate_artifact(const ApiSpec& spec, const ApiArtifact& artifact);

/// Generates, validates and registers the artifact for a declared spec.
ApiArtifact implement_api(const ApiSpec& spec, GeneratorBackend& backend, ApiRegistry& registry, int attempt = 1,
                          const std::string& feedback = {});

/// At least one no_error case, a value case where the backend knows the
/// semantics, and one boundary case per parameter.
std::vector<TestCase> generate_tests(const ApiSpec& spec, GeneratorBackend& backend);

class ExhaustedRepairs : public Error {
 public:
  explicit ExhaustedRepairs(std::vector<TestReport> reports);
  const std::vector<TestReport>& reports() const { return reports_; }

 private:
  std::vector<TestReport> reports_;
};

struct RepairResult {
  ApiArtifact artifact;
  int iterations = 0;
  std::vector<TestReport> reports;  // one per iteration
};

/// Tests the registered artifact, asking the backend for a fix after each
/// failing run, until every case passes (status becomes tested).
RepairResult repair_loop(const ApiSpec& spec, GeneratorBackend& backend, ApiRegistry& registry,
                         const std::vector<TestCase>& cases, int max_iters = 3);

struct ApigenOutcome {
  std::string api;
  ApiStatus status = ApiStatus::kDeclared;
  int iterations = 0;
  std::string error;
};

struct ApigenRun {
  std::vector<ApiSpec> gaps;
  std::vector<ApigenOutcome> outcomes;
};

/// One pipeline pass: analyze, then implement, test and repair each gap.
ApigenRun run_apigen(const std::vector<std::string>& examples, ApiRegistry& registry, GeneratorBackend& backend,
                     int max_iters = 3, std::size_t cap = kDefaultGapCap);

/// One example per non-empty, non-comment line.
std::vector<std::string> parse_examples(std::string_view text);

}  // namespace deskgrid
