#include "deskgrid/apigen.hpp"

#include <httplib.h>

#include <algorithm>
#include <cctype>
#include <nlohmann/json.hpp>
#include <thread>

namespace deskgrid {

namespace {

std::string lower(std::string_view s) {
  std::string out(s);
  for (char& c : out) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  return out;
}

std::string normal_value(SemType t) {
  switch (t) {
    case SemType::kCell: return "A1";
    case SemType::kRange: return "A1:A2";
    case SemType::kText: return "x";
    case SemType::kTextList: return "p|q";
    case SemType::kPath: return "/docs/new";
    case SemType::kInt: return "1";
  }
  return "x";
}

std::string boundary_value(SemType t) {
  switch (t) {
    case SemType::kCell: return "H8";
    case SemType::kRange: return "A1:A1";
    case SemType::kText: return "";
    case SemType::kTextList: return "x";
    case SemType::kPath: return "/";
    case SemType::kInt: return "0";
  }
  return "";
}

struct ValueCase {
  ApiArgs args;
  std::string probe;
  std::string expected;
};

// Hand-written read-backs per op against test_fixture().
const std::map<std::string, ValueCase>& value_cases() {
  static const std::map<std::string, ValueCase> m = {
      {"sheet.set", {{{"cell", "A1"}, {"value", "x"}}, "cell A1", "x"}},
      {"sheet.get", {{{"cell", "A1"}}, "result", "A1=3"}},
      {"sheet.fill_row", {{{"start", "B3"}, {"values", "p|q"}}, "cell C3", "q"}},
      {"sheet.fill_col", {{{"start", "B3"}, {"values", "p|q"}}, "cell B4", "q"}},
      {"sheet.sum", {{{"range", "A1:A2"}, {"target", "B1"}}, "cell B1", "7"}},
      {"sheet.clear", {{{"range", "A1:A2"}}, "cell A2", ""}},
      {"files.mkdir", {{{"path", "/new/sub"}}, "path /new/sub", "dir"}},
      {"files.touch", {{{"path", "/docs/b.txt"}}, "path /docs/b.txt", "file"}},
      {"files.delete", {{{"path", "/docs/a.txt"}}, "path /docs/a.txt", "absent"}},
      {"files.move", {{{"src", "/docs/a.txt"}, {"dst", "/docs/c.txt"}}, "path /docs/c.txt", "file"}},
      {"editor.append", {{{"text", "gamma"}}, "lines", "alpha|beta|gamma"}},
      {"editor.replace", {{{"old", "alpha"}, {"new", "omega"}}, "lines", "omega|beta"}},
      {"editor.delete_line", {{{"text", "beta"}}, "lines", "alpha"}},
  };
  return m;
}

std::string spec_line(const ApiSpec& spec) {
  ApiRegistry r;
  r.declare(spec);
  auto text = r.serialize();
  return std::string(trim(text.substr(text.find('\n') + 1)));
}

}  // namespace

std::string_view expect_name(Expect e) { return e == Expect::kNoError ? "no_error" : "value"; }

std::string TestCase::to_json() const {
  nlohmann::json a = nlohmann::json::array();
  for (const auto& [k, v] : args) a.push_back({k, v});
  nlohmann::json j = {{"api", api}, {"args", a}, {"expect", expect_name(expect)}};
  if (expect == Expect::kValue) {
    j["probe"] = probe;
    j["expected"] = expected;
  }
  return j.dump();
}

TestCase TestCase::from_json(std::string_view text) {
  TestCase t;
  try {
    auto j = nlohmann::json::parse(text);
    t.api = j.at("api").get<std::string>();
    for (const auto& kv : j.at("args")) t.args.emplace_back(kv.at(0).get<std::string>(), kv.at(1).get<std::string>());
    auto e = j.at("expect").get<std::string>();
    if (e == "no_error") t.expect = Expect::kNoError;
    else if (e == "value") t.expect = Expect::kValue;
    else throw Error(Errc::kParse, "bad expect " + e);
    t.probe = j.value("probe", "");
    t.expected = j.value("expected", "");
  } catch (const nlohmann::json::exception& e) {
    throw Error(Errc::kParse, std::string("bad test case: ") + e.what());
  }
  return t;
}

TaskSpec test_fixture() {
  TaskSpec t;
  t.task_id = "apigen-fixture";
  t.app = App::kSheet;
  t.domain = Domain::kProfessional;
  t.initial = parse_facts("cell A1=3 ; cell A2=4 ; dir /docs ; file /docs/a.txt ; line alpha ; line beta");
  t.goal = parse_facts("cell A1=3");
  t.max_steps = 8;
  return t;
}

std::string run_probe(const EnvState& state, std::string_view probe) {
  if (probe == "result") return state.last_result;
  if (probe == "lines") return join(state.saved, "|");
  if (starts_with(probe, "cell ")) {
    auto c = parse_cell(probe.substr(5));
    if (!c) throw Error(Errc::kParse, "bad probe " + std::string(probe));
    return state.cells[*c];
  }
  if (starts_with(probe, "path ")) {
    auto it = state.entries.find(std::string(probe.substr(5)));
    if (it == state.entries.end()) return "absent";
    return it->second ? "dir" : "file";
  }
  throw Error(Errc::kParse, "bad probe " + std::string(probe));
}

std::string TestReport::to_string() const {
  std::string out = api + " rev " + std::to_string(revision) + ": " + std::to_string(passed) + " passed, " +
                    std::to_string(failures.size()) + " failed";
  for (const auto& f : failures) out += "\n  " + f;
  return out;
}

TestReport run_tests(const ApiSpec& spec, const ApiArtifact& artifact, const std::vector<TestCase>& cases) {
  ApiRegistry reg;
  reg.declare(spec);
  reg.set_artifact(artifact);
  reg.mark_tested(spec.name);
  TestReport report;
  report.api = spec.name;
  report.revision = artifact.revision;
  TaskSpec fixture = test_fixture();
  for (const auto& tc : cases) {
    Env env(fixture, 0, ActionMode::kApiGui, reg);
    auto out = env.step(Action::api(tc.api, tc.args));
    std::string call = Action::api(tc.api, tc.args).to_string();
    if (starts_with(out.message, "runtime error")) {
      report.failures.push_back(call + " -> " + out.message);
      continue;
    }
    if (tc.expect == Expect::kValue) {
      if (!out.accepted) {
        report.failures.push_back(call + " rejected: " + out.message);
        continue;
      }
      std::string got = run_probe(env.state(), tc.probe);
      if (got != tc.expected) {
        report.failures.push_back(call + " then " + tc.probe + " = \"" + got + "\", expected \"" + tc.expected + "\"");
        continue;
      }
    }
    ++report.passed;
  }
  return report;
}

const KeywordTable& default_keyword_table() {
  static const KeywordTable t = {
      {"sum", "sheet.sum_range"},
      {"total", "sheet.sum_range"},
      {"set cell", "sheet.set_cell"},
      {"write", "sheet.set_cell"},
      {"read cell", "sheet.get_cell"},
      {"look up", "sheet.get_cell"},
      {"across a row", "sheet.fill_row"},
      {"down a column", "sheet.fill_col"},
      {"clear", "sheet.clear_range"},
      {"folder", "files.mkdir"},
      {"directory", "files.mkdir"},
      {"empty file", "files.touch"},
      {"delete the file", "files.delete"},
      {"remove the file", "files.delete"},
      {"move", "files.move"},
      {"rename", "files.move"},
      {"append", "editor.append_line"},
      {"add a line", "editor.append_line"},
      {"replace", "editor.replace"},
      {"delete the line", "editor.delete_line"},
      {"remove the line", "editor.delete_line"},
  };
  return t;
}

KeywordTable parse_keyword_table(std::string_view text) {
  KeywordTable t;
  for (const auto& raw : split(text, '\n')) {
    auto line = trim(raw);
    if (line.empty() || line.front() == '#') continue;
    auto tab = line.find('\t');
    if (tab == std::string_view::npos) throw Error(Errc::kParse, "keyword line without tab: " + std::string(line));
    t.emplace_back(lower(trim(line.substr(0, tab))), std::string(trim(line.substr(tab + 1))));
  }
  return t;
}

StubBackend::StubBackend(KeywordTable table, StubFaults faults, std::vector<ApiTemplate> templates)
    : table_(std::move(table)), faults_(std::move(faults)), templates_(std::move(templates)) {}

const ApiTemplate* StubBackend::find(const std::string& name) const {
  for (const auto& t : templates_)
    if (t.spec.name == name) return &t;
  return nullptr;
}

std::vector<ApiSpec> StubBackend::propose(const std::vector<std::string>& examples, const ApiRegistry& registry) {
  std::vector<ApiSpec> out;
  std::set<std::string> seen;
  for (const auto& ex : examples) {
    std::string text = lower(ex);
    // Earliest keyword in the example first, so the order follows the prose.
    std::vector<std::pair<std::size_t, std::string>> hits;
    for (const auto& [kw, api] : table_) {
      auto pos = text.find(kw);
      if (pos != std::string::npos) hits.emplace_back(pos, api);
    }
    std::stable_sort(hits.begin(), hits.end(), [](const auto& a, const auto& b) { return a.first < b.first; });
    for (const auto& [pos, api] : hits) {
      if (registry.contains(api) || !seen.insert(api).second) continue;
      const ApiTemplate* t = find(api);
      if (!t) throw Error(Errc::kGenerationRejected, "keyword table names unknown API " + api);
      out.push_back(t->spec);
    }
  }
  return out;
}

ApiArtifact StubBackend::implement(const ApiSpec& spec, int attempt, const std::string&) {
  const ApiTemplate* t = find(spec.name);
  if (!t) throw Error(Errc::kGenerationRejected, "no template for " + spec.name);
  ApiArtifact a;
  a.api_name = spec.name;
  a.op = t->op;
  a.revision = attempt;
  const OpDef* op = find_op(t->op);
  auto broken = faults_.broken_attempts.find(spec.name);
  bool wrong = faults_.always_broken.count(spec.name) ||
               (broken != faults_.broken_attempts.end() && attempt <= broken->second);
  for (std::size_t i = 0; i < spec.params.size() && i < op->slots.size(); ++i)
    a.bindings.emplace_back(spec.params[i].name, op->slots[i].name + (wrong ? "_" : ""));
  if (attempt == 1 && faults_.unguarded.count(spec.name)) a.error_handling = false;
  return a;
}

std::vector<TestCase> StubBackend::tests(const ApiSpec& spec) {
  std::vector<TestCase> out;
  TestCase base;
  base.api = spec.name;
  for (const auto& p : spec.params) base.args.emplace_back(p.name, normal_value(p.type));
  out.push_back(base);
  for (std::size_t i = 0; i < spec.params.size(); ++i) {
    TestCase b = base;
    b.args[i].second = boundary_value(spec.params[i].type);
    if (b.args != base.args) out.push_back(b);
  }
  const ApiTemplate* t = find(spec.name);
  if (t) {
    auto it = value_cases().find(t->op);
    if (it != value_cases().end()) {
      const OpDef* op = find_op(t->op);
      TestCase v;
      v.api = spec.name;
      v.expect = Expect::kValue;
      v.probe = it->second.probe;
      v.expected = it->second.expected;
      // Op slot names -> the ApiSpec parameter names, in slot order.
      for (std::size_t i = 0; i < spec.params.size() && i < op->slots.size(); ++i)
        for (const auto& [slot, value] : it->second.args)
          if (slot == op->slots[i].name) v.args.emplace_back(spec.params[i].name, value);
      out.push_back(v);
    }
  }
  return out;
}

RemoteGenerator::RemoteGenerator(RemoteGeneratorConfig config) : config_(std::move(config)) {}

std::string RemoteGenerator::complete(const std::string& prompt) {
  std::string last;
  for (int attempt = 0; attempt <= config_.retries; ++attempt) {
    if (attempt > 0) std::this_thread::sleep_for(config_.backoff * (1 << (attempt - 1)));
    httplib::Client cli(config_.host, config_.port);
    auto secs = std::chrono::duration_cast<std::chrono::seconds>(config_.timeout).count();
    auto usecs = std::chrono::duration_cast<std::chrono::microseconds>(config_.timeout).count() % 1000000;
    cli.set_connection_timeout(secs, usecs);
    cli.set_read_timeout(secs, usecs);
    auto res = cli.Post(config_.path, prompt, "text/plain");
    if (!res) {
      last = httplib::to_string(res.error());
      continue;
    }
    if (res->status != 200) {
      last = "HTTP " + std::to_string(res->status);
      continue;
    }
    return res->body;
  }
  throw Error(Errc::kBackendUnavailable, "completion service " + config_.host + ":" + std::to_string(config_.port) +
                                             " failed after " + std::to_string(config_.retries + 1) +
                                             " attempts: " + last);
}

std::vector<ApiSpec> RemoteGenerator::propose(const std::vector<std::string>& examples, const ApiRegistry& registry) {
  std::string prompt = "TASK analyze\nEXISTING\n";
  for (const auto& n : registry.names()) prompt += n + "\n";
  prompt += "EXAMPLES\n";
  for (const auto& e : examples) prompt += e + "\n";
  ApiRegistry proposed = ApiRegistry::parse(complete(prompt));
  std::vector<ApiSpec> out;
  for (const auto& n : proposed.names()) out.push_back(proposed.spec(n));
  return out;
}

ApiArtifact RemoteGenerator::implement(const ApiSpec& spec, int attempt, const std::string& feedback) {
  std::string prompt = "TASK implement\nATTEMPT " + std::to_string(attempt) + "\nSPEC\n" + spec_line(spec) + "\nOPS\n";
  for (const auto& op : op_library()) {
    std::vector<std::string> slots;
    for (const auto& s : op.slots) slots.push_back(s.name + ":" + std::string(sem_type_name(s.type)));
    prompt += op.id + "(" + join(slots, ",") + ")\n";
  }
  if (!feedback.empty()) prompt += "FEEDBACK\n" + feedback + "\n";
  auto a = parse_artifact(spec.name, trim(complete(prompt)));
  a.revision = attempt;
  return a;
}

std::vector<TestCase> RemoteGenerator::tests(const ApiSpec& spec) {
  std::vector<TestCase> out;
  for (const auto& line : split(complete("TASK tests\nSPEC\n" + spec_line(spec) + "\n"), '\n'))
    if (!trim(line).empty()) out.push_back(TestCase::from_json(trim(line)));
  return out;
}

ApiArtifact parse_artifact(const std::string& api_name, std::string_view text) {
  ApiArtifact a;
  a.api_name = api_name;
  a.error_handling = false;
  a.logging = false;
  for (const auto& field : split(text, '\t')) {
    auto eq = field.find('=');
    if (eq == std::string::npos) throw Error(Errc::kGenerationRejected, "artifact field without '=': " + field);
    std::string key = field.substr(0, eq), val = field.substr(eq + 1);
    if (key == "op") {
      a.op = val;
    } else if (key == "bind") {
      for (const auto& b : split(val, ',')) {
        if (b.empty()) continue;
        auto c = b.find(':');
        if (c == std::string::npos) throw Error(Errc::kGenerationRejected, "bad binding " + b);
        a.bindings.emplace_back(b.substr(0, c), b.substr(c + 1));
      }
    } else if (key == "guard") {
      a.error_handling = val == "1";
    } else if (key == "log") {
      a.logging = val == "1";
    } else if (key == "rev") {
      a.revision = std::atoi(val.c_str());
    }
  }
  return a;
}

std::vector<ApiSpec> analyze_requirements(const std::vector<std::string>& examples, const ApiRegistry& registry,
                                          GeneratorBackend& backend, std::size_t cap) {
  std::vector<ApiSpec> out;
  std::set<std::string> names;
  for (auto& s : backend.propose(examples, registry)) {
    if (out.size() >= cap) break;
    if (registry.contains(s.name) || !names.insert(s.name).second) continue;
    out.push_back(std::move(s));
  }
  return out;
}

void validate_artifact(const ApiSpec& spec, const ApiArtifact& a) {
  auto reject = [&](const std::string& why) { throw Error(Errc::kGenerationRejected, spec.name + ": " + why); };
  if (a.api_name != spec.name) reject("artifact is for " + a.api_name);
  if (!find_op(a.op)) reject("unknown op " + a.op);
  if (!a.error_handling) reject("artifact has no error handling");
  if (!a.logging) reject("artifact has no logging hook");
  std::set<std::string> bound;
  for (const auto& [param, slot] : a.bindings) {
    bool known = std::any_of(spec.params.begin(), spec.params.end(), [&](const ApiParam& p) { return p.name == param; });
    if (!known) reject("binds unknown parameter " + param);
    if (!bound.insert(param).second) reject("binds " + param + " twice");
  }
}

ApiArtifact implement_api(const ApiSpec& spec, GeneratorBackend& backend, ApiRegistry& registry, int attempt,
                          const std::string& feedback) {
  if (!registry.contains(spec.name)) throw Error(Errc::kInvalidConfig, "API not declared: " + spec.name);
  ApiArtifact a = backend.implement(spec, attempt, feedback);
  validate_artifact(spec, a);
  registry.set_artifact(a);
  return a;
}

std::vector<TestCase> generate_tests(const ApiSpec& spec, GeneratorBackend& backend) {
  auto cases = backend.tests(spec);
  for (const auto& c : cases) {
    if (c.api != spec.name) throw Error(Errc::kGenerationRejected, "test case for " + c.api + " in " + spec.name);
    for (const auto& [k, v] : c.args) {
      bool known = std::any_of(spec.params.begin(), spec.params.end(), [&](const ApiParam& p) { return p.name == k; });
      if (!known) throw Error(Errc::kGenerationRejected, "test case argument " + k + " not in " + spec.name);
    }
  }
  if (std::none_of(cases.begin(), cases.end(), [](const TestCase& c) { return c.expect == Expect::kNoError; }))
    throw Error(Errc::kGenerationRejected, spec.name + ": no no_error case");
  return cases;
}

namespace {

std::string reports_message(const std::vector<TestReport>& reports) {
  std::string msg = "gave up after " + std::to_string(reports.size()) + " iterations";
  if (!reports.empty()) msg += "; last: " + reports.back().to_string();
  return msg;
}

}  // namespace

ExhaustedRepairs::ExhaustedRepairs(std::vector<TestReport> reports)
    : Error(Errc::kExhaustedRepairs, reports_message(reports)), reports_(std::move(reports)) {}

RepairResult repair_loop(const ApiSpec& spec, GeneratorBackend& backend, ApiRegistry& registry,
                         const std::vector<TestCase>& cases, int max_iters) {
  if (max_iters < 1) throw Error(Errc::kInvalidConfig, "max_iters must be >= 1");
  if (!registry.artifact(spec.name)) throw Error(Errc::kInvalidConfig, spec.name + " is not implemented");
  RepairResult result;
  for (int iter = 1; iter <= max_iters; ++iter) {
    ApiArtifact current = *registry.artifact(spec.name);
    TestReport report = run_tests(spec, current, cases);
    result.reports.push_back(report);
    if (report.ok()) {
      registry.mark_tested(spec.name);
      result.artifact = current;
      result.iterations = iter;
      return result;
    }
    if (iter == max_iters) break;
    try {
      ApiArtifact fixed = backend.implement(spec, current.revision + 1, report.to_string());
      validate_artifact(spec, fixed);
      registry.replace_artifact(fixed);
    } catch (const Error& e) {
      if (e.code() != Errc::kGenerationRejected) throw;
    }
  }
  throw ExhaustedRepairs(std::move(result.reports));
}

ApigenRun run_apigen(const std::vector<std::string>& examples, ApiRegistry& registry, GeneratorBackend& backend,
                     int max_iters, std::size_t cap) {
  ApigenRun run;
  run.gaps = analyze_requirements(examples, registry, backend, cap);
  for (const auto& spec : run.gaps) {
    ApigenOutcome o;
    o.api = spec.name;
    registry.declare(spec);
    try {
      ApiArtifact a;
      int attempt = 1;
      for (;; ++attempt) {
        try {
          a = implement_api(spec, backend, registry, attempt);
          break;
        } catch (const Error& e) {
          if (e.code() != Errc::kGenerationRejected || attempt >= max_iters) throw;
        }
      }
      auto cases = generate_tests(spec, backend);
      auto r = repair_loop(spec, backend, registry, cases, max_iters);
      o.iterations = r.iterations;
    } catch (const ExhaustedRepairs& e) {
      o.iterations = static_cast<int>(e.reports().size());
      o.error = e.what();
    } catch (const Error& e) {
      if (e.code() == Errc::kBackendUnavailable) throw;
      o.error = e.what();
    }
    o.status = registry.status(spec.name);
    run.outcomes.push_back(o);
  }
  return run;
}

std::vector<std::string> parse_examples(std::string_view text) {
  std::vector<std::string> out;
  for (const auto& raw : split(text, '\n')) {
    auto line = trim(raw);
    if (!line.empty() && line.front() != '#') out.emplace_back(line);
  }
  return out;
}

}  // namespace deskgrid
