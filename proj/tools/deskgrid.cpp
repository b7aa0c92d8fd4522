// deskgrid command-line entry point.
//
// Exit codes: 0 success, 1 validation, 2 runtime, 3 aborted by the operator.

#include <CLI11.hpp>
#include <csignal>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <pthread.h>

#include "deskgrid/apigen.hpp"
#include "deskgrid/bc.hpp"
#include "deskgrid/cluster.hpp"
#include "deskgrid/config.hpp"
#include "deskgrid/eval.hpp"
#include "deskgrid/training.hpp"

using namespace deskgrid;
namespace fs = std::filesystem;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitValidation = 1;
constexpr int kExitRuntime = 2;
constexpr int kExitAborted = 3;

int exit_code(Errc c) {
  switch (c) {
    case Errc::kInvalidConfig:
    case Errc::kParse:
    case Errc::kInvalidTask:
    case Errc::kUnknownVerifier:
    case Errc::kMissingTask: return kExitValidation;
    case Errc::kAbortedByOperator: return kExitAborted;
    default: return kExitRuntime;
  }
}

// SIGINT/SIGTERM are blocked in every thread and collected by one waiter.
class SignalWaiter {
 public:
  SignalWaiter() {
    sigemptyset(&set_);
    sigaddset(&set_, SIGINT);
    sigaddset(&set_, SIGTERM);
    pthread_sigmask(SIG_BLOCK, &set_, nullptr);
  }
  int wait() {
    int sig = 0;
    sigwait(&set_, &sig);
    return sig;
  }
  void on_signal(std::function<void()> fn) {
    thread_ = std::thread([this, fn = std::move(fn)] {
      wait();
      if (!done_) fn();
    });
    thread_.detach();
  }
  void finish() { done_ = true; }

 private:
  sigset_t set_;
  std::thread thread_;
  std::atomic<bool> done_{false};
};

struct Common {
  std::string config_file;
  std::vector<std::string> sets;

  Config load() const {
    Config c;
    if (!config_file.empty()) c.merge_file(config_file);
    c.merge_env();
    for (const auto& s : sets) c.set_assignment(s);
    return c;
  }
};

void add_common(CLI::App* cmd, Common& common) {
  cmd->add_option("--config", common.config_file, "config file of `key = value` lines");
  cmd->add_option("--set", common.sets, "override one key, key=value (repeatable)");
}

void append_line(const fs::path& path, const std::string& line) {
  std::ofstream out(path, std::ios::app);
  out << line << "\n";
}

int cmd_controller(const Common& common, const std::string& bind, const std::string& http) {
  Config c = common.load();
  if (!bind.empty()) c.set("cluster.bind", bind);
  if (!http.empty()) c.set("cluster.http", http);
  SignalWaiter signals;
  ControllerService controller(controller_config(c));
  controller.start();
  std::cout << "controller listening on " << controller.address().to_string() << ", http on port "
            << controller.http_port() << std::endl;
  int sig = signals.wait();
  controller.stop();
  std::cout << "controller stopped by signal " << sig << "; "
            << counters_to_json(controller.state().counters()).dump() << std::endl;
  return kExitOk;
}

int cmd_worker(const Common& common, const std::string& controller_addr, int slots, const std::string& id,
               const std::string& bind) {
  Config c = common.load();
  if (!controller_addr.empty()) c.set("cluster.bind", controller_addr);
  if (slots > 0) c.set("cluster.slots", std::to_string(slots));
  WorkerConfig wc = worker_config(c);
  wc.worker_id = id;
  if (!bind.empty()) wc.bind = parse_host_port(bind);
  SignalWaiter signals;
  WorkerService worker(wc);
  worker.start();
  std::cout << "worker " << id << " serving " << wc.slots << " slots on " << worker.address().to_string()
            << std::endl;
  signals.wait();
  worker.stop();
  return kExitOk;
}

int cmd_train(const Common& common, std::string schedule_file, const std::string& out, const std::string& controller,
              bool auto_pulse) {
  Config c = common.load();
  if (!schedule_file.empty()) c.set("run.schedule", schedule_file);
  if (!controller.empty()) c.set("cluster.controller", controller);
  if (auto_pulse) c.set("entropulse.auto_pulse", "true");
  if (c.str("run.schedule").empty()) throw Error(Errc::kInvalidConfig, "no schedule (run.schedule or --schedule)");
  auto schedule = parse_schedule(read_text_file(c.str("run.schedule")));
  RunConfig rc = make_run_config(c);

  fs::path dir(out);
  fs::create_directories(dir / "checkpoints");
  for (const char* f : {"metrics.jsonl", "phases.jsonl", "consumption.jsonl"}) fs::remove(dir / f);
  write_text_file((dir / "config.resolved").string(), c.to_text());
  nlohmann::json manifest = {{"version", kVersion},
                             {"config", c.to_json()},
                             {"schedule", schedule_to_text(schedule)},
                             {"suite", suite_to_text(rc.tasks)},
                             {"seed", rc.pipeline.seed}};
  write_text_file((dir / "manifest.json").string(), manifest.dump(2) + "\n");

  std::unique_ptr<EmbeddedCluster> embedded;
  HostPort address;
  if (c.str("cluster.controller").empty()) {
    EmbeddedClusterConfig ec;
    ec.workers = static_cast<int>(c.integer("cluster.embedded_workers"));
    ec.slots = static_cast<int>(c.integer("cluster.slots"));
    ec.heartbeat = heartbeat_config(c);
    embedded = std::make_unique<EmbeddedCluster>(ec);
    address = embedded->address();
  } else {
    address = parse_host_port(c.str("cluster.controller"));
    try {
      ControllerClient(address, "probe", std::chrono::milliseconds(3000)).status();
    } catch (const Error& e) {
      throw Error(Errc::kClusterUnavailable, std::string("controller unreachable: ") + e.what());
    }
  }
  RemoteBackend backend(address, static_cast<std::size_t>(c.integer("cluster.concurrency")));

  RunControl control;
  SignalWaiter signals;
  signals.on_signal([&] { control.abort(); });
  TrainLink link(address, [&](bool paused) {
    if (paused && !control.paused()) control.pause();
    if (!paused && control.paused()) control.resume();
  });

  Orchestrator* self = nullptr;
  RunSinks sinks;
  sinks.on_metric = [&](const MetricRecord& r) {
    std::string line = metric_to_json(r);
    append_line(dir / "metrics.jsonl", line);
    link.post(nlohmann::json::parse(line));
    std::cout << line << std::endl;
  };
  sinks.on_phase = [&](const PhaseRecord& r) {
    append_line(dir / "phases.jsonl", phase_to_json(r));
    save_checkpoint((dir / "checkpoints" / ("phase" + std::to_string(r.index) + ".ckpt")).string(), self->params());
    std::cout << phase_to_json(r) << std::endl;
  };
  Orchestrator orch(rc, backend, &control, sinks);
  self = &orch;
  int code = kExitOk;
  try {
    orch.run(schedule);
  } catch (const Error& e) {
    if (e.code() != Errc::kAbortedByOperator) throw;
    std::cerr << "aborted: " << e.what() << std::endl;
    code = kExitAborted;
  }
  signals.finish();
  link.close();
  {
    std::ofstream cons(dir / "consumption.jsonl");
    for (const auto& r : orch.consumption()) cons << consumption_to_json(r) << "\n";
  }
  save_checkpoint((dir / "checkpoints" / "final.ckpt").string(), orch.params());
  if (code == kExitOk) {
    auto result = evaluate_policy(rc.tasks, rc.pipeline.mode, orch.params(), backend, rc.eval);
    std::string table = EvalResult::table_header() + "\n" + result.table("final") + "\n";
    write_text_file((dir / "eval.txt").string(), table);
    std::cout << table;
  }
  return code;
}

int cmd_eval(const Common& common, const std::string& checkpoint, const std::string& teacher, const std::string& out) {
  Config c = common.load();
  auto tasks = load_suite(c);
  ActionMode mode = run_mode(c);
  EvalConfig ec;
  ec.episodes_per_task = static_cast<int>(c.integer("eval.episodes_per_task"));
  ec.seed = static_cast<std::uint64_t>(c.integer("eval.seed"));
  LocalBackend backend;
  EvalResult result;
  std::string label;
  if (!teacher.empty()) {
    auto specs = parse_teachers(teacher);
    if (specs.size() != 1) throw Error(Errc::kInvalidConfig, "--teacher takes one teacher line");
    label = specs[0].teacher_id;
    result = evaluate(tasks, mode, [&](const RolloutRequest&) { return make_teacher(specs[0]); }, backend, ec);
  } else {
    if (checkpoint.empty()) throw Error(Errc::kInvalidConfig, "eval needs --checkpoint or --teacher");
    PolicyParams params = load_checkpoint(checkpoint);
    label = fs::path(checkpoint).stem().string();
    result = evaluate_policy(tasks, mode, params, backend, ec);
  }
  std::string table = EvalResult::table_header() + "\n" + result.table(label) + "\n";
  std::cout << table;
  std::cout << "median steps to success: " << format_double(result.median_success_steps()) << std::endl;
  if (!out.empty()) {
    fs::create_directories(out);
    write_text_file((fs::path(out) / "eval.txt").string(), table);
  }
  return kExitOk;
}

int cmd_collect_bc(const Common& common, const std::string& teachers_file, const std::string& out) {
  Config c = common.load();
  if (!teachers_file.empty()) c.set("bc.teachers", teachers_file);
  if (c.str("bc.teachers").empty()) throw Error(Errc::kInvalidConfig, "collect-bc needs --teachers");
  auto teachers = parse_teachers(read_text_file(c.str("bc.teachers")));
  auto tasks = load_suite(c);
  CollectConfig cc;
  cc.n_per_task = static_cast<int>(c.integer("bc.n_per_task"));
  cc.mode = run_mode(c);
  cc.seed = static_cast<std::uint64_t>(c.integer("run.seed"));
  LocalBackend backend;
  auto log = collect_initial(tasks, teachers, cc, backend);
  fs::create_directories(out);
  write_trajectory_log((fs::path(out) / "trajectories.jsonl").string(), log);
  std::vector<std::string> ids;
  for (const auto& t : tasks) ids.push_back(t.task_id);
  std::string strata;
  std::map<StratumClass, int> counts;
  for (const auto& s : stratify(log, ids)) {
    strata += s.task_id + "\t" + std::string(stratum_name(s.cls)) + "\n";
    ++counts[s.cls];
  }
  write_text_file((fs::path(out) / "strata.txt").string(), strata);
  std::cout << log.size() << " trajectories; fully_solved " << counts[StratumClass::kFullySolved]
            << ", partially_solved " << counts[StratumClass::kPartiallySolved] << ", unsolved "
            << counts[StratumClass::kUnsolved] << std::endl;
  return kExitOk;
}

int cmd_apigen(const std::string& examples_file, const std::string& keywords_file, const std::string& backend_kind,
               const std::string& endpoint,
               const std::string& registry_in, const std::string& registry_out, int max_iters, bool until_complete) {
  auto examples = parse_examples(read_text_file(examples_file));
  ApiRegistry registry = registry_in.empty() ? ApiRegistry{} : ApiRegistry::parse(read_text_file(registry_in));
  std::unique_ptr<GeneratorBackend> backend;
  if (backend_kind == "stub") {
    backend = std::make_unique<StubBackend>(keywords_file.empty() ? default_keyword_table()
                                                                 : parse_keyword_table(read_text_file(keywords_file)));
  } else {
    if (endpoint.empty()) throw Error(Errc::kInvalidConfig, "remote backend needs --endpoint host:port[/path]");
    RemoteGeneratorConfig rg;
    auto slash = endpoint.find('/');
    HostPort hp = parse_host_port(endpoint.substr(0, slash));
    rg.host = hp.host;
    rg.port = hp.port;
    if (slash != std::string::npos) rg.path = endpoint.substr(slash);
    backend = std::make_unique<RemoteGenerator>(rg);
  }
  int failures = 0;
  for (int pass = 1;; ++pass) {
    auto run = run_apigen(examples, registry, *backend, max_iters);
    std::cout << "pass " << pass << ": " << run.gaps.size() << " gaps" << std::endl;
    for (const auto& o : run.outcomes) {
      std::cout << "  " << o.api << "\t" << api_status_name(o.status) << "\titerations " << o.iterations;
      if (!o.error.empty()) std::cout << "\t" << o.error;
      std::cout << std::endl;
      if (o.status != ApiStatus::kTested) ++failures;
    }
    if (!until_complete || run.gaps.empty() || failures) break;
  }
  if (!registry_out.empty()) write_text_file(registry_out, registry.serialize());
  else std::cout << registry.serialize();
  return failures ? kExitRuntime : kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"deskgrid: simulated desktop RL cluster, trainer and tools"};
  app.require_subcommand(1);
  app.set_version_flag("--version", std::string(kVersion));
  Common common;

  auto* controller = app.add_subcommand("controller", "run the cluster controller");
  std::string bind, http;
  add_common(controller, common);
  controller->add_option("--bind", bind, "wire-protocol address host:port");
  controller->add_option("--http", http, "HTTP status address host:port");

  auto* worker = app.add_subcommand("worker", "run a worker hosting env slots");
  std::string worker_controller, worker_id = "w1", worker_bind;
  int slots = 0;
  add_common(worker, common);
  worker->add_option("--controller", worker_controller, "controller address host:port");
  worker->add_option("--slots", slots, "env slots");
  worker->add_option("--id", worker_id, "worker id");
  worker->add_option("--bind", worker_bind, "own address host:port (default ephemeral)");

  auto* train = app.add_subcommand("train", "run a training schedule");
  std::string schedule, out = "run", train_controller;
  bool auto_pulse = false;
  add_common(train, common);
  train->add_option("--schedule", schedule, "schedule file");
  train->add_option("--out", out, "output directory");
  train->add_option("--controller", train_controller, "external controller; default starts an embedded cluster");
  train->add_flag("--auto-pulse", auto_pulse, "insert SFT phases on RL plateaus");

  auto* eval = app.add_subcommand("eval", "greedy per-domain success table");
  std::string checkpoint, teacher, eval_out;
  add_common(eval, common);
  eval->add_option("--checkpoint", checkpoint, "policy checkpoint");
  eval->add_option("--teacher", teacher, "evaluate a teacher line instead, e.g. \"opt scripted_optimal\"");
  eval->add_option("--out", eval_out, "write eval.txt here");

  auto* collect = app.add_subcommand("collect-bc", "collect and stratify teacher rollouts");
  std::string teachers_file, collect_out = "bc";
  add_common(collect, common);
  collect->add_option("--teachers", teachers_file, "teachers file");
  collect->add_option("--out", collect_out, "output directory");

  auto* apigen = app.add_subcommand("apigen", "automated API construction");
  apigen->require_subcommand(1);
  auto* apigen_run = apigen->add_subcommand("run", "analyze, implement, test and repair");
  std::string examples_file, keywords_file, backend_kind = "stub", endpoint, registry_in, registry_out;
  int max_iters = 3;
  bool until_complete = false;
  apigen_run->add_option("--examples", examples_file, "exemplar tasks, one per line")->required();
  apigen_run->add_option("--keywords", keywords_file, "stub keyword table (default built in)");
  apigen_run->add_option("--backend", backend_kind, "stub or remote")->check(CLI::IsMember({"stub", "remote"}));
  apigen_run->add_option("--endpoint", endpoint, "remote completion service host:port[/path]");
  apigen_run->add_option("--registry", registry_in, "starting registry file (default empty)");
  apigen_run->add_option("--out", registry_out, "write the resulting registry here");
  apigen_run->add_option("--max-iters", max_iters, "repair iterations per API")->check(CLI::PositiveNumber);
  apigen_run->add_flag("--until-complete", until_complete, "repeat passes until no gaps remain");

  auto* suite = app.add_subcommand("suite", "task suite tools");
  suite->require_subcommand(1);
  auto* dump = suite->add_subcommand("dump", "print a built-in suite");
  std::string profile = "ablation";
  dump->add_option("--profile", profile, "smoke or ablation")->check(CLI::IsMember({"smoke", "ablation"}));

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e) == 0 ? kExitOk : kExitValidation;
  }

  try {
    if (*controller) return cmd_controller(common, bind, http);
    if (*worker) return cmd_worker(common, worker_controller, slots, worker_id, worker_bind);
    if (*train) return cmd_train(common, schedule, out, train_controller, auto_pulse);
    if (*eval) return cmd_eval(common, checkpoint, teacher, eval_out);
    if (*collect) return cmd_collect_bc(common, teachers_file, collect_out);
    if (*apigen_run)
      return cmd_apigen(examples_file, keywords_file, backend_kind, endpoint, registry_in, registry_out, max_iters, until_complete);
    if (*dump) {
      std::cout << suite_to_text(task_suite(*parse_suite_profile(profile)));
      return kExitOk;
    }
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << std::endl;
    return exit_code(e.code());
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << std::endl;
    return kExitRuntime;
  }
  return kExitOk;
}
