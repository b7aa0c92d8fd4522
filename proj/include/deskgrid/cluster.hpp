#pragma once

#include <atomic>
#include <chrono>
#include <condition_variable>
#include <deque>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <nlohmann/json.hpp>
#include <set>
#include <string>
#include <thread>
#include <vector>

#include "deskgrid/envsim.hpp"
#include "deskgrid/net.hpp"
#include "deskgrid/rollout.hpp"

namespace httplib {
class Server;
}

namespace deskgrid {

/// Seconds on a monotonic axis.
class Clock {
 public:
  virtual ~Clock() = default;
  virtual double now() const = 0;
};

class SteadyClock : public Clock {
 public:
  double now() const override;
};

class ManualClock : public Clock {
 public:
  double now() const override { return t_.load(); }
  void advance(double seconds) { t_ = t_.load() + seconds; }

 private:
  std::atomic<double> t_{0.0};
};

enum class WorkerStatus { kAlive, kSuspect, kDead };
std::string_view worker_status_name(WorkerStatus s);

struct WorkerInfo {
  std::string worker_id;
  std::string address;
  int capacity = 0;
  double last_heartbeat = 0.0;
  WorkerStatus status = WorkerStatus::kAlive;
  bool draining = false;
  int registrations = 0;
};

struct EnvSlot {
  std::string slot_id;
  std::string worker_id;
  std::string task_id;     // empty when idle
  std::string session_id;  // empty when idle
  double created_at = 0.0;
};

enum class SessionState { kActive, kCompleted, kLost };

struct SessionInfo {
  std::string session_id;
  std::string worker_id;
  std::string slot_id;
  std::string task_id;
  double created_at = 0.0;
  SessionState state = SessionState::kActive;
};

struct ClusterCounters {
  std::uint64_t allocations = 0;
  std::uint64_t completions = 0;
  std::uint64_t lost = 0;
  std::uint64_t failures = 0;       // workers declared dead
  std::uint64_t reallocations = 0;  // replacements of lost sessions and operator resets
  std::uint64_t steps = 0;
  std::uint64_t duplicate_steps = 0;         // retries answered from the cache
  std::uint64_t duplicate_applications = 0;  // released sessions whose env step count disagrees
};

nlohmann::json counters_to_json(const ClusterCounters& c);

struct HeartbeatConfig {
  double interval = 1.0;      // seconds
  int timeout_intervals = 3;  // dead after interval * timeout_intervals of silence

  double timeout() const { return interval * timeout_intervals; }
};

/// Where a reserved session lives before its env is created.
struct Placement {
  std::string session_id;
  std::string slot_id;
  std::string worker_id;
  std::string address;
};

/// Controller-side view of workers, slots and sessions. Every mutation goes
/// through one mutex; readers get copies.
class ClusterState {
 public:
  explicit ClusterState(const Clock& clock, HeartbeatConfig hb = {});

  /// Throws DuplicateLiveWorker; a dead worker's record is replaced.
  void register_worker(const std::string& worker_id, const std::string& address, int capacity);
  /// Throws UnknownWorker (also for dead workers, which must re-register).
  /// Returns whether the worker is draining.
  bool heartbeat(const std::string& worker_id);
  void set_draining(const std::string& worker_id);

  /// Least-loaded alive, non-draining worker with an idle slot; ties go to the
  /// lowest worker id. `exclude` skips workers that just failed. Throws NoCapacity.
  Placement reserve(const std::string& task_id, const std::set<std::string>& exclude = {});
  void confirm(const Placement& p, bool reallocation);
  void cancel(const Placement& p);

  /// Throws UnknownSession, or SessionLost for sessions already lost.
  SessionInfo session(const std::string& session_id) const;
  std::string worker_address(const std::string& worker_id) const;
  void mark_lost(const std::string& session_id);
  void complete(const std::string& session_id);
  void count_step(bool duplicate);
  void count_reallocation();
  void count_audit_mismatch();

  /// Suspect after one silent interval, dead after the timeout. Sessions of
  /// dead workers become lost. Returns the task ids of every session lost
  /// since the previous call.
  std::vector<std::string> reap();
  /// Marks every active session lost (controller shutdown).
  void lose_all();

  std::vector<WorkerInfo> workers() const;
  std::vector<EnvSlot> slots() const;
  std::vector<SessionInfo> active_sessions() const;
  ClusterCounters counters() const;
  std::size_t active() const;
  nlohmann::json snapshot() const;
  const HeartbeatConfig& heartbeat_config() const { return hb_; }

 private:
  void lose_locked(SessionInfo& s);
  std::size_t load_locked(const std::string& worker_id) const;

  const Clock& clock_;
  HeartbeatConfig hb_;
  mutable std::mutex mu_;
  std::map<std::string, WorkerInfo> workers_;
  std::map<std::string, EnvSlot> slots_;
  std::map<std::string, SessionInfo> sessions_;  // active and reserved
  std::set<std::string> pending_;                // reserved, not yet confirmed
  std::set<std::string> lost_ids_;
  std::vector<std::string> recovered_;
  ClusterCounters counters_;
  std::uint64_t session_seq_ = 0;
};

/// Trainer-published metric records and the operator's pause flag.
class TrainingBoard {
 public:
  void publish(const std::vector<nlohmann::json>& records);
  nlohmann::json series() const;
  void set_paused(bool paused);
  bool paused() const;

 private:
  mutable std::mutex mu_;
  std::vector<nlohmann::json> records_;
  bool paused_ = false;
};

struct ControllerConfig {
  HostPort bind{"127.0.0.1", 7700};
  HostPort http{"127.0.0.1", 7701};
  bool enable_http = true;
  HeartbeatConfig heartbeat;
  std::chrono::milliseconds forward_timeout{10000};
};

/// Wire protocol server, HTTP status endpoints and the reaper.
class ControllerService {
 public:
  explicit ControllerService(ControllerConfig config, const Clock* clock = nullptr);
  ~ControllerService();

  /// Throws BindFailure.
  void start();
  /// Marks live sessions lost and closes every listener.
  void stop();
  HostPort address() const;
  int http_port() const { return http_port_; }

  ClusterState& state() { return state_; }
  TrainingBoard& board() { return board_; }
  /// Task ids recovered by the reaper, oldest first, with the recovery time.
  std::vector<std::pair<double, std::string>> recovered() const;

  /// Resets a live session's env to a fresh episode; counts a reallocation.
  nlohmann::json reset_session(const std::string& session_id);

 private:
  WireMessage handle(const WireMessage& m);
  WireMessage on_allocate(const WireMessage& m);
  WireMessage on_step(const WireMessage& m);
  WireMessage on_release(const WireMessage& m);
  std::shared_ptr<Channel> channel(const std::string& worker_id);
  void drop_channel(const std::string& worker_id);
  std::shared_ptr<std::mutex> session_lock(const std::string& session_id);
  void reaper_loop();
  void start_http();

  struct SessionExtra {
    std::string task_line;
    std::uint64_t seed = 0;
    std::string mode;
    std::shared_ptr<std::mutex> mu = std::make_shared<std::mutex>();
    std::map<std::string, nlohmann::json> results;  // correlation id -> StepResult body
    std::deque<std::string> order;
    bool reset_pending = false;
    int forwarded = 0;
  };

  ControllerConfig config_;
  std::unique_ptr<SteadyClock> own_clock_;
  const Clock* clock_;
  ClusterState state_;
  TrainingBoard board_;
  std::unique_ptr<FrameServer> server_;
  std::unique_ptr<httplib::Server> http_;
  std::thread http_thread_;
  int http_port_ = 0;
  std::atomic<bool> running_{false};
  std::thread reaper_;
  std::mutex reaper_mu_;
  std::condition_variable reaper_cv_;

  mutable std::mutex extra_mu_;
  std::map<std::string, SessionExtra> extra_;
  std::map<std::string, std::shared_ptr<Channel>> channels_;
  std::vector<std::pair<double, std::string>> recovered_;
};

struct WorkerConfig {
  std::string worker_id = "w1";
  HostPort controller{"127.0.0.1", 7700};
  HostPort bind{"127.0.0.1", 0};
  int slots = 16;
  std::chrono::milliseconds heartbeat{1000};
  int connect_attempts = 5;
  std::chrono::milliseconds retry_delay{200};
};

struct WorkerStats {
  std::uint64_t steps_applied = 0;
  std::uint64_t duplicates = 0;
  std::uint64_t sessions_created = 0;
};

/// Hosts env slots in-process and heartbeats to the controller.
class WorkerService {
 public:
  explicit WorkerService(WorkerConfig config, const ApiRegistry& registry = default_registry());
  ~WorkerService();

  /// Binds, registers (retrying) and starts heartbeats. Throws BindFailure or
  /// ControllerUnreachable.
  void start();
  /// Graceful stop.
  void stop();
  /// Abrupt failure: heartbeats and connections stop at once.
  void kill();
  bool draining() const { return draining_; }
  std::size_t active() const;
  HostPort address() const;
  const std::string& id() const { return config_.worker_id; }
  WorkerStats stats() const;

 private:
  WireMessage handle(const WireMessage& m);
  void heartbeat_loop();
  void register_with_controller();

  struct Slot {
    std::unique_ptr<LocalSession> env;
    TaskSpec task;
    std::uint64_t seed = 0;
    ActionMode mode = ActionMode::kApiGui;
    std::map<std::string, nlohmann::json> results;
    std::deque<std::string> order;
    std::mutex mu;
  };

  WorkerConfig config_;
  const ApiRegistry* registry_;
  std::unique_ptr<FrameServer> server_;
  std::unique_ptr<Channel> controller_;
  std::thread heartbeat_;
  std::atomic<bool> running_{false};
  std::atomic<bool> draining_{false};
  std::mutex hb_mu_;
  std::condition_variable hb_cv_;
  mutable std::mutex mu_;
  std::map<std::string, std::shared_ptr<Slot>> sessions_;
  WorkerStats stats_;
};

/// One controller connection used by clients (trainer, tools).
class ControllerClient {
 public:
  ControllerClient(HostPort controller, std::string client_id,
                   std::chrono::milliseconds timeout = std::chrono::milliseconds(15000));

  struct Allocation {
    std::string session_id;
    std::string worker_id;
    SessionView view;
  };
  Allocation allocate(const TaskSpec& task, std::uint64_t seed, ActionMode mode, const std::string& replaces = {});
  SessionView step(const std::string& session_id, const std::string& action, const std::string& correlation_id = {});
  void release(const std::string& session_id);
  nlohmann::json status();
  /// Sends metric records; returns the operator's pause flag.
  bool publish(const std::vector<nlohmann::json>& records);

 private:
  Channel ch_;
};

/// EnvSession behind the controller.
class RemoteSession : public EnvSession {
 public:
  RemoteSession(ControllerClient& client, const TaskSpec& task, std::uint64_t seed, ActionMode mode,
                const std::string& replaces = {});
  ~RemoteSession() override;
  const TaskSpec& task() const override { return task_; }
  ActionMode mode() const override { return mode_; }
  SessionView current() override { return view_; }
  SessionView step(const std::string& raw_action) override;
  const std::string& session_id() const { return session_id_; }
  void release();

 private:
  ControllerClient& client_;
  TaskSpec task_;
  ActionMode mode_;
  std::string session_id_;
  SessionView view_;
  std::uint64_t steps_ = 0;
  bool released_ = false;
};

struct RemoteBackendStats {
  std::uint64_t episodes = 0;
  std::uint64_t restarts = 0;
};

/// Rollouts through the cluster. An episode whose session is lost or reset
/// restarts from scratch on a new allocation; partial episodes are discarded.
class RemoteBackend : public RolloutBackend {
 public:
  RemoteBackend(HostPort controller, std::size_t concurrency, int max_attempts = 5);
  std::vector<Trajectory> run(const std::vector<RolloutRequest>& requests, const ActorFactory& actors) override;
  RemoteBackendStats stats() const;
  /// (time, replaced session, task id) for every reallocation this backend made.
  std::vector<std::tuple<double, std::string, std::string>> reallocations() const;

 private:
  HostPort controller_;
  std::size_t concurrency_;
  int max_attempts_;
  std::atomic<std::uint64_t> client_seq_{0};
  mutable std::mutex mu_;
  RemoteBackendStats stats_;
  std::vector<std::tuple<double, std::string, std::string>> reallocations_;
  SteadyClock clock_;
};

/// Background publisher of trainer metrics; relays the controller's pause flag.
class TrainLink {
 public:
  TrainLink(HostPort controller, std::function<void(bool paused)> on_pause,
            std::chrono::milliseconds period = std::chrono::milliseconds(250));
  ~TrainLink();
  void post(nlohmann::json record);
  /// Sends whatever is queued and stops the thread.
  void close();
  std::uint64_t failures() const { return failures_; }

 private:
  void loop();
  void flush();

  ControllerClient client_;
  std::function<void(bool)> on_pause_;
  std::chrono::milliseconds period_;
  std::mutex mu_;
  std::condition_variable cv_;
  std::vector<nlohmann::json> queue_;
  bool stop_ = false;
  std::atomic<std::uint64_t> failures_{0};
  std::thread thread_;
};

struct EmbeddedClusterConfig {
  int workers = 2;
  int slots = 16;
  HeartbeatConfig heartbeat;
  bool enable_http = false;
};

/// Controller plus workers on loopback ephemeral ports, in this process.
class EmbeddedCluster {
 public:
  explicit EmbeddedCluster(EmbeddedClusterConfig config = {});
  ~EmbeddedCluster();
  HostPort address() const { return controller_->address(); }
  ControllerService& controller() { return *controller_; }
  WorkerService& worker(std::size_t i) { return *workers_.at(i); }
  std::size_t workers() const { return workers_.size(); }

 private:
  std::unique_ptr<ControllerService> controller_;
  std::vector<std::unique_ptr<WorkerService>> workers_;
};

}  // namespace deskgrid
