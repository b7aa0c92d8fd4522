#include "deskgrid/cluster.hpp"

#include <httplib.h>

#include <algorithm>

namespace deskgrid {

namespace {

constexpr std::size_t kResultCache = 64;

double steady_seconds() {
  return std::chrono::duration<double>(std::chrono::steady_clock::now().time_since_epoch()).count();
}

bool transport_error(Errc c) { return c == Errc::kIo || c == Errc::kTimeout; }

void remember(std::map<std::string, nlohmann::json>& results, std::deque<std::string>& order, const std::string& key,
              nlohmann::json value) {
  results[key] = std::move(value);
  order.push_back(key);
  while (order.size() > kResultCache) {
    results.erase(order.front());
    order.pop_front();
  }
}

int http_status(Errc c) {
  switch (c) {
    case Errc::kUnknownSession:
    case Errc::kUnknownWorker: return 404;
    case Errc::kSessionLost: return 409;
    case Errc::kInvalidConfig:
    case Errc::kParse:
    case Errc::kProtocol: return 400;
    default: return 500;
  }
}

}  // namespace

double SteadyClock::now() const { return steady_seconds(); }

std::string_view worker_status_name(WorkerStatus s) {
  switch (s) {
    case WorkerStatus::kAlive: return "alive";
    case WorkerStatus::kSuspect: return "suspect";
    case WorkerStatus::kDead: return "dead";
  }
  return "?";
}

// ---------------------------------------------------------------- ClusterState

ClusterState::ClusterState(const Clock& clock, HeartbeatConfig hb) : clock_(clock), hb_(hb) {
  if (!(hb.interval > 0) || hb.timeout_intervals < 1)
    throw Error(Errc::kInvalidConfig, "heartbeat interval must be > 0 and timeout >= 1 interval");
}

void ClusterState::register_worker(const std::string& worker_id, const std::string& address, int capacity) {
  if (worker_id.empty()) throw Error(Errc::kInvalidConfig, "empty worker id");
  if (capacity < 1) throw Error(Errc::kInvalidConfig, "worker capacity must be >= 1");
  std::lock_guard lock(mu_);
  auto it = workers_.find(worker_id);
  int registrations = 0;
  if (it != workers_.end()) {
    if (it->second.status != WorkerStatus::kDead)
      throw Error(Errc::kDuplicateLiveWorker, "worker " + worker_id + " is already registered");
    registrations = it->second.registrations;
  }
  WorkerInfo w;
  w.worker_id = worker_id;
  w.address = address;
  w.capacity = capacity;
  w.last_heartbeat = clock_.now();
  w.registrations = registrations + 1;
  workers_[worker_id] = w;
  for (int i = 0; i < capacity; ++i) {
    EnvSlot s;
    char buf[16];
    std::snprintf(buf, sizeof buf, "%03d", i);
    s.slot_id = worker_id + "/" + buf;
    s.worker_id = worker_id;
    slots_[s.slot_id] = s;
  }
}

bool ClusterState::heartbeat(const std::string& worker_id) {
  std::lock_guard lock(mu_);
  auto it = workers_.find(worker_id);
  if (it == workers_.end() || it->second.status == WorkerStatus::kDead)
    throw Error(Errc::kUnknownWorker, "unknown worker " + worker_id);
  it->second.last_heartbeat = clock_.now();
  it->second.status = WorkerStatus::kAlive;
  return it->second.draining;
}

void ClusterState::set_draining(const std::string& worker_id) {
  std::lock_guard lock(mu_);
  auto it = workers_.find(worker_id);
  if (it == workers_.end() || it->second.status == WorkerStatus::kDead)
    throw Error(Errc::kUnknownWorker, "unknown worker " + worker_id);
  it->second.draining = true;
}

std::size_t ClusterState::load_locked(const std::string& worker_id) const {
  std::size_t n = 0;
  for (auto it = slots_.lower_bound(worker_id + "/"); it != slots_.end() && it->second.worker_id == worker_id; ++it)
    if (!it->second.session_id.empty()) ++n;
  return n;
}

Placement ClusterState::reserve(const std::string& task_id, const std::set<std::string>& exclude) {
  std::lock_guard lock(mu_);
  const WorkerInfo* best = nullptr;
  std::size_t best_load = 0;
  for (const auto& [id, w] : workers_) {
    if (w.status != WorkerStatus::kAlive || w.draining || exclude.count(id)) continue;
    std::size_t load = load_locked(id);
    if (load >= static_cast<std::size_t>(w.capacity)) continue;
    if (!best || load < best_load) {
      best = &w;
      best_load = load;
    }
  }
  if (!best) throw Error(Errc::kNoCapacity, "no idle slot on an alive worker");
  EnvSlot* slot = nullptr;
  for (auto it = slots_.lower_bound(best->worker_id + "/");
       it != slots_.end() && it->second.worker_id == best->worker_id; ++it) {
    if (it->second.session_id.empty()) {
      slot = &it->second;
      break;
    }
  }
  Placement p;
  p.session_id = "s" + std::to_string(++session_seq_);
  p.slot_id = slot->slot_id;
  p.worker_id = best->worker_id;
  p.address = best->address;
  slot->task_id = task_id;
  slot->session_id = p.session_id;
  slot->created_at = clock_.now();
  SessionInfo s;
  s.session_id = p.session_id;
  s.worker_id = p.worker_id;
  s.slot_id = p.slot_id;
  s.task_id = task_id;
  s.created_at = slot->created_at;
  sessions_[p.session_id] = s;
  pending_.insert(p.session_id);
  return p;
}

void ClusterState::confirm(const Placement& p, bool reallocation) {
  std::lock_guard lock(mu_);
  if (!pending_.erase(p.session_id)) throw Error(Errc::kSessionLost, "session " + p.session_id + " lost before start");
  ++counters_.allocations;
  if (reallocation) ++counters_.reallocations;
}

void ClusterState::cancel(const Placement& p) {
  std::lock_guard lock(mu_);
  if (!pending_.erase(p.session_id)) return;
  sessions_.erase(p.session_id);
  auto it = slots_.find(p.slot_id);
  if (it != slots_.end() && it->second.session_id == p.session_id) {
    it->second.session_id.clear();
    it->second.task_id.clear();
  }
}

SessionInfo ClusterState::session(const std::string& session_id) const {
  std::lock_guard lock(mu_);
  if (lost_ids_.count(session_id)) throw Error(Errc::kSessionLost, "session " + session_id + " was lost");
  auto it = sessions_.find(session_id);
  if (it == sessions_.end() || pending_.count(session_id))
    throw Error(Errc::kUnknownSession, "unknown session " + session_id);
  return it->second;
}

std::string ClusterState::worker_address(const std::string& worker_id) const {
  std::lock_guard lock(mu_);
  auto it = workers_.find(worker_id);
  if (it == workers_.end()) throw Error(Errc::kUnknownWorker, "unknown worker " + worker_id);
  return it->second.address;
}

void ClusterState::lose_locked(SessionInfo& s) {
  auto slot = slots_.find(s.slot_id);
  if (slot != slots_.end() && slot->second.session_id == s.session_id) {
    slot->second.session_id.clear();
    slot->second.task_id.clear();
  }
  if (pending_.erase(s.session_id)) return;
  ++counters_.lost;
  lost_ids_.insert(s.session_id);
  recovered_.push_back(s.task_id);
}

void ClusterState::mark_lost(const std::string& session_id) {
  std::lock_guard lock(mu_);
  auto it = sessions_.find(session_id);
  if (it == sessions_.end()) return;
  lose_locked(it->second);
  sessions_.erase(it);
}

void ClusterState::complete(const std::string& session_id) {
  std::lock_guard lock(mu_);
  if (lost_ids_.count(session_id)) return;
  auto it = sessions_.find(session_id);
  if (it == sessions_.end() || pending_.count(session_id))
    throw Error(Errc::kUnknownSession, "unknown session " + session_id);
  auto slot = slots_.find(it->second.slot_id);
  if (slot != slots_.end() && slot->second.session_id == session_id) {
    slot->second.session_id.clear();
    slot->second.task_id.clear();
  }
  sessions_.erase(it);
  ++counters_.completions;
}

void ClusterState::count_step(bool duplicate) {
  std::lock_guard lock(mu_);
  ++(duplicate ? counters_.duplicate_steps : counters_.steps);
}

void ClusterState::count_reallocation() {
  std::lock_guard lock(mu_);
  ++counters_.reallocations;
}

void ClusterState::count_audit_mismatch() {
  std::lock_guard lock(mu_);
  ++counters_.duplicate_applications;
}

std::vector<std::string> ClusterState::reap() {
  std::lock_guard lock(mu_);
  double now = clock_.now();
  for (auto& [id, w] : workers_) {
    if (w.status == WorkerStatus::kDead) continue;
    double silence = now - w.last_heartbeat;
    if (silence > hb_.timeout()) {
      w.status = WorkerStatus::kDead;
      ++counters_.failures;
      for (auto it = sessions_.begin(); it != sessions_.end();) {
        if (it->second.worker_id == id) {
          lose_locked(it->second);
          it = sessions_.erase(it);
        } else {
          ++it;
        }
      }
      for (auto it = slots_.begin(); it != slots_.end();)
        it = it->second.worker_id == id ? slots_.erase(it) : std::next(it);
    } else if (silence > hb_.interval) {
      w.status = WorkerStatus::kSuspect;
    }
  }
  std::vector<std::string> out;
  out.swap(recovered_);
  return out;
}

void ClusterState::lose_all() {
  std::lock_guard lock(mu_);
  for (auto& [id, s] : sessions_) lose_locked(s);
  sessions_.clear();
}

std::vector<WorkerInfo> ClusterState::workers() const {
  std::lock_guard lock(mu_);
  std::vector<WorkerInfo> out;
  for (const auto& [id, w] : workers_) out.push_back(w);
  return out;
}

std::vector<EnvSlot> ClusterState::slots() const {
  std::lock_guard lock(mu_);
  std::vector<EnvSlot> out;
  for (const auto& [id, s] : slots_) out.push_back(s);
  return out;
}

std::vector<SessionInfo> ClusterState::active_sessions() const {
  std::lock_guard lock(mu_);
  std::vector<SessionInfo> out;
  for (const auto& [id, s] : sessions_)
    if (!pending_.count(id)) out.push_back(s);
  return out;
}

ClusterCounters ClusterState::counters() const {
  std::lock_guard lock(mu_);
  return counters_;
}

std::size_t ClusterState::active() const {
  std::lock_guard lock(mu_);
  return sessions_.size() - pending_.size();
}

nlohmann::json counters_to_json(const ClusterCounters& c) {
  return {{"allocations", c.allocations}, {"completions", c.completions},
          {"lost", c.lost},               {"failures", c.failures},
          {"reallocations", c.reallocations}, {"steps", c.steps},
          {"duplicate_steps", c.duplicate_steps}, {"duplicate_applications", c.duplicate_applications}};
}

nlohmann::json ClusterState::snapshot() const {
  std::lock_guard lock(mu_);
  double now = clock_.now();
  nlohmann::json workers = nlohmann::json::array();
  int alive_capacity = 0;
  for (const auto& [id, w] : workers_) {
    if (w.status != WorkerStatus::kDead) alive_capacity += w.capacity;
    workers.push_back({{"worker_id", w.worker_id},
                       {"address", w.address},
                       {"capacity", w.capacity},
                       {"load", load_locked(id)},
                       {"status", worker_status_name(w.status)},
                       {"draining", w.draining},
                       {"heartbeat_age", now - w.last_heartbeat}});
  }
  nlohmann::json slots = nlohmann::json::array();
  for (const auto& [id, s] : slots_) {
    bool busy = !s.session_id.empty() && !pending_.count(s.session_id);
    slots.push_back({{"slot_id", s.slot_id},
                     {"worker_id", s.worker_id},
                     {"task_id", busy ? nlohmann::json(s.task_id) : nlohmann::json(nullptr)},
                     {"session_id", busy ? nlohmann::json(s.session_id) : nlohmann::json(nullptr)},
                     {"age", busy ? now - s.created_at : 0.0}});
  }
  nlohmann::json sessions = nlohmann::json::array();
  for (const auto& [id, s] : sessions_) {
    if (pending_.count(id)) continue;
    sessions.push_back({{"session_id", s.session_id},
                        {"worker_id", s.worker_id},
                        {"slot_id", s.slot_id},
                        {"task_id", s.task_id},
                        {"age", now - s.created_at}});
  }
  return {{"proto_version", kProtoVersion},
          {"workers", workers},
          {"slots", slots},
          {"sessions", sessions},
          {"counters", counters_to_json(counters_)},
          {"active", sessions_.size() - pending_.size()},
          {"alive_capacity", alive_capacity},
          {"heartbeat", {{"interval", hb_.interval}, {"timeout", hb_.timeout()}}}};
}

// ---------------------------------------------------------------- TrainingBoard

void TrainingBoard::publish(const std::vector<nlohmann::json>& records) {
  std::lock_guard lock(mu_);
  records_.insert(records_.end(), records.begin(), records.end());
}

nlohmann::json TrainingBoard::series() const {
  std::lock_guard lock(mu_);
  nlohmann::json updates = nlohmann::json::array(), reward = nlohmann::json::array(),
                 entropy = nlohmann::json::array();
  for (const auto& r : records_) {
    if (!r.contains("update")) continue;
    updates.push_back(r.at("update"));
    reward.push_back(r.value("mean_reward", 0.0));
    entropy.push_back(r.value("entropy", 0.0));
  }
  return {{"update", updates}, {"reward", reward}, {"entropy", entropy}, {"paused", paused_}, {"records", records_}};
}

void TrainingBoard::set_paused(bool paused) {
  std::lock_guard lock(mu_);
  paused_ = paused;
}

bool TrainingBoard::paused() const {
  std::lock_guard lock(mu_);
  return paused_;
}

// ---------------------------------------------------------------- ControllerService

ControllerService::ControllerService(ControllerConfig config, const Clock* clock)
    : config_(std::move(config)),
      own_clock_(clock ? nullptr : std::make_unique<SteadyClock>()),
      clock_(clock ? clock : own_clock_.get()),
      state_(*clock_, config_.heartbeat) {}

ControllerService::~ControllerService() { stop(); }

void ControllerService::start() {
  server_ = std::make_unique<FrameServer>(config_.bind, "controller", [this](const WireMessage& m) { return handle(m); });
  server_->start();
  if (config_.enable_http) start_http();
  running_ = true;
  reaper_ = std::thread([this] { reaper_loop(); });
}

void ControllerService::start_http() {
  http_ = std::make_unique<httplib::Server>();
  auto& s = *http_;
  auto reply = [](httplib::Response& res, const nlohmann::json& j) { res.set_content(j.dump(), "application/json"); };
  auto guard = [reply](httplib::Response& res, const std::function<nlohmann::json()>& fn) {
    try {
      reply(res, fn());
    } catch (const Error& e) {
      res.status = http_status(e.code());
      reply(res, {{"error", errc_name(e.code())}, {"message", e.what()}});
    }
  };
  s.Get("/status", [=, this](const httplib::Request&, httplib::Response& res) {
    guard(res, [this] {
      auto j = state_.snapshot();
      j["training"] = {{"paused", board_.paused()}};
      return j;
    });
  });
  s.Get("/metrics", [=, this](const httplib::Request&, httplib::Response& res) {
    guard(res, [this] { return board_.series(); });
  });
  s.Post(R"(/env/([^/]+)/reset)", [=, this](const httplib::Request& req, httplib::Response& res) {
    std::string sid = req.matches[1];
    guard(res, [&] { return reset_session(sid); });
  });
  s.Post("/train/pause", [=, this](const httplib::Request&, httplib::Response& res) {
    guard(res, [this] {
      board_.set_paused(true);
      return nlohmann::json{{"paused", true}};
    });
  });
  s.Post("/train/resume", [=, this](const httplib::Request&, httplib::Response& res) {
    guard(res, [this] {
      board_.set_paused(false);
      return nlohmann::json{{"paused", false}};
    });
  });
  s.Post(R"(/worker/([^/]+)/drain)", [=, this](const httplib::Request& req, httplib::Response& res) {
    std::string wid = req.matches[1];
    guard(res, [&] {
      state_.set_draining(wid);
      return nlohmann::json{{"worker_id", wid}, {"draining", true}};
    });
  });
  if (config_.http.port == 0) {
    http_port_ = s.bind_to_any_port(config_.http.host);
    if (http_port_ <= 0) throw Error(Errc::kBindFailure, "cannot bind http on " + config_.http.host);
  } else {
    if (!s.bind_to_port(config_.http.host, config_.http.port))
      throw Error(Errc::kBindFailure, "cannot bind http on " + config_.http.to_string());
    http_port_ = config_.http.port;
  }
  http_thread_ = std::thread([this] { http_->listen_after_bind(); });
  http_->wait_until_ready();
}

void ControllerService::stop() {
  bool was = running_.exchange(false);
  if (was) {
    reaper_cv_.notify_all();
    if (reaper_.joinable()) reaper_.join();
  }
  if (server_) server_->stop();
  if (http_) {
    http_->stop();
    if (http_thread_.joinable()) http_thread_.join();
  }
  if (was) state_.lose_all();
  std::lock_guard lock(extra_mu_);
  for (auto& [id, ch] : channels_) ch->abort();
  channels_.clear();
}

HostPort ControllerService::address() const { return server_ ? server_->address() : config_.bind; }

std::vector<std::pair<double, std::string>> ControllerService::recovered() const {
  std::lock_guard lock(extra_mu_);
  return recovered_;
}

void ControllerService::reaper_loop() {
  auto period = std::chrono::duration<double>(config_.heartbeat.interval / 4);
  while (running_) {
    {
      std::unique_lock lock(reaper_mu_);
      reaper_cv_.wait_for(lock, period, [this] { return !running_; });
    }
    if (!running_) break;
    auto ids = state_.reap();
    double now = clock_->now();
    std::lock_guard lock(extra_mu_);
    for (auto& id : ids) recovered_.emplace_back(now, id);
    for (const auto& w : state_.workers())
      if (w.status == WorkerStatus::kDead) {
        auto it = channels_.find(w.worker_id);
        if (it != channels_.end()) {
          it->second->abort();
          channels_.erase(it);
        }
      }
  }
}

std::shared_ptr<Channel> ControllerService::channel(const std::string& worker_id) {
  std::string address = state_.worker_address(worker_id);
  std::lock_guard lock(extra_mu_);
  auto& ch = channels_[worker_id];
  if (!ch || ch->peer().to_string() != address)
    ch = std::make_shared<Channel>(parse_host_port(address), "controller", config_.forward_timeout);
  return ch;
}

void ControllerService::drop_channel(const std::string& worker_id) {
  std::lock_guard lock(extra_mu_);
  channels_.erase(worker_id);
}

std::shared_ptr<std::mutex> ControllerService::session_lock(const std::string& session_id) {
  {
    std::lock_guard lock(extra_mu_);
    auto it = extra_.find(session_id);
    if (it != extra_.end()) return it->second.mu;
  }
  state_.session(session_id);
  throw Error(Errc::kUnknownSession, "unknown session " + session_id);
}

WireMessage ControllerService::handle(const WireMessage& m) {
  const std::string me = "controller";
  switch (m.type) {
    case MsgType::kRegister: {
      state_.register_worker(m.body.at("worker_id").get<std::string>(), m.body.at("address").get<std::string>(),
                             m.body.at("capacity").get<int>());
      drop_channel(m.body.at("worker_id").get<std::string>());
      return make_reply(m, MsgType::kAck, nlohmann::json::object(), me);
    }
    case MsgType::kHeartbeat: {
      bool drain = state_.heartbeat(m.body.at("worker_id").get<std::string>());
      return make_reply(m, MsgType::kAck, {{"drain", drain}}, me);
    }
    case MsgType::kAllocate: return on_allocate(m);
    case MsgType::kStep: return on_step(m);
    case MsgType::kReset: {
      auto j = reset_session(m.body.at("session_id").get<std::string>());
      std::lock_guard lock(extra_mu_);
      auto it = extra_.find(j.at("session_id").get<std::string>());
      if (it != extra_.end()) it->second.reset_pending = false;
      return make_reply(m, MsgType::kStepResult, {{"view", j.at("view")}}, me);
    }
    case MsgType::kRelease: return on_release(m);
    case MsgType::kStatusQuery: {
      auto j = state_.snapshot();
      j["metrics"] = board_.series();
      return make_reply(m, MsgType::kStatusReport, j, me);
    }
    case MsgType::kPublish: {
      std::vector<nlohmann::json> records;
      for (const auto& r : m.body.value("records", nlohmann::json::array())) records.push_back(r);
      board_.publish(records);
      return make_reply(m, MsgType::kAck, {{"paused", board_.paused()}}, me);
    }
    default: throw Error(Errc::kProtocol, std::string("unexpected request ") + std::string(msg_type_name(m.type)));
  }
}

WireMessage ControllerService::on_allocate(const WireMessage& m) {
  std::string line = m.body.at("task").get<std::string>();
  TaskSpec task = TaskSpec::from_line(line);
  validate_task(task);
  std::string replaces = m.body.value("replaces", "");
  std::set<std::string> exclude;
  while (true) {
    Placement p = state_.reserve(task.task_id, exclude);
    nlohmann::json fwd = m.body;
    fwd["session_id"] = p.session_id;
    fwd["slot_id"] = p.slot_id;
    WireMessage reply;
    try {
      reply = channel(p.worker_id)->call(MsgType::kAllocate, fwd, m.correlation_id + "@" + p.session_id);
    } catch (const Error& e) {
      state_.cancel(p);
      if (!transport_error(e.code()) && e.code() != Errc::kNoCapacity) throw;
      drop_channel(p.worker_id);
      exclude.insert(p.worker_id);
      continue;
    }
    {
      std::lock_guard lock(extra_mu_);
      SessionExtra& x = extra_[p.session_id];
      x.task_line = line;
      x.seed = m.body.value("seed", std::uint64_t{0});
      x.mode = m.body.value("mode", "api");
    }
    try {
      state_.confirm(p, !replaces.empty());
    } catch (...) {
      std::lock_guard lock(extra_mu_);
      extra_.erase(p.session_id);
      throw;
    }
    return make_reply(m, MsgType::kAllocated,
                      {{"session_id", p.session_id},
                       {"slot_id", p.slot_id},
                       {"worker_id", p.worker_id},
                       {"view", reply.body.at("view")}},
                      "controller");
  }
}

WireMessage ControllerService::on_step(const WireMessage& m) {
  std::string sid = m.body.at("session_id").get<std::string>();
  auto mu = session_lock(sid);
  std::lock_guard session_guard(*mu);
  SessionExtra* x;
  {
    std::lock_guard lock(extra_mu_);
    auto it = extra_.find(sid);
    if (it == extra_.end()) {
      state_.session(sid);
      throw Error(Errc::kUnknownSession, "unknown session " + sid);
    }
    x = &it->second;
    auto cached = x->results.find(m.correlation_id);
    if (cached != x->results.end()) {
      state_.count_step(true);
      return make_reply(m, MsgType::kStepResult, cached->second, "controller");
    }
    if (x->reset_pending) {
      x->reset_pending = false;
      throw Error(Errc::kSessionReset, "session " + sid + " was reset by the operator");
    }
  }
  SessionInfo info = state_.session(sid);
  WireMessage reply;
  try {
    reply = channel(info.worker_id)->call(MsgType::kStep, m.body, m.correlation_id);
  } catch (const Error& e) {
    if (transport_error(e.code()) || e.code() == Errc::kUnknownSession) {
      state_.mark_lost(sid);
      drop_channel(info.worker_id);
      std::lock_guard lock(extra_mu_);
      extra_.erase(sid);
      if (e.code() == Errc::kTimeout) throw;
      throw Error(Errc::kSessionLost, "session " + sid + " lost: " + e.what());
    }
    throw;
  }
  state_.count_step(false);
  std::lock_guard lock(extra_mu_);
  ++x->forwarded;
  remember(x->results, x->order, m.correlation_id, reply.body);
  return make_reply(m, MsgType::kStepResult, reply.body, "controller");
}

WireMessage ControllerService::on_release(const WireMessage& m) {
  std::string sid = m.body.at("session_id").get<std::string>();
  std::shared_ptr<std::mutex> mu;
  try {
    mu = session_lock(sid);
  } catch (const Error& e) {
    if (e.code() == Errc::kSessionLost) return make_reply(m, MsgType::kAck, {{"lost", true}}, "controller");
    throw;
  }
  std::lock_guard session_guard(*mu);
  SessionInfo info;
  try {
    info = state_.session(sid);
  } catch (const Error& e) {
    if (e.code() == Errc::kSessionLost) return make_reply(m, MsgType::kAck, {{"lost", true}}, "controller");
    throw;
  }
  int forwarded = 0;
  {
    std::lock_guard lock(extra_mu_);
    forwarded = extra_.at(sid).forwarded;
  }
  try {
    auto ack = channel(info.worker_id)->call(MsgType::kRelease, {{"session_id", sid}}, m.correlation_id);
    if (ack.body.contains("env_steps") && ack.body.at("env_steps").get<int>() != forwarded)
      state_.count_audit_mismatch();
  } catch (const Error& e) {
    if (!transport_error(e.code()) && e.code() != Errc::kUnknownSession) throw;
  }
  state_.complete(sid);
  std::lock_guard lock(extra_mu_);
  extra_.erase(sid);
  return make_reply(m, MsgType::kAck, {{"lost", false}}, "controller");
}

nlohmann::json ControllerService::reset_session(const std::string& session_id) {
  auto mu = session_lock(session_id);
  std::lock_guard session_guard(*mu);
  SessionInfo info = state_.session(session_id);
  WireMessage reply;
  try {
    reply = channel(info.worker_id)->call(MsgType::kReset, {{"session_id", session_id}});
  } catch (const Error& e) {
    if (!transport_error(e.code())) throw;
    state_.mark_lost(session_id);
    throw Error(Errc::kSessionLost, "session " + session_id + " lost: " + e.what());
  }
  state_.count_reallocation();
  std::lock_guard lock(extra_mu_);
  auto& x = extra_.at(session_id);
  x.reset_pending = true;
  x.forwarded = 0;
  x.results.clear();
  x.order.clear();
  return {{"session_id", session_id}, {"worker_id", info.worker_id}, {"view", reply.body.at("view")}};
}

// ---------------------------------------------------------------- WorkerService

WorkerService::WorkerService(WorkerConfig config, const ApiRegistry& registry)
    : config_(std::move(config)), registry_(&registry) {
  if (config_.slots < 1) throw Error(Errc::kInvalidConfig, "worker needs at least one slot");
}

WorkerService::~WorkerService() { kill(); }

void WorkerService::start() {
  server_ = std::make_unique<FrameServer>(config_.bind, config_.worker_id,
                                          [this](const WireMessage& m) { return handle(m); });
  server_->start();
  controller_ = std::make_unique<Channel>(config_.controller, config_.worker_id, std::chrono::milliseconds(5000));
  try {
    register_with_controller();
  } catch (...) {
    server_->stop();
    throw;
  }
  running_ = true;
  heartbeat_ = std::thread([this] { heartbeat_loop(); });
}

void WorkerService::register_with_controller() {
  std::string last;
  for (int attempt = 0; attempt < std::max(1, config_.connect_attempts); ++attempt) {
    if (attempt > 0) std::this_thread::sleep_for(config_.retry_delay * (1 << std::min(attempt - 1, 5)));
    try {
      controller_->call(MsgType::kRegister, {{"worker_id", config_.worker_id},
                                             {"address", server_->address().to_string()},
                                             {"capacity", config_.slots}});
      std::lock_guard lock(mu_);
      sessions_.clear();
      return;
    } catch (const Error& e) {
      if (!transport_error(e.code())) throw;
      last = e.what();
    }
  }
  throw Error(Errc::kControllerUnreachable, "controller " + config_.controller.to_string() + " unreachable: " + last);
}

void WorkerService::heartbeat_loop() {
  while (running_) {
    {
      std::unique_lock lock(hb_mu_);
      hb_cv_.wait_for(lock, config_.heartbeat, [this] { return !running_; });
    }
    if (!running_) break;
    try {
      auto ack = controller_->call(MsgType::kHeartbeat, {{"worker_id", config_.worker_id}, {"load", active()}});
      draining_ = ack.body.value("drain", false);
    } catch (const Error& e) {
      if (!running_) break;
      if (e.code() == Errc::kUnknownWorker) {
        try {
          register_with_controller();
        } catch (const Error&) {
        }
      }
    }
  }
}

void WorkerService::kill() {
  running_ = false;
  hb_cv_.notify_all();
  if (controller_) controller_->abort();
  if (server_) server_->stop();
  if (heartbeat_.joinable()) heartbeat_.join();
  if (controller_) controller_->close();
}

void WorkerService::stop() { kill(); }

std::size_t WorkerService::active() const {
  std::lock_guard lock(mu_);
  return sessions_.size();
}

HostPort WorkerService::address() const { return server_ ? server_->address() : config_.bind; }

WorkerStats WorkerService::stats() const {
  std::lock_guard lock(mu_);
  return stats_;
}

WireMessage WorkerService::handle(const WireMessage& m) {
  const std::string& me = config_.worker_id;
  auto find = [this](const std::string& sid) {
    std::lock_guard lock(mu_);
    auto it = sessions_.find(sid);
    if (it == sessions_.end()) throw Error(Errc::kUnknownSession, "unknown session " + sid + " on " + config_.worker_id);
    return it->second;
  };
  switch (m.type) {
    case MsgType::kAllocate: {
      if (draining_) throw Error(Errc::kNoCapacity, "worker " + me + " is draining");
      auto slot = std::make_shared<Slot>();
      slot->task = TaskSpec::from_line(m.body.at("task").get<std::string>());
      slot->seed = m.body.value("seed", std::uint64_t{0});
      auto mode = parse_action_mode(m.body.value("mode", "api"));
      if (!mode) throw Error(Errc::kProtocol, "bad action mode");
      slot->mode = *mode;
      slot->env = std::make_unique<LocalSession>(slot->task, slot->seed, slot->mode, *registry_);
      std::string sid = m.body.at("session_id").get<std::string>();
      auto view = slot->env->current();
      {
        std::lock_guard lock(mu_);
        if (sessions_.size() >= static_cast<std::size_t>(config_.slots))
          throw Error(Errc::kNoCapacity, "worker " + me + " is full");
        if (!sessions_.emplace(sid, slot).second) throw Error(Errc::kProtocol, "session " + sid + " already exists");
        ++stats_.sessions_created;
      }
      return make_reply(m, MsgType::kAllocated,
                        {{"session_id", sid},
                         {"slot_id", m.body.value("slot_id", "")},
                         {"worker_id", me},
                         {"view", view_to_json(view)}},
                        me);
    }
    case MsgType::kStep: {
      auto slot = find(m.body.at("session_id").get<std::string>());
      std::lock_guard lock(slot->mu);
      auto cached = slot->results.find(m.correlation_id);
      if (cached != slot->results.end()) {
        std::lock_guard g(mu_);
        ++stats_.duplicates;
        return make_reply(m, MsgType::kStepResult, cached->second, me);
      }
      nlohmann::json body = {{"view", view_to_json(slot->env->step(m.body.at("action").get<std::string>()))}};
      remember(slot->results, slot->order, m.correlation_id, body);
      std::lock_guard g(mu_);
      ++stats_.steps_applied;
      return make_reply(m, MsgType::kStepResult, body, me);
    }
    case MsgType::kReset: {
      auto slot = find(m.body.at("session_id").get<std::string>());
      std::lock_guard lock(slot->mu);
      slot->env = std::make_unique<LocalSession>(slot->task, slot->seed, slot->mode, *registry_);
      slot->results.clear();
      slot->order.clear();
      return make_reply(m, MsgType::kStepResult, {{"view", view_to_json(slot->env->current())}}, me);
    }
    case MsgType::kRelease: {
      std::string sid = m.body.at("session_id").get<std::string>();
      auto slot = find(sid);
      int env_steps;
      {
        std::lock_guard lock(slot->mu);
        env_steps = slot->env->env().state().step_count;
      }
      std::lock_guard lock(mu_);
      sessions_.erase(sid);
      return make_reply(m, MsgType::kAck, {{"env_steps", env_steps}}, me);
    }
    case MsgType::kStatusQuery: {
      std::lock_guard lock(mu_);
      return make_reply(m, MsgType::kStatusReport,
                        {{"worker_id", me},
                         {"active", sessions_.size()},
                         {"capacity", config_.slots},
                         {"draining", draining_.load()},
                         {"steps_applied", stats_.steps_applied},
                         {"duplicates", stats_.duplicates}},
                        me);
    }
    default: throw Error(Errc::kProtocol, std::string("unexpected request ") + std::string(msg_type_name(m.type)));
  }
}

// ---------------------------------------------------------------- clients

ControllerClient::ControllerClient(HostPort controller, std::string client_id, std::chrono::milliseconds timeout)
    : ch_(std::move(controller), std::move(client_id), timeout) {}

ControllerClient::Allocation ControllerClient::allocate(const TaskSpec& task, std::uint64_t seed, ActionMode mode,
                                                        const std::string& replaces) {
  nlohmann::json body = {{"task", task.to_line()}, {"seed", seed}, {"mode", action_mode_name(mode)}};
  if (!replaces.empty()) body["replaces"] = replaces;
  auto r = ch_.call(MsgType::kAllocate, body);
  return {r.body.at("session_id").get<std::string>(), r.body.at("worker_id").get<std::string>(),
          view_from_json(r.body.at("view"))};
}

SessionView ControllerClient::step(const std::string& session_id, const std::string& action,
                                   const std::string& correlation_id) {
  auto r = ch_.call(MsgType::kStep, {{"session_id", session_id}, {"action", action}}, correlation_id);
  return view_from_json(r.body.at("view"));
}

void ControllerClient::release(const std::string& session_id) {
  ch_.call(MsgType::kRelease, {{"session_id", session_id}, {"completed", true}});
}

nlohmann::json ControllerClient::status() { return ch_.call(MsgType::kStatusQuery, nlohmann::json::object()).body; }

bool ControllerClient::publish(const std::vector<nlohmann::json>& records) {
  return ch_.call(MsgType::kPublish, {{"records", records}}).body.value("paused", false);
}

RemoteSession::RemoteSession(ControllerClient& client, const TaskSpec& task, std::uint64_t seed, ActionMode mode,
                             const std::string& replaces)
    : client_(client), task_(task), mode_(mode) {
  auto a = client_.allocate(task, seed, mode, replaces);
  session_id_ = a.session_id;
  view_ = a.view;
}

RemoteSession::~RemoteSession() {
  try {
    release();
  } catch (const Error&) {
  }
}

SessionView RemoteSession::step(const std::string& raw_action) {
  if (released_) throw Error(Errc::kEpisodeFinished, "session released");
  view_ = client_.step(session_id_, raw_action, session_id_ + "#" + std::to_string(steps_++));
  return view_;
}

void RemoteSession::release() {
  if (released_) return;
  released_ = true;
  client_.release(session_id_);
}

RemoteBackend::RemoteBackend(HostPort controller, std::size_t concurrency, int max_attempts)
    : controller_(std::move(controller)), concurrency_(std::max<std::size_t>(1, concurrency)),
      max_attempts_(max_attempts) {}

std::vector<Trajectory> RemoteBackend::run(const std::vector<RolloutRequest>& requests, const ActorFactory& actors) {
  std::vector<Trajectory> out(requests.size());
  std::atomic<std::size_t> next{0};
  std::mutex err_mu;
  std::exception_ptr error;
  auto worker = [&] {
    ControllerClient client(controller_, "client" + std::to_string(++client_seq_));
    while (true) {
      std::size_t i = next++;
      if (i >= requests.size()) return;
      {
        std::lock_guard lock(err_mu);
        if (error) return;
      }
      try {
        const auto& req = requests[i];
        std::string replaces;
        double waited = 0;
        for (int attempt = 0;; ++attempt) {
          if (attempt >= max_attempts_)
            throw Error(Errc::kClusterUnavailable, "episode for " + req.task.task_id + " failed " +
                                                       std::to_string(attempt) + " times");
          std::unique_ptr<RemoteSession> session;
          try {
            session = std::make_unique<RemoteSession>(client, req.task, req.seed, req.mode, replaces);
          } catch (const Error& e) {
            if (e.code() != Errc::kNoCapacity || waited > 30.0) throw;
            std::this_thread::sleep_for(std::chrono::milliseconds(20));
            waited += 0.02;
            --attempt;
            continue;
          }
          if (!replaces.empty()) {
            std::lock_guard lock(mu_);
            reallocations_.emplace_back(clock_.now(), replaces, req.task.task_id);
          }
          replaces.clear();
          try {
            auto actor = actors(req);
            out[i] = run_episode(*session, *actor, req);
            session->release();
            std::lock_guard lock(mu_);
            ++stats_.episodes;
            break;
          } catch (const Error& e) {
            if (e.code() != Errc::kSessionLost && e.code() != Errc::kSessionReset && !transport_error(e.code()))
              throw;
            if (e.code() != Errc::kSessionReset) replaces = session->session_id();
            std::lock_guard lock(mu_);
            ++stats_.restarts;
          }
        }
      } catch (...) {
        std::lock_guard lock(err_mu);
        if (!error) error = std::current_exception();
        return;
      }
    }
  };
  std::size_t n = std::min(concurrency_, std::max<std::size_t>(1, requests.size()));
  std::vector<std::thread> threads;
  for (std::size_t t = 0; t < n; ++t) threads.emplace_back(worker);
  for (auto& t : threads) t.join();
  if (error) std::rethrow_exception(error);
  return out;
}

RemoteBackendStats RemoteBackend::stats() const {
  std::lock_guard lock(mu_);
  return stats_;
}

std::vector<std::tuple<double, std::string, std::string>> RemoteBackend::reallocations() const {
  std::lock_guard lock(mu_);
  return reallocations_;
}

TrainLink::TrainLink(HostPort controller, std::function<void(bool)> on_pause, std::chrono::milliseconds period)
    : client_(std::move(controller), "trainer", std::chrono::milliseconds(5000)),
      on_pause_(std::move(on_pause)),
      period_(period) {
  thread_ = std::thread([this] { loop(); });
}

TrainLink::~TrainLink() { close(); }

void TrainLink::post(nlohmann::json record) {
  std::lock_guard lock(mu_);
  queue_.push_back(std::move(record));
}

void TrainLink::flush() {
  std::vector<nlohmann::json> batch;
  {
    std::lock_guard lock(mu_);
    batch.swap(queue_);
  }
  try {
    bool paused = client_.publish(batch);
    if (on_pause_) on_pause_(paused);
  } catch (const Error&) {
    ++failures_;
    std::lock_guard lock(mu_);
    queue_.insert(queue_.begin(), batch.begin(), batch.end());
  }
}

void TrainLink::loop() {
  std::unique_lock lock(mu_);
  while (!stop_) {
    cv_.wait_for(lock, period_, [this] { return stop_; });
    if (stop_) break;
    lock.unlock();
    flush();
    lock.lock();
  }
}

void TrainLink::close() {
  {
    std::lock_guard lock(mu_);
    if (stop_) return;
    stop_ = true;
  }
  cv_.notify_all();
  if (thread_.joinable()) thread_.join();
  flush();
}

// ---------------------------------------------------------------- EmbeddedCluster

EmbeddedCluster::EmbeddedCluster(EmbeddedClusterConfig config) {
  ControllerConfig cc;
  cc.bind = {"127.0.0.1", 0};
  cc.http = {"127.0.0.1", 0};
  cc.enable_http = config.enable_http;
  cc.heartbeat = config.heartbeat;
  controller_ = std::make_unique<ControllerService>(cc);
  controller_->start();
  for (int i = 0; i < config.workers; ++i) {
    WorkerConfig wc;
    wc.worker_id = "w" + std::to_string(i + 1);
    wc.controller = controller_->address();
    wc.slots = config.slots;
    wc.heartbeat = std::chrono::milliseconds(static_cast<int>(config.heartbeat.interval * 1000));
    workers_.push_back(std::make_unique<WorkerService>(wc));
    workers_.back()->start();
  }
}

EmbeddedCluster::~EmbeddedCluster() {
  for (auto& w : workers_) w->stop();
  controller_->stop();
}

}  // namespace deskgrid
