#include "deskgrid/net.hpp"

#include <arpa/inet.h>
#include <fcntl.h>
#include <netdb.h>
#include <netinet/in.h>
#include <netinet/tcp.h>
#include <poll.h>
#include <sys/socket.h>
#include <unistd.h>

#include <cerrno>
#include <cstring>

namespace deskgrid {

namespace {

using Clock = std::chrono::steady_clock;

int remaining_ms(Clock::time_point deadline) {
  auto left = std::chrono::duration_cast<std::chrono::milliseconds>(deadline - Clock::now()).count();
  return left < 0 ? 0 : static_cast<int>(left);
}

sockaddr_in resolve(const HostPort& hp) {
  sockaddr_in addr{};
  addr.sin_family = AF_INET;
  addr.sin_port = htons(static_cast<std::uint16_t>(hp.port));
  std::string host = hp.host == "localhost" || hp.host.empty() ? "127.0.0.1" : hp.host;
  if (inet_pton(AF_INET, host.c_str(), &addr.sin_addr) == 1) return addr;
  addrinfo hints{};
  hints.ai_family = AF_INET;
  hints.ai_socktype = SOCK_STREAM;
  addrinfo* res = nullptr;
  if (getaddrinfo(host.c_str(), nullptr, &hints, &res) != 0 || !res)
    throw Error(Errc::kIo, "cannot resolve " + hp.host);
  addr.sin_addr = reinterpret_cast<sockaddr_in*>(res->ai_addr)->sin_addr;
  freeaddrinfo(res);
  return addr;
}

// Reads exactly n bytes before the deadline. Returns false on timeout with
// nothing read; throws once a partial read cannot complete.
bool read_exact(int fd, char* buf, std::size_t n, Clock::time_point deadline, bool allow_idle_timeout) {
  std::size_t got = 0;
  while (got < n) {
    pollfd p{fd, POLLIN, 0};
    int r = ::poll(&p, 1, remaining_ms(deadline));
    if (r < 0) {
      if (errno == EINTR) continue;
      throw Error(Errc::kIo, std::string("poll: ") + std::strerror(errno));
    }
    if (r == 0) {
      if (got == 0 && allow_idle_timeout) return false;
      throw Error(Errc::kTimeout, "read timed out");
    }
    ssize_t k = ::recv(fd, buf + got, n - got, 0);
    if (k == 0) throw Error(Errc::kIo, "connection closed");
    if (k < 0) {
      if (errno == EINTR || errno == EAGAIN) continue;
      throw Error(Errc::kIo, std::string("recv: ") + std::strerror(errno));
    }
    got += static_cast<std::size_t>(k);
  }
  return true;
}

}  // namespace

HostPort parse_host_port(std::string_view s) {
  auto colon = s.rfind(':');
  if (colon == std::string_view::npos) throw Error(Errc::kInvalidConfig, "expected host:port, got '" + std::string(s) + "'");
  HostPort hp;
  hp.host = std::string(s.substr(0, colon));
  if (hp.host.empty()) hp.host = "127.0.0.1";
  try {
    std::size_t used = 0;
    std::string port(s.substr(colon + 1));
    hp.port = std::stoi(port, &used);
    if (used != port.size()) throw std::invalid_argument("port");
  } catch (const std::exception&) {
    throw Error(Errc::kInvalidConfig, "bad port in '" + std::string(s) + "'");
  }
  if (hp.port < 0 || hp.port > 65535) throw Error(Errc::kInvalidConfig, "port out of range in '" + std::string(s) + "'");
  return hp;
}

Socket::~Socket() { close(); }

Socket& Socket::operator=(Socket&& o) noexcept {
  if (this != &o) {
    close();
    fd_ = o.fd_.exchange(-1);
  }
  return *this;
}

void Socket::shutdown() {
  int fd = fd_.load();
  if (fd >= 0) ::shutdown(fd, SHUT_RDWR);
}

void Socket::close() {
  int fd = fd_.exchange(-1);
  if (fd >= 0) {
    ::shutdown(fd, SHUT_RDWR);
    ::close(fd);
  }
}

Socket connect_tcp(const HostPort& to, std::chrono::milliseconds timeout) {
  sockaddr_in addr = resolve(to);
  int fd = ::socket(AF_INET, SOCK_STREAM | SOCK_CLOEXEC, 0);
  if (fd < 0) throw Error(Errc::kIo, std::string("socket: ") + std::strerror(errno));
  Socket s(fd);
  int flags = fcntl(fd, F_GETFL, 0);
  fcntl(fd, F_SETFL, flags | O_NONBLOCK);
  int r = ::connect(fd, reinterpret_cast<sockaddr*>(&addr), sizeof addr);
  if (r < 0 && errno != EINPROGRESS) throw Error(Errc::kIo, "connect " + to.to_string() + ": " + std::strerror(errno));
  if (r < 0) {
    pollfd p{fd, POLLOUT, 0};
    int pr = ::poll(&p, 1, static_cast<int>(timeout.count()));
    if (pr == 0) throw Error(Errc::kTimeout, "connect " + to.to_string() + " timed out");
    int err = 0;
    socklen_t len = sizeof err;
    getsockopt(fd, SOL_SOCKET, SO_ERROR, &err, &len);
    if (pr < 0 || err != 0)
      throw Error(Errc::kIo, "connect " + to.to_string() + ": " + std::strerror(err ? err : errno));
  }
  fcntl(fd, F_SETFL, flags);
  int one = 1;
  setsockopt(fd, IPPROTO_TCP, TCP_NODELAY, &one, sizeof one);
  return s;
}

void send_frame(Socket& s, std::string_view payload) {
  std::string data = frame(payload);
  std::size_t sent = 0;
  while (sent < data.size()) {
    ssize_t k = ::send(s.fd(), data.data() + sent, data.size() - sent, MSG_NOSIGNAL);
    if (k < 0) {
      if (errno == EINTR) continue;
      throw Error(Errc::kIo, std::string("send: ") + std::strerror(errno));
    }
    sent += static_cast<std::size_t>(k);
  }
}

std::optional<std::string> recv_frame(Socket& s, std::chrono::milliseconds timeout) {
  if (!s.valid()) throw Error(Errc::kIo, "socket closed");
  auto deadline = Clock::now() + timeout;
  unsigned char hdr[4];
  if (!read_exact(s.fd(), reinterpret_cast<char*>(hdr), 4, deadline, true)) return std::nullopt;
  std::uint32_t n = (std::uint32_t{hdr[0]} << 24) | (std::uint32_t{hdr[1]} << 16) | (std::uint32_t{hdr[2]} << 8) | hdr[3];
  if (n > kMaxFrameBytes) throw Error(Errc::kProtocol, "frame too large");
  std::string out(n, '\0');
  // The body follows the header promptly; allow a fresh window for it.
  if (n) read_exact(s.fd(), out.data(), n, Clock::now() + std::max(timeout, std::chrono::milliseconds(1000)), false);
  return out;
}

Listener Listener::bind(const HostPort& at) {
  sockaddr_in addr = resolve(at);
  int fd = ::socket(AF_INET, SOCK_STREAM | SOCK_CLOEXEC, 0);
  if (fd < 0) throw Error(Errc::kBindFailure, std::string("socket: ") + std::strerror(errno));
  Listener l;
  l.sock_ = Socket(fd);
  if (::bind(fd, reinterpret_cast<sockaddr*>(&addr), sizeof addr) < 0)
    throw Error(Errc::kBindFailure, at.to_string() + ": " + std::strerror(errno));
  if (::listen(fd, 128) < 0) throw Error(Errc::kBindFailure, at.to_string() + ": " + std::strerror(errno));
  socklen_t len = sizeof addr;
  getsockname(fd, reinterpret_cast<sockaddr*>(&addr), &len);
  l.address_ = HostPort{at.host.empty() ? "127.0.0.1" : at.host, ntohs(addr.sin_port)};
  return l;
}

std::optional<Socket> Listener::accept(std::chrono::milliseconds timeout) {
  if (!sock_.valid()) return std::nullopt;
  pollfd p{sock_.fd(), POLLIN, 0};
  int r = ::poll(&p, 1, static_cast<int>(timeout.count()));
  if (r <= 0 || !(p.revents & POLLIN)) return std::nullopt;
  int fd = ::accept4(sock_.fd(), nullptr, nullptr, SOCK_CLOEXEC);
  if (fd < 0) return std::nullopt;
  int one = 1;
  setsockopt(fd, IPPROTO_TCP, TCP_NODELAY, &one, sizeof one);
  return Socket(fd);
}

Channel::Channel(HostPort to, std::string sender_id, std::chrono::milliseconds timeout)
    : to_(std::move(to)), sender_(std::move(sender_id)), timeout_(timeout) {}

void Channel::close() {
  std::lock_guard lock(mu_);
  sock_.close();
}

WireMessage Channel::exchange(const WireMessage& req) {
  if (!sock_.valid()) sock_ = connect_tcp(to_, timeout_);
  send_frame(sock_, encode_message(req));
  while (true) {
    auto text = recv_frame(sock_, timeout_);
    if (!text) {
      sock_.close();
      throw Error(Errc::kTimeout, std::string(msg_type_name(req.type)) + " to " + to_.to_string() + " timed out");
    }
    WireMessage reply = decode_message(*text);
    // A late reply to an earlier, timed-out request is skipped.
    if (reply.correlation_id == req.correlation_id) return reply;
  }
}

WireMessage Channel::call(MsgType type, nlohmann::json body, std::string correlation_id) {
  std::lock_guard lock(mu_);
  WireMessage req;
  req.type = type;
  req.sender_id = sender_;
  req.correlation_id = correlation_id.empty() ? sender_ + "-" + std::to_string(++seq_) : std::move(correlation_id);
  req.body = std::move(body);
  WireMessage reply;
  bool fresh = !sock_.valid();
  try {
    reply = exchange(req);
  } catch (const Error& e) {
    sock_.close();
    if (fresh || e.code() != Errc::kIo) throw;
    reply = exchange(req);
  }
  check_reply(req, reply);
  return reply;
}

FrameServer::FrameServer(HostPort bind, std::string sender_id, Handler handler)
    : bind_(std::move(bind)), sender_(std::move(sender_id)), handler_(std::move(handler)) {}

FrameServer::~FrameServer() { stop(); }

void FrameServer::start() {
  listener_ = Listener::bind(bind_);
  stop_ = false;
  acceptor_ = std::thread([this] { accept_loop(); });
}

void FrameServer::accept_loop() {
  while (!stop_) {
    auto s = listener_.accept(std::chrono::milliseconds(50));
    reap_finished();
    if (!s) continue;
    std::lock_guard lock(conns_mu_);
    if (stop_) break;
    auto c = std::make_unique<Conn>();
    c->sock = std::move(*s);
    Conn* raw = c.get();
    c->thread = std::thread([this, raw] { serve(raw); });
    conns_.push_back(std::move(c));
  }
}

void FrameServer::reap_finished() {
  std::list<std::unique_ptr<Conn>> done;
  {
    std::lock_guard lock(conns_mu_);
    for (auto it = conns_.begin(); it != conns_.end();) {
      if ((*it)->finished) {
        done.push_back(std::move(*it));
        it = conns_.erase(it);
      } else {
        ++it;
      }
    }
  }
  for (auto& c : done)
    if (c->thread.joinable()) c->thread.join();
}

void FrameServer::serve(Conn* c) {
  try {
    while (!stop_) {
      auto text = recv_frame(c->sock, std::chrono::milliseconds(200));
      if (!text) continue;
      WireMessage reply;
      WireMessage req;
      try {
        req = decode_message(*text);
        if (!is_request(req.type)) throw Error(Errc::kProtocol, "not a request");
        reply = handler_(req);
      } catch (const Error& e) {
        reply = make_error(req, e.code(), e.what(), sender_);
      } catch (const std::exception& e) {
        reply = make_error(req, Errc::kProtocol, e.what(), sender_);
      }
      send_frame(c->sock, encode_message(reply));
    }
  } catch (const Error&) {
  }
  c->finished = true;
}

void FrameServer::stop() {
  if (stop_.exchange(true)) return;
  listener_.close();
  if (acceptor_.joinable()) acceptor_.join();
  std::list<std::unique_ptr<Conn>> all;
  {
    std::lock_guard lock(conns_mu_);
    all.swap(conns_);
  }
  for (auto& c : all) c->sock.shutdown();
  for (auto& c : all)
    if (c->thread.joinable()) c->thread.join();
}

}  // namespace deskgrid
