#pragma once

#include <atomic>
#include <chrono>
#include <functional>
#include <list>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <string_view>
#include <thread>

#include "deskgrid/wire.hpp"

namespace deskgrid {

struct HostPort {
  std::string host = "127.0.0.1";
  int port = 0;

  std::string to_string() const { return host + ":" + std::to_string(port); }
  friend bool operator==(const HostPort&, const HostPort&) = default;
};

/// "host:port"; throws InvalidConfig.
HostPort parse_host_port(std::string_view s);

/// Owning TCP socket handle.
class Socket {
 public:
  Socket() = default;
  explicit Socket(int fd) : fd_(fd) {}
  ~Socket();
  Socket(Socket&& o) noexcept : fd_(o.fd_.exchange(-1)) {}
  Socket& operator=(Socket&& o) noexcept;
  Socket(const Socket&) = delete;
  Socket& operator=(const Socket&) = delete;

  int fd() const { return fd_; }
  bool valid() const { return fd_ >= 0; }
  /// Wakes any thread blocked on the socket; the handle stays owned.
  void shutdown();
  void close();

 private:
  std::atomic<int> fd_{-1};
};

/// Throws Io (refused, unreachable) or Timeout.
Socket connect_tcp(const HostPort& to, std::chrono::milliseconds timeout);

void send_frame(Socket& s, std::string_view payload);
/// Returns nullopt when nothing arrives before the timeout. Throws Io when the
/// peer closes or the stream breaks mid-frame.
std::optional<std::string> recv_frame(Socket& s, std::chrono::milliseconds timeout);

class Listener {
 public:
  /// Port 0 picks an ephemeral port. Throws BindFailure.
  static Listener bind(const HostPort& at);
  Listener() = default;
  Listener(Listener&&) = default;
  Listener& operator=(Listener&&) = default;

  HostPort address() const { return address_; }
  std::optional<Socket> accept(std::chrono::milliseconds timeout);
  void close() { sock_.close(); }

 private:
  Socket sock_;
  HostPort address_;
};

/// One request at a time over a persistent connection.
class Channel {
 public:
  Channel(HostPort to, std::string sender_id, std::chrono::milliseconds timeout);

  /// Sends a request and returns its checked reply. Reconnects once if the
  /// cached connection turns out to be closed.
  WireMessage call(MsgType type, nlohmann::json body, std::string correlation_id = {});
  const HostPort& peer() const { return to_; }
  void close();
  /// Breaks an in-flight call from another thread without waiting for it.
  void abort() { sock_.shutdown(); }

 private:
  WireMessage exchange(const WireMessage& req);
  HostPort to_;
  std::string sender_;
  std::chrono::milliseconds timeout_;
  std::mutex mu_;
  Socket sock_;
  std::uint64_t seq_ = 0;
};

/// Accept loop plus one thread per connection; each request frame is passed
/// to the handler and its reply written back in order.
class FrameServer {
 public:
  using Handler = std::function<WireMessage(const WireMessage&)>;

  FrameServer(HostPort bind, std::string sender_id, Handler handler);
  ~FrameServer();

  void start();
  /// Closes the listener and every open connection, then joins.
  void stop();
  HostPort address() const { return listener_.address(); }

 private:
  struct Conn {
    Socket sock;
    std::thread thread;
    std::atomic<bool> finished{false};
  };
  void accept_loop();
  void serve(Conn* c);
  void reap_finished();

  HostPort bind_;
  std::string sender_;
  Handler handler_;
  Listener listener_;
  std::atomic<bool> stop_{false};
  std::thread acceptor_;
  std::mutex conns_mu_;
  std::list<std::unique_ptr<Conn>> conns_;
};

}  // namespace deskgrid
