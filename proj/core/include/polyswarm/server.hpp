#pragma once

#include <atomic>
#include <chrono>
#include <condition_variable>
#include <cstdint>
#include <deque>
#include <functional>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <string_view>
#include <thread>
#include <vector>

#include "polyswarm/clock.hpp"
#include "polyswarm/config.hpp"
#include "polyswarm/control.hpp"
#include "polyswarm/json_codec.hpp"

namespace polyswarm {

enum class EventKind { snapshot_batch, consensus, signal, trade, pnl_update, log_line, risk_state };

std::string_view to_string(EventKind k);
EventKind event_kind_from_string(std::string_view s);

struct EventFrame {
  std::uint64_t seq = 0;       // per connection, starts at 1
  std::uint64_t event_id = 0;  // global; the initial snapshot carries the last id it covers
  EventKind kind = EventKind::log_line;
  TimestampMs ts = 0;
  std::shared_ptr<const std::string> payload;  // serialized once, shared by every client

  // {"seq","event_id","kind","ts","payload"}
  std::string to_wire() const;
};

EventFrame parse_event_frame(const std::string& wire);
Json payload_json(const EventFrame& frame);

// One client's bounded frame queue. When a publish finds the queue full the
// subscription is dropped instead of blocking the publisher.
class Subscription {
 public:
  Subscription(std::size_t bound, std::function<void()> notify);

  std::optional<EventFrame> pop();
  std::optional<EventFrame> wait_pop(std::chrono::milliseconds timeout);
  bool dropped() const;
  std::size_t pending() const;

 private:
  friend class Broadcaster;
  bool offer(std::uint64_t event_id, EventKind kind, TimestampMs ts, std::shared_ptr<const std::string> payload);
  void drop();

  const std::size_t bound_;
  std::function<void()> notify_;
  mutable std::mutex mu_;
  std::condition_variable cv_;
  std::deque<EventFrame> queue_;
  std::uint64_t next_seq_ = 1;
  bool dropped_ = false;
};

class Broadcaster {
 public:
  using SnapshotFn = std::function<Json()>;

  explicit Broadcaster(const Clock& clock) : clock_(clock) {}

  // Source of the first frame every new subscriber receives.
  void set_snapshot_source(SnapshotFn fn);

  // The first frame is a snapshot_batch with payload.initial = true; every
  // later frame is the live tail, so nothing falls between the two.
  std::shared_ptr<Subscription> subscribe(std::size_t bound, std::function<void()> notify = {});
  void unsubscribe(const std::shared_ptr<Subscription>& sub);

  std::uint64_t publish(EventKind kind, const Json& payload);
  std::uint64_t last_event_id() const;
  std::size_t client_count() const;
  std::uint64_t dropped_clients() const { return dropped_.load(); }

 private:
  const Clock& clock_;
  mutable std::mutex mu_;
  SnapshotFn snapshot_;
  std::vector<std::shared_ptr<Subscription>> subs_;
  std::uint64_t next_event_id_ = 1;
  std::atomic<std::uint64_t> dropped_{0};
};

// What the HTTP layer needs from the running system.
class ControlSurface {
 public:
  virtual ~ControlSurface() = default;
  // markets, consensus, signals, trades, pnl, agents, risk. Unknown names
  // return nullopt.
  virtual std::optional<Json> view(std::string_view resource) const = 0;
  // Persists, then applies. Throws ValidationError for commands that are
  // invalid in the current state. Returns the resulting risk view.
  virtual Json apply_command(const ControlCommand& command) = 0;
  virtual Json snapshot() const = 0;
};

struct ServerConfig {
  std::string listen_addr = "127.0.0.1:8080";
  ApiTokens tokens;
  bool open_read = false;
  std::size_t ws_buffer_frames = 1024;
  std::size_t io_threads = 2;
};

struct AuthResult {
  bool ok = false;
  std::string identity;
};

// Bearer token in the Authorization header, or a `token` query parameter
// (browsers cannot set headers on WebSocket upgrades). Reads pass without a
// token when open_read is set; writes always need one.
AuthResult auth_check(const ApiTokens& tokens, bool open_read, bool is_read, std::string_view authorization_header,
                      std::string_view query_token);

struct HttpReply {
  int status = 200;
  std::string body;
};

// Routing and status mapping, independent of the socket layer.
HttpReply handle_rest(ControlSurface& surface, const ServerConfig& config, const Clock& clock,
                      std::string_view method, std::string_view target, std::string_view authorization,
                      const std::string& body);

// REST and /ws on one port.
class Server {
 public:
  Server(ServerConfig config, ControlSurface& surface, Broadcaster& broadcaster, const Clock& clock);
  ~Server();
  Server(const Server&) = delete;
  Server& operator=(const Server&) = delete;

  // Binds and starts the I/O threads. Port 0 picks a free port.
  void start();
  void stop();
  unsigned short port() const;

  struct Impl;

 private:
  std::unique_ptr<Impl> impl_;
};

}  // namespace polyswarm
