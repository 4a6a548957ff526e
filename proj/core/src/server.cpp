#include "polyswarm/server.hpp"

#include <boost/asio/dispatch.hpp>
#include <boost/asio/ip/tcp.hpp>
#include <boost/asio/post.hpp>
#include <boost/asio/strand.hpp>
#include <boost/beast/core.hpp>
#include <boost/beast/http.hpp>
#include <boost/beast/websocket.hpp>

#include <algorithm>

#include "polyswarm/errors.hpp"
#include "polyswarm/log.hpp"

namespace polyswarm {

namespace beast = boost::beast;
namespace http = beast::http;
namespace websocket = beast::websocket;
namespace net = boost::asio;
using tcp = net::ip::tcp;

namespace {

constexpr std::array<std::string_view, 7> kEventKindNames{"snapshot_batch", "consensus",  "signal",    "trade",
                                                           "pnl_update",     "log_line",   "risk_state"};

}  // namespace

std::string_view to_string(EventKind k) { return kEventKindNames.at(static_cast<std::size_t>(k)); }

EventKind event_kind_from_string(std::string_view s) {
  for (std::size_t i = 0; i < kEventKindNames.size(); ++i) {
    if (kEventKindNames[i] == s) return static_cast<EventKind>(i);
  }
  throw ValidationError("unknown event kind: " + std::string(s));
}

std::string EventFrame::to_wire() const {
  std::string out;
  const std::string_view body = payload ? std::string_view(*payload) : std::string_view("null");
  out.reserve(body.size() + 96);
  out += "{\"seq\":";
  out += std::to_string(seq);
  out += ",\"event_id\":";
  out += std::to_string(event_id);
  out += ",\"kind\":\"";
  out += to_string(kind);
  out += "\",\"ts\":";
  out += std::to_string(ts);
  out += ",\"payload\":";
  out += body;
  out += '}';
  return out;
}

EventFrame parse_event_frame(const std::string& wire) {
  const auto j = Json::parse(wire);
  EventFrame f;
  f.seq = j.at("seq").get<std::uint64_t>();
  f.event_id = j.at("event_id").get<std::uint64_t>();
  f.kind = event_kind_from_string(j.at("kind").get<std::string>());
  f.ts = j.at("ts").get<TimestampMs>();
  f.payload = std::make_shared<const std::string>(j.at("payload").dump());
  return f;
}

Json payload_json(const EventFrame& frame) { return frame.payload ? Json::parse(*frame.payload) : Json(); }

// ---------------------------------------------------------------- subscription

Subscription::Subscription(std::size_t bound, std::function<void()> notify)
    : bound_(std::max<std::size_t>(bound, 1)), notify_(std::move(notify)) {}

bool Subscription::offer(std::uint64_t event_id, EventKind kind, TimestampMs ts,
                         std::shared_ptr<const std::string> payload) {
  {
    std::lock_guard lock(mu_);
    if (dropped_) return false;
    if (queue_.size() >= bound_) {
      dropped_ = true;
    } else {
      queue_.push_back(EventFrame{next_seq_++, event_id, kind, ts, std::move(payload)});
    }
  }
  cv_.notify_all();
  if (notify_) notify_();
  std::lock_guard lock(mu_);
  return !dropped_;
}

void Subscription::drop() {
  {
    std::lock_guard lock(mu_);
    dropped_ = true;
  }
  cv_.notify_all();
  if (notify_) notify_();
}

std::optional<EventFrame> Subscription::pop() {
  std::lock_guard lock(mu_);
  if (queue_.empty()) return std::nullopt;
  auto f = std::move(queue_.front());
  queue_.pop_front();
  return f;
}

std::optional<EventFrame> Subscription::wait_pop(std::chrono::milliseconds timeout) {
  std::unique_lock lock(mu_);
  cv_.wait_for(lock, timeout, [&] { return !queue_.empty() || dropped_; });
  if (queue_.empty()) return std::nullopt;
  auto f = std::move(queue_.front());
  queue_.pop_front();
  return f;
}

bool Subscription::dropped() const {
  std::lock_guard lock(mu_);
  return dropped_;
}

std::size_t Subscription::pending() const {
  std::lock_guard lock(mu_);
  return queue_.size();
}

// ---------------------------------------------------------------- broadcaster

void Broadcaster::set_snapshot_source(SnapshotFn fn) {
  std::lock_guard lock(mu_);
  snapshot_ = std::move(fn);
}

std::shared_ptr<Subscription> Broadcaster::subscribe(std::size_t bound, std::function<void()> notify) {
  auto sub = std::make_shared<Subscription>(bound, std::move(notify));
  std::lock_guard lock(mu_);
  Json snap = snapshot_ ? snapshot_() : Json::object();
  if (!snap.is_object()) snap = Json{{"state", snap}};
  snap["initial"] = true;
  sub->offer(next_event_id_ - 1, EventKind::snapshot_batch, clock_.now(),
             std::make_shared<const std::string>(snap.dump()));
  subs_.push_back(sub);
  return sub;
}

void Broadcaster::unsubscribe(const std::shared_ptr<Subscription>& sub) {
  std::lock_guard lock(mu_);
  std::erase(subs_, sub);
}

std::uint64_t Broadcaster::publish(EventKind kind, const Json& payload) {
  auto text = std::make_shared<const std::string>(payload.dump());
  const TimestampMs ts = clock_.now();
  std::lock_guard lock(mu_);
  const std::uint64_t id = next_event_id_++;
  for (auto it = subs_.begin(); it != subs_.end();) {
    if ((*it)->offer(id, kind, ts, text)) {
      ++it;
    } else {
      dropped_.fetch_add(1);
      it = subs_.erase(it);
    }
  }
  return id;
}

std::uint64_t Broadcaster::last_event_id() const {
  std::lock_guard lock(mu_);
  return next_event_id_ - 1;
}

std::size_t Broadcaster::client_count() const {
  std::lock_guard lock(mu_);
  return subs_.size();
}

// ---------------------------------------------------------------- auth + routing

AuthResult auth_check(const ApiTokens& tokens, bool open_read, bool is_read, std::string_view authorization_header,
                      std::string_view query_token) {
  std::string_view token = query_token;
  constexpr std::string_view kBearer = "Bearer ";
  if (authorization_header.starts_with(kBearer)) token = authorization_header.substr(kBearer.size());
  if (!token.empty()) {
    auto it = tokens.token_to_identity.find(std::string(token));
    if (it != tokens.token_to_identity.end()) return {true, it->second};
  }
  if (is_read && open_read) return {true, "anonymous"};
  return {false, {}};
}

namespace {

std::string url_decode(std::string_view s) {
  std::string out;
  for (std::size_t i = 0; i < s.size(); ++i) {
    if (s[i] == '%' && i + 2 < s.size()) {
      out.push_back(static_cast<char>(std::stoi(std::string(s.substr(i + 1, 2)), nullptr, 16)));
      i += 2;
    } else {
      out.push_back(s[i] == '+' ? ' ' : s[i]);
    }
  }
  return out;
}

struct Target {
  std::string path;
  std::string token;
};

Target split_target(std::string_view target) {
  Target t;
  const auto q = target.find('?');
  t.path = std::string(target.substr(0, q));
  if (q == std::string_view::npos) return t;
  std::string_view query = target.substr(q + 1);
  while (!query.empty()) {
    const auto amp = query.find('&');
    const auto pair = query.substr(0, amp);
    if (pair.starts_with("token=")) t.token = url_decode(pair.substr(6));
    if (amp == std::string_view::npos) break;
    query = query.substr(amp + 1);
  }
  return t;
}

HttpReply error_reply(int status, std::string_view reason) {
  return {status, Json{{"error", reason}}.dump()};
}

}  // namespace

HttpReply handle_rest(ControlSurface& surface, const ServerConfig& config, const Clock& clock,
                      std::string_view method, std::string_view target, std::string_view authorization,
                      const std::string& body) {
  const auto t = split_target(target);
  if (method == "OPTIONS") return {204, ""};
  if (t.path == "/health") {
    if (method != "GET") return error_reply(405, "method not allowed");
    return {200, Json{{"status", "ok"}}.dump()};
  }
  if (t.path == "/control") {
    if (method != "POST") return error_reply(405, "method not allowed");
    const auto auth = auth_check(config.tokens, config.open_read, false, authorization, t.token);
    if (!auth.ok) return error_reply(401, "unauthorized");
    Json parsed;
    try {
      parsed = Json::parse(body);
    } catch (const std::exception& e) {
      return error_reply(400, std::string("malformed JSON: ") + e.what());
    }
    try {
      const auto command = parse_control_command(parsed, auth.identity, clock.now());
      return {200, surface.apply_command(command).dump()};
    } catch (const ValidationError& e) {
      return error_reply(400, e.what());
    } catch (const StorageError& e) {
      return error_reply(503, e.what());
    }
  }
  if (t.path.size() > 1 && t.path[0] == '/') {
    const std::string_view resource = std::string_view(t.path).substr(1);
    if (resource.find('/') == std::string_view::npos) {
      auto view = surface.view(resource);
      if (view) {
        if (method != "GET") return error_reply(405, "method not allowed");
        const auto auth = auth_check(config.tokens, config.open_read, true, authorization, t.token);
        if (!auth.ok) return error_reply(401, "unauthorized");
        return {200, view->dump()};
      }
    }
  }
  return error_reply(404, "not found");
}

// ---------------------------------------------------------------- sockets

struct Server::Impl {
  Impl(ServerConfig c, ControlSurface& s, Broadcaster& b, const Clock& cl)
      : config(std::move(c)), surface(s), broadcaster(b), clock(cl) {}

  void do_accept();

  ServerConfig config;
  ControlSurface& surface;
  Broadcaster& broadcaster;
  const Clock& clock;
  net::io_context ioc;
  std::optional<tcp::acceptor> acceptor;
  std::vector<std::thread> threads;
  unsigned short bound_port = 0;
  bool running = false;
};

namespace {

std::string_view sv(beast::string_view s) { return {s.data(), s.size()}; }

void add_common_headers(http::response<http::string_body>& res) {
  res.set(http::field::server, "polyswarm");
  res.set(http::field::content_type, "application/json");
  res.set(http::field::access_control_allow_origin, "*");
  res.set(http::field::access_control_allow_headers, "Authorization, Content-Type");
  res.set(http::field::access_control_allow_methods, "GET, POST, OPTIONS");
}

class WsSession : public std::enable_shared_from_this<WsSession> {
 public:
  WsSession(tcp::socket&& socket, Server::Impl& srv) : ws_(std::move(socket)), srv_(srv) {}

  ~WsSession() {
    if (sub_) srv_.broadcaster.unsubscribe(sub_);
  }

  void run(http::request<http::string_body> req) {
    ws_.set_option(websocket::stream_base::timeout::suggested(beast::role_type::server));
    ws_.async_accept(req, beast::bind_front_handler(&WsSession::on_accept, shared_from_this()));
  }

 private:
  void on_accept(beast::error_code ec) {
    if (ec) return;
    std::weak_ptr<WsSession> weak = weak_from_this();
    auto exec = ws_.get_executor();
    sub_ = srv_.broadcaster.subscribe(srv_.config.ws_buffer_frames, [weak, exec] {
      net::post(exec, [weak] {
        if (auto self = weak.lock()) self->pump();
      });
    });
    pump();
    do_read();
  }

  void pump() {
    if (writing_ || closed_ || !sub_) return;
    if (auto frame = sub_->pop()) {
      writing_ = true;
      out_ = frame->to_wire();
      ws_.text(true);
      ws_.async_write(net::buffer(out_), beast::bind_front_handler(&WsSession::on_write, shared_from_this()));
      return;
    }
    if (sub_->dropped()) {
      closed_ = true;
      ws_.async_close(websocket::close_reason(websocket::close_code::policy_error, "slow consumer"),
                      [self = shared_from_this()](beast::error_code) {});
    }
  }

  void on_write(beast::error_code ec, std::size_t) {
    writing_ = false;
    if (ec) {
      closed_ = true;
      return;
    }
    if (sub_->dropped() && !closed_) {
      closed_ = true;
      ws_.async_close(websocket::close_reason(websocket::close_code::policy_error, "slow consumer"),
                      [self = shared_from_this()](beast::error_code) {});
      return;
    }
    pump();
  }

  void do_read() {
    ws_.async_read(in_, beast::bind_front_handler(&WsSession::on_read, shared_from_this()));
  }

  void on_read(beast::error_code ec, std::size_t) {
    if (ec) {
      closed_ = true;
      return;
    }
    in_.consume(in_.size());
    do_read();
  }

  websocket::stream<beast::tcp_stream> ws_;
  Server::Impl& srv_;
  std::shared_ptr<Subscription> sub_;
  beast::flat_buffer in_;
  std::string out_;
  bool writing_ = false;
  bool closed_ = false;
};

class HttpSession : public std::enable_shared_from_this<HttpSession> {
 public:
  HttpSession(tcp::socket&& socket, Server::Impl& srv) : stream_(std::move(socket)), srv_(srv) {}

  void run() {
    net::dispatch(stream_.get_executor(), beast::bind_front_handler(&HttpSession::do_read, shared_from_this()));
  }

 private:
  void do_read() {
    req_ = {};
    stream_.expires_after(std::chrono::seconds(30));
    http::async_read(stream_, buffer_, req_, beast::bind_front_handler(&HttpSession::on_read, shared_from_this()));
  }

  void on_read(beast::error_code ec, std::size_t) {
    if (ec == http::error::end_of_stream) return do_close();
    if (ec) return;

    const auto target = split_target(sv(req_.target()));
    if (websocket::is_upgrade(req_)) {
      if (target.path != "/ws") return respond(error_reply(404, "not found"));
      const auto auth = auth_check(srv_.config.tokens, srv_.config.open_read, true,
                                   sv(req_[http::field::authorization]), target.token);
      if (!auth.ok) return respond(error_reply(401, "unauthorized"));
      stream_.expires_never();
      std::make_shared<WsSession>(stream_.release_socket(), srv_)->run(std::move(req_));
      return;
    }

    HttpReply reply;
    try {
      reply = handle_rest(srv_.surface, srv_.config, srv_.clock, sv(req_.method_string()), sv(req_.target()),
                          sv(req_[http::field::authorization]), req_.body());
    } catch (const std::exception& e) {
      Log::warn(std::string("request failed: ") + e.what());
      reply = error_reply(500, "internal error");
    }
    respond(std::move(reply));
  }

  void respond(HttpReply reply) {
    res_ = std::make_shared<http::response<http::string_body>>(static_cast<http::status>(reply.status),
                                                               req_.version());
    add_common_headers(*res_);
    res_->body() = std::move(reply.body);
    res_->keep_alive(req_.keep_alive());
    res_->prepare_payload();
    http::async_write(stream_, *res_,
                      beast::bind_front_handler(&HttpSession::on_write, shared_from_this(), res_->keep_alive()));
  }

  void on_write(bool keep_alive, beast::error_code ec, std::size_t) {
    if (ec) return;
    if (!keep_alive) return do_close();
    do_read();
  }

  void do_close() {
    beast::error_code ec;
    stream_.socket().shutdown(tcp::socket::shutdown_send, ec);
  }

  beast::tcp_stream stream_;
  Server::Impl& srv_;
  beast::flat_buffer buffer_;
  http::request<http::string_body> req_;
  std::shared_ptr<http::response<http::string_body>> res_;
};

tcp::endpoint parse_listen_addr(const std::string& addr) {
  const auto colon = addr.rfind(':');
  if (colon == std::string::npos) throw ConfigError("LISTEN_ADDR must be host:port");
  std::string host = addr.substr(0, colon);
  if (host.empty() || host == "localhost") host = "127.0.0.1";
  if (host.size() > 2 && host.front() == '[' && host.back() == ']') host = host.substr(1, host.size() - 2);
  beast::error_code ec;
  const auto ip = net::ip::make_address(host, ec);
  if (ec) throw ConfigError("LISTEN_ADDR: bad host " + host);
  int port = 0;
  try {
    port = std::stoi(addr.substr(colon + 1));
  } catch (const std::exception&) {
    throw ConfigError("LISTEN_ADDR: bad port");
  }
  if (port < 0 || port > 65535) throw ConfigError("LISTEN_ADDR: bad port");
  return {ip, static_cast<unsigned short>(port)};
}

}  // namespace

void Server::Impl::do_accept() {
  acceptor->async_accept(net::make_strand(ioc), [this](beast::error_code ec, tcp::socket socket) {
    if (ec) {
      if (ec == net::error::operation_aborted) return;
    } else {
      std::make_shared<HttpSession>(std::move(socket), *this)->run();
    }
    if (acceptor && acceptor->is_open()) do_accept();
  });
}

Server::Server(ServerConfig config, ControlSurface& surface, Broadcaster& broadcaster, const Clock& clock)
    : impl_(std::make_unique<Impl>(std::move(config), surface, broadcaster, clock)) {}

Server::~Server() { stop(); }

void Server::start() {
  if (impl_->running) return;
  const auto endpoint = parse_listen_addr(impl_->config.listen_addr);
  auto& acc = impl_->acceptor.emplace(impl_->ioc);
  beast::error_code ec;
  acc.open(endpoint.protocol(), ec);
  if (!ec) acc.set_option(net::socket_base::reuse_address(true), ec);
  if (!ec) acc.bind(endpoint, ec);
  if (!ec) acc.listen(net::socket_base::max_listen_connections, ec);
  if (ec) throw ConfigError("cannot listen on " + impl_->config.listen_addr + ": " + ec.message());
  impl_->bound_port = acc.local_endpoint().port();
  impl_->running = true;
  impl_->do_accept();
  const std::size_t n = std::max<std::size_t>(impl_->config.io_threads, 1);
  for (std::size_t i = 0; i < n; ++i) impl_->threads.emplace_back([this] { impl_->ioc.run(); });
}

void Server::stop() {
  if (!impl_ || !impl_->running) return;
  impl_->running = false;
  impl_->ioc.stop();
  for (auto& t : impl_->threads) t.join();
  impl_->threads.clear();
  beast::error_code ec;
  impl_->acceptor->close(ec);
}

unsigned short Server::port() const { return impl_->bound_port; }

}  // namespace polyswarm
