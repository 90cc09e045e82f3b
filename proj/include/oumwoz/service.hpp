#pragma once

// HTTP + WebSocket front end over ServiceCore. One io_context on one thread,
// so every session's messages are handled in arrival order.

#include <deque>
#include <functional>
#include <iostream>
#include <memory>
#include <string>
#include <string_view>

#include <boost/asio/ip/tcp.hpp>
#include <boost/asio/signal_set.hpp>
#include <boost/asio/strand.hpp>
#include <boost/beast/core.hpp>
#include <boost/beast/http.hpp>
#include <boost/beast/websocket.hpp>

#include "oumwoz/service_core.hpp"

namespace oumwoz {

namespace net {

namespace beast = boost::beast;
namespace http = boost::beast::http;
namespace websocket = boost::beast::websocket;
namespace asio = boost::asio;
using tcp = boost::asio::ip::tcp;

struct Target {
  std::vector<std::string> segments;
  std::map<std::string, std::string> query;
};

inline std::string url_decode(std::string_view s) {
  std::string out;
  for (std::size_t i = 0; i < s.size(); ++i) {
    if (s[i] == '%' && i + 2 < s.size() && std::isxdigit(static_cast<unsigned char>(s[i + 1])) &&
        std::isxdigit(static_cast<unsigned char>(s[i + 2]))) {
      out += static_cast<char>(std::stoi(std::string(s.substr(i + 1, 2)), nullptr, 16));
      i += 2;
    } else {
      out += s[i] == '+' ? ' ' : s[i];
    }
  }
  return out;
}

inline Target parse_target(std::string_view target) {
  Target t;
  auto q = target.find('?');
  auto path = target.substr(0, q);
  std::size_t pos = 0;
  while (pos < path.size()) {
    auto slash = path.find('/', pos);
    auto seg = path.substr(pos, slash == std::string_view::npos ? std::string_view::npos : slash - pos);
    if (!seg.empty()) t.segments.push_back(url_decode(seg));
    if (slash == std::string_view::npos) break;
    pos = slash + 1;
  }
  if (q != std::string_view::npos) {
    auto qs = target.substr(q + 1);
    pos = 0;
    while (pos <= qs.size()) {
      auto amp = qs.find('&', pos);
      auto kv = qs.substr(pos, amp == std::string_view::npos ? std::string_view::npos : amp - pos);
      auto eq = kv.find('=');
      if (!kv.empty()) t.query[url_decode(kv.substr(0, eq))] = eq == std::string_view::npos ? "" : url_decode(kv.substr(eq + 1));
      if (amp == std::string_view::npos) break;
      pos = amp + 1;
    }
  }
  return t;
}

class ChatSession : public ChannelSink, public std::enable_shared_from_this<ChatSession> {
 public:
  ChatSession(tcp::socket&& socket, ServiceCore& core, std::string session_id, Role role, std::string token)
      : ws_(std::move(socket)), core_(core), session_id_(std::move(session_id)), role_(role), token_(std::move(token)) {}

  void start(http::request<http::string_body> req) {
    ws_.set_option(websocket::stream_base::timeout::suggested(beast::role_type::server));
    ws_.async_accept(req, [self = shared_from_this()](beast::error_code ec) { self->on_accept(ec); });
  }

  void send(const std::string& frame) override {
    queue_.push_back(frame);
    if (queue_.size() == 1 && !writing_) write_next();
  }

  void supersede() override {
    superseded_ = true;
    if (queue_.empty() && !writing_) close();
  }

 private:
  websocket::stream<beast::tcp_stream> ws_;
  ServiceCore& core_;
  std::string session_id_;
  Role role_;
  std::string token_;
  beast::flat_buffer buffer_;
  std::deque<std::string> queue_;
  bool writing_ = false;
  bool superseded_ = false;
  bool closed_ = false;

  void on_accept(beast::error_code ec) {
    if (ec) return;
    try {
      core_.connect(session_id_, role_, token_, shared_from_this());
    } catch (const Error& e) {
      ws_.async_close(websocket::close_reason(websocket::close_code::policy_error, std::string(to_string(e.code()))),
                      [self = shared_from_this()](beast::error_code) {});
      return;
    }
    read();
  }

  void read() {
    ws_.async_read(buffer_, [self = shared_from_this()](beast::error_code ec, std::size_t) {
      if (ec) {
        self->closed_ = true;
        self->core_.disconnect(self->session_id_, self->role_, self.get());
        return;
      }
      std::string text = beast::buffers_to_string(self->buffer_.data());
      self->buffer_.consume(self->buffer_.size());
      if (!self->superseded_) self->core_.on_frame(self->session_id_, self->role_, text);
      self->read();
    });
  }

  void write_next() {
    if (closed_) {
      queue_.clear();
      return;
    }
    writing_ = true;
    ws_.text(true);
    ws_.async_write(asio::buffer(queue_.front()), [self = shared_from_this()](beast::error_code ec, std::size_t) {
      self->writing_ = false;
      if (ec) {
        self->queue_.clear();
        return;
      }
      self->queue_.pop_front();
      if (!self->queue_.empty()) {
        self->write_next();
      } else if (self->superseded_) {
        self->close();
      }
    });
  }

  void close() {
    if (closed_) return;
    closed_ = true;
    ws_.async_close(websocket::close_reason(websocket::close_code::normal, "superseded"),
                    [self = shared_from_this()](beast::error_code) {});
  }
};

class HttpSession : public std::enable_shared_from_this<HttpSession> {
 public:
  HttpSession(tcp::socket&& socket, ServiceCore& core) : stream_(std::move(socket)), core_(core) {}

  void start() { read(); }

 private:
  beast::tcp_stream stream_;
  beast::flat_buffer buffer_;
  http::request<http::string_body> req_;
  ServiceCore& core_;

  void read() {
    req_ = {};
    stream_.expires_after(std::chrono::seconds(60));
    http::async_read(stream_, buffer_, req_, [self = shared_from_this()](beast::error_code ec, std::size_t) {
      if (ec) return;
      self->on_request();
    });
  }

  void on_request() {
    auto target = parse_target(std::string_view(req_.target().data(), req_.target().size()));
    if (websocket::is_upgrade(req_)) {
      const auto& seg = target.segments;
      if (seg.size() != 3 || seg[0] != "sessions" || seg[2] != "chat") return respond(404, R"({"error":"NotFound"})");
      try {
        auto role = parse_role(target.query.count("role") ? target.query["role"] : "");
        auto token = target.query.count("token") ? target.query["token"] : "";
        core_.check_channel(seg[1], role, token);
        stream_.expires_never();
        std::make_shared<ChatSession>(stream_.release_socket(), core_, seg[1], role, token)->start(std::move(req_));
      } catch (const Error& e) {
        nlohmann::ordered_json j;
        j["error"] = to_string(e.code());
        j["detail"] = e.detail();
        respond(http_status(e.code()), j.dump());
      }
      return;
    }
    auto res = route(target);
    respond(res.status, std::move(res.body), res.content_type);
  }

  HttpResponse route(const Target& t) {
    const auto& s = t.segments;
    auto method = req_.method();
    const std::string& body = req_.body();
    bool post = method == http::verb::post;
    bool get = method == http::verb::get;
    if (s.size() == 1 && s[0] == "sessions" && post) return core_.create(body);
    if (s.size() == 3 && s[0] == "sessions") {
      if (s[2] == "pre" && post) return core_.submit_pre(s[1], body);
      if (s[2] == "post" && post) return core_.submit_post(s[1], body);
      if (s[2] == "close" && post) return core_.close(s[1], body);
      if (s[2] == "export" && get) return core_.export_session(s[1]);
    }
    if (s.size() == 2 && s[0] == "corpus" && s[1] == "export" && get) return core_.export_corpus();
    return {404, R"({"error":"NotFound"})"};
  }

  void respond(int status, std::string body, std::string content_type = "application/json") {
    auto res = std::make_shared<http::response<http::string_body>>(static_cast<http::status>(status), req_.version());
    res->set(http::field::content_type, content_type);
    res->keep_alive(req_.keep_alive());
    res->body() = std::move(body);
    res->prepare_payload();
    http::async_write(stream_, *res, [self = shared_from_this(), res](beast::error_code ec, std::size_t) {
      if (ec) return;
      if (!res->keep_alive()) {
        beast::error_code ignored;
        self->stream_.socket().shutdown(tcp::socket::shutdown_send, ignored);
        return;
      }
      self->read();
    });
  }
};

}  // namespace net

class Server {
 public:
  Server(ServiceCore& core, const std::string& address, std::uint16_t port)
      : core_(core), acceptor_(ioc_), signals_(ioc_, SIGINT, SIGTERM) {
    net::tcp::endpoint ep(boost::asio::ip::make_address(address), port);
    acceptor_.open(ep.protocol());
    acceptor_.set_option(boost::asio::socket_base::reuse_address(true));
    acceptor_.bind(ep);
    acceptor_.listen();
    signals_.async_wait([this](auto, int) { stop(); });
    accept();
  }

  std::uint16_t port() const { return acceptor_.local_endpoint().port(); }

  void run() { ioc_.run(); }
  void stop() {
    boost::system::error_code ec;
    acceptor_.close(ec);
    ioc_.stop();
  }

 private:
  ServiceCore& core_;
  boost::asio::io_context ioc_{1};
  net::tcp::acceptor acceptor_;
  boost::asio::signal_set signals_;

  void accept() {
    acceptor_.async_accept([this](boost::system::error_code ec, net::tcp::socket socket) {
      if (ec) return;
      std::make_shared<net::HttpSession>(std::move(socket), core_)->start();
      accept();
    });
  }
};

}  // namespace oumwoz
