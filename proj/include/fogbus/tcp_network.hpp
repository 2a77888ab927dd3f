#pragma once

// Real network: one single-threaded asio event loop per process. Frames are
// written synchronously over a cached connection per destination, so each
// link stays FIFO; inbound frames are read asynchronously and dispatched on
// the loop.

#include <array>
#include <chrono>
#include <map>
#include <memory>
#include <set>
#include <string>
#include <utility>

#include <boost/asio.hpp>
#include <spdlog/spdlog.h>

#include "fogbus/transport.hpp"

namespace fogbus {

class TcpEnvironment final : public Environment {
  using tcp = boost::asio::ip::tcp;

 public:
  explicit TcpEnvironment(PortPlan plan = PortPlan::from_environment()) : Environment(std::move(plan)) {}

  ~TcpEnvironment() override {
    for (auto& [_, l] : listeners_) shutdown(*l);
    outgoing_.clear();
  }

  [[nodiscard]] boost::asio::io_context& io() { return io_; }

  [[nodiscard]] double now_ms() const override {
    using namespace std::chrono;
    return double(duration_cast<microseconds>(system_clock::now().time_since_epoch()).count()) / 1000.0;
  }

  Address listen(Role role, const std::string& ip, std::optional<int> port, MessageHandler handler) override {
    boost::system::error_code ec;
    auto bindIP = boost::asio::ip::make_address(ip, ec);
    if (ec) throw BindError("bad bind address '" + ip + "': " + ec.message());
    auto l = std::make_shared<Listener>(io_);
    l->handler = std::move(handler);
    Address addr{ip, 0};
    if (port) {
      check_port(role, *port);
      if (!try_bind(*l, tcp::endpoint(bindIP, std::uint16_t(*port)), ec)) {
        throw BindError("cannot bind " + ip + ":" + std::to_string(*port) + ": " + ec.message());
      }
      addr.port = *port;
    } else {
      auto r = ports().range(role);
      for (int p = r.first; p <= r.last && addr.port == 0; ++p) {
        if (try_bind(*l, tcp::endpoint(bindIP, std::uint16_t(p)), ec)) addr.port = p;
      }
      if (addr.port == 0) throw BindError(std::string(to_string(role)) + " port range exhausted on " + ip);
    }
    l->addr = addr;
    listeners_[addr] = l;
    record_bind(role, addr);
    accept(l);
    return addr;
  }

  void close(const Address& addr) override {
    if (auto it = listeners_.find(addr); it != listeners_.end()) {
      shutdown(*it->second);
      listeners_.erase(it);
    }
    auto [lo, hi] = timersByOwner_.equal_range(addr);
    for (auto it = lo; it != hi; ++it) {
      if (auto t = timers_.find(it->second); t != timers_.end()) {
        t->second->cancel();
        timers_.erase(t);
      }
    }
    timersByOwner_.erase(lo, hi);
  }

  SendResult send(const Address& dest, MessageEnvelope envelope) override {
    envelope.sentAtSourceTimestamp = now_ms();
    envelope.receivedAtLocalTimestamp = 0.0;
    std::string frame;
    try {
      frame = frame_message(encode_message(envelope));
    } catch (const std::exception& ex) {
      return {SendStatus::EncodeError, ex.what()};
    }
    // A cached connection may have been closed by the peer; retry once fresh.
    std::string detail;
    for (int attempt = 0; attempt < 2; ++attempt) {
      boost::system::error_code ec;
      auto sock = connection(dest, ec);
      if (!sock) {
        detail = ec.message();
        break;
      }
      boost::asio::write(*sock, boost::asio::buffer(frame), ec);
      if (!ec) return {};
      detail = ec.message();
      outgoing_.erase(dest);
    }
    return {SendStatus::Unreachable, dest.str() + ": " + detail};
  }

  TimerId set_timer(const Address& owner, double delayMs, std::function<void()> fn) override {
    TimerId id = ++nextTimer_;
    auto t = std::make_shared<boost::asio::steady_timer>(io_);
    t->expires_after(std::chrono::microseconds(std::int64_t(std::max(0.0, delayMs) * 1000.0)));
    timers_[id] = t;
    timersByOwner_.emplace(owner, id);
    t->async_wait([this, id, owner, fn = std::move(fn)](const boost::system::error_code& ec) {
      if (ec || !timers_.contains(id)) return;
      timers_.erase(id);
      forget_timer(owner, id);
      fn();
    });
    return id;
  }

  void cancel_timer(TimerId id) override {
    if (auto t = timers_.find(id); t != timers_.end()) {
      t->second->cancel();
      timers_.erase(t);
    }
  }

  void defer(std::function<void()> fn) override { boost::asio::post(io_, std::move(fn)); }

  [[nodiscard]] HostProfile host_profile(const std::string&) override {
    auto now = std::chrono::steady_clock::now();
    if (!cachedProfile_ || now - profiledAt_ > std::chrono::seconds(1)) {
      cachedProfile_ = sample_local_profile();
      profiledAt_ = now;
    }
    return *cachedProfile_;
  }

  [[nodiscard]] double execution_time_ms(double, const std::string&, double measuredWallMs) override {
    return measuredWallMs;
  }
  [[nodiscard]] bool simulated() const override { return false; }

  void run() {
    io_.restart();
    io_.run();
  }

  /// Runs the loop for at most `ms` of wall time.
  void run_for(double ms) {
    io_.restart();
    io_.run_for(std::chrono::microseconds(std::int64_t(ms * 1000.0)));
  }

  /// Runs until `done()` holds or `timeoutMs` elapses; returns done().
  template <class Pred>
  bool run_until(Pred done, double timeoutMs) {
    auto deadline = std::chrono::steady_clock::now() + std::chrono::microseconds(std::int64_t(timeoutMs * 1000.0));
    io_.restart();
    while (!done() && std::chrono::steady_clock::now() < deadline) {
      io_.run_for(std::chrono::milliseconds(10));
      if (io_.stopped()) io_.restart();
    }
    return done();
  }

  void stop() { io_.stop(); }

 private:
  struct Session;

  struct Listener {
    explicit Listener(boost::asio::io_context& io) : acceptor(io) {}
    tcp::acceptor acceptor;
    Address addr;
    MessageHandler handler;
    bool open = true;
    std::set<std::shared_ptr<Session>> sessions;
  };

  struct Session : std::enable_shared_from_this<Session> {
    explicit Session(tcp::socket s) : socket(std::move(s)) {}
    tcp::socket socket;
    std::array<unsigned char, kFrameHeaderBytes> header{};
    std::string body;
    std::weak_ptr<Listener> owner;
  };

  static bool try_bind(Listener& l, const tcp::endpoint& ep, boost::system::error_code& ec) {
    boost::system::error_code ignore;
    if (l.acceptor.is_open()) l.acceptor.close(ignore);
    l.acceptor.open(ep.protocol(), ec);
    if (ec) return false;
    l.acceptor.set_option(tcp::acceptor::reuse_address(true), ignore);
    l.acceptor.bind(ep, ec);
    if (!ec) l.acceptor.listen(boost::asio::socket_base::max_listen_connections, ec);
    if (ec) {
      l.acceptor.close(ignore);
      return false;
    }
    return true;
  }

  void shutdown(Listener& l) {
    boost::system::error_code ignore;
    l.open = false;
    l.acceptor.close(ignore);
    for (const auto& s : l.sessions) s->socket.close(ignore);
    l.sessions.clear();
  }

  void accept(const std::shared_ptr<Listener>& l) {
    l->acceptor.async_accept([this, l](const boost::system::error_code& ec, tcp::socket sock) {
      if (!l->open) return;
      if (!ec) {
        auto s = std::make_shared<Session>(std::move(sock));
        s->owner = l;
        l->sessions.insert(s);
        read_header(s);
      }
      accept(l);
    });
  }

  void end_session(const std::shared_ptr<Session>& s) {
    boost::system::error_code ignore;
    s->socket.close(ignore);
    if (auto l = s->owner.lock()) l->sessions.erase(s);
  }

  void read_header(const std::shared_ptr<Session>& s) {
    boost::asio::async_read(s->socket, boost::asio::buffer(s->header),
                            [this, s](const boost::system::error_code& ec, std::size_t) {
                              if (ec) {
                                end_session(s);
                                return;
                              }
                              auto n = frame_length(s->header.data());
                              if (n > kMaxFrameBytes) {
                                spdlog::warn("dropping connection: frame of {} bytes exceeds limit", n);
                                end_session(s);
                                return;
                              }
                              s->body.resize(n);
                              read_body(s);
                            });
  }

  void read_body(const std::shared_ptr<Session>& s) {
    boost::asio::async_read(s->socket, boost::asio::buffer(s->body),
                            [this, s](const boost::system::error_code& ec, std::size_t) {
                              if (ec) {
                                end_session(s);
                                return;
                              }
                              dispatch(s);
                              if (s->socket.is_open()) read_header(s);
                            });
  }

  void dispatch(const std::shared_ptr<Session>& s) {
    auto l = s->owner.lock();
    if (!l || !l->open) return;
    MessageEnvelope e;
    try {
      e = decode_message(s->body);
    } catch (const std::exception& ex) {
      spdlog::warn("{} dropped undecodable frame: {}", l->addr.str(), ex.what());
      return;
    }
    e.receivedAtLocalTimestamp = now_ms();
    MessageHandler h = l->handler;
    h(e);
  }

  std::shared_ptr<tcp::socket> connection(const Address& dest, boost::system::error_code& ec) {
    if (auto it = outgoing_.find(dest); it != outgoing_.end()) {
      // Peers never write back on these sockets; anything readable means EOF or reset.
      std::array<char, 1> probe{};
      it->second->non_blocking(true, ec);
      it->second->read_some(boost::asio::buffer(probe), ec);
      it->second->non_blocking(false);
      if (ec == boost::asio::error::would_block) {
        ec.clear();
        return it->second;
      }
      outgoing_.erase(it);
      ec.clear();
    }
    auto addr = boost::asio::ip::make_address(dest.ip, ec);
    if (ec) return nullptr;
    auto sock = std::make_shared<tcp::socket>(io_);
    sock->connect(tcp::endpoint(addr, std::uint16_t(dest.port)), ec);
    if (ec) return nullptr;
    sock->set_option(tcp::no_delay(true), ec);
    ec.clear();
    outgoing_[dest] = sock;
    return sock;
  }

  void forget_timer(const Address& owner, TimerId id) {
    auto [lo, hi] = timersByOwner_.equal_range(owner);
    for (auto it = lo; it != hi; ++it) {
      if (it->second == id) {
        timersByOwner_.erase(it);
        return;
      }
    }
  }

  boost::asio::io_context io_;
  std::map<Address, std::shared_ptr<Listener>> listeners_;
  std::map<Address, std::shared_ptr<tcp::socket>> outgoing_;
  std::map<TimerId, std::shared_ptr<boost::asio::steady_timer>> timers_;
  std::multimap<Address, TimerId> timersByOwner_;
  TimerId nextTimer_ = 0;
  std::optional<HostProfile> cachedProfile_;
  std::chrono::steady_clock::time_point profiledAt_{};
};

}  // namespace fogbus
