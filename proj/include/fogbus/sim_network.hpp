#pragma once

// Deterministic in-process network on a virtual clock. Every send is encoded
// and decoded exactly as on the wire; delivery order is (time, sequence).

#include <cstdint>
#include <deque>
#include <functional>
#include <limits>
#include <map>
#include <queue>
#include <random>
#include <set>
#include <string>
#include <unordered_map>
#include <unordered_set>
#include <utility>
#include <variant>
#include <vector>

#include "fogbus/transport.hpp"

namespace fogbus {

/// Matches an endpoint; port 0 matches every port on the IP.
struct EndpointPattern {
  std::string ip;
  int port = 0;
  [[nodiscard]] bool matches(const Address& a) const { return a.ip == ip && (port == 0 || port == a.port); }
  friend auto operator<=>(const EndpointPattern&, const EndpointPattern&) = default;
};

struct LinkLatency {
  EndpointPattern a;
  EndpointPattern b;
  double ms = 0.0;
};

struct SimNetConfig {
  std::uint64_t seed = 1;
  double startTimeMs = 1625572932000.0;
  double defaultLatencyMs = 1.0;
  double sameHostLatencyMs = 0.0;
  double jitterMs = 0.0;
  std::vector<LinkLatency> latencies;  // symmetric; later entries win
  std::vector<std::pair<EndpointPattern, EndpointPattern>> partitions;
  std::map<std::string, HostProfile> hosts;  // hostID -> profile
};

struct SimRunStats {
  std::size_t delivered = 0;
  std::size_t dropped = 0;
  std::size_t timersFired = 0;
  std::size_t events = 0;
  bool quiescent = false;       // nothing left to process
  bool budgetExhausted = false;
};

class SimEnvironment final : public Environment {
 public:
  using DeliveryObserver = std::function<void(double timeMs, const MessageEnvelope&)>;

  explicit SimEnvironment(SimNetConfig cfg = {}, PortPlan plan = PortPlan::defaults())
      : Environment(std::move(plan)), cfg_(std::move(cfg)), now_(cfg_.startTimeMs), rng_(cfg_.seed) {}

  [[nodiscard]] double now_ms() const override { return now_; }
  [[nodiscard]] double elapsed_ms() const { return now_ - cfg_.startTimeMs; }
  [[nodiscard]] bool simulated() const override { return true; }
  [[nodiscard]] std::uint64_t seed() const override { return cfg_.seed; }
  [[nodiscard]] const SimNetConfig& config() const { return cfg_; }

  Address listen(Role role, const std::string& ip, std::optional<int> port, MessageHandler handler) override {
    Address addr{ip, 0};
    if (port) {
      check_port(role, *port);
      addr.port = *port;
      if (listeners_.contains(addr)) throw BindError("address in use: " + addr.str());
    } else {
      auto range = ports().range(role);
      for (int p = range.first; p <= range.last; ++p) {
        if (!listeners_.contains(Address{ip, p})) {
          addr.port = p;
          break;
        }
      }
      if (addr.port == 0) throw BindError(std::string(to_string(role)) + " port range exhausted on " + ip);
    }
    listeners_.emplace(addr, std::move(handler));
    record_bind(role, addr);
    return addr;
  }

  void close(const Address& addr) override {
    listeners_.erase(addr);
    auto [lo, hi] = timersByOwner_.equal_range(addr);
    for (auto it = lo; it != hi; ++it) cancelled_.insert(it->second);
    timersByOwner_.erase(lo, hi);
  }

  [[nodiscard]] bool is_bound(const Address& addr) const { return listeners_.contains(addr); }

  SendResult send(const Address& dest, MessageEnvelope envelope) override {
    envelope.sentAtSourceTimestamp = now_;
    envelope.receivedAtLocalTimestamp = 0.0;
    std::string bytes;
    try {
      bytes = encode_message(envelope);
    } catch (const std::exception& ex) {
      return {SendStatus::EncodeError, ex.what()};
    }
    const Address& src = envelope.source.addr;
    if (severed(src, dest)) return {SendStatus::Unreachable, "partitioned: " + src.str() + " -> " + dest.str()};
    if (!listeners_.contains(dest)) return {SendStatus::Unreachable, "connection refused: " + dest.str()};

    double at = now_ + latency(src, dest);
    if (cfg_.jitterMs > 0.0) at += std::uniform_real_distribution<double>(0.0, cfg_.jitterMs)(rng_);
    auto& last = lastArrival_[{src, dest}];
    at = std::max(at, last);
    last = at;
    push(at, Delivery{src, dest, std::move(bytes)});
    return {};
  }

  TimerId set_timer(const Address& owner, double delayMs, std::function<void()> fn) override {
    TimerId id = ++nextTimer_;
    timersByOwner_.emplace(owner, id);
    push(now_ + std::max(0.0, delayMs), TimerFire{id, owner, std::move(fn)});
    return id;
  }

  void cancel_timer(TimerId id) override { cancelled_.insert(id); }

  void defer(std::function<void()> fn) override { deferred_.push_back(std::move(fn)); }

  [[nodiscard]] HostProfile host_profile(const std::string& hostID) override {
    auto it = cfg_.hosts.find(hostID);
    if (it != cfg_.hosts.end()) return it->second;
    HostProfile p;
    p.cpu.utilizationPeak = 1.0;
    p.memory.utilizationPeak = 1.0;
    p.memory.maximum = 4ULL << 30;
    return p;
  }

  void set_host_profile(const std::string& hostID, const HostProfile& p) { cfg_.hosts[hostID] = p; }

  [[nodiscard]] double execution_time_ms(double work, const std::string& hostID, double) override {
    auto p = host_profile(hostID);
    p.cpu.utilization = std::min(p.cpu.utilization, 0.99);
    return work / effective_capacity(p);
  }

  // --- network manipulation --------------------------------------------------

  void sever(EndpointPattern a, EndpointPattern b) { cfg_.partitions.emplace_back(std::move(a), std::move(b)); }

  void heal(const EndpointPattern& a, const EndpointPattern& b) {
    std::erase_if(cfg_.partitions, [&](const auto& p) {
      return (p.first == a && p.second == b) || (p.first == b && p.second == a);
    });
  }

  void set_latency(EndpointPattern a, EndpointPattern b, double ms) {
    cfg_.latencies.push_back({std::move(a), std::move(b), ms});
  }

  [[nodiscard]] bool severed(const Address& a, const Address& b) const {
    for (const auto& [x, y] : cfg_.partitions) {
      if ((x.matches(a) && y.matches(b)) || (x.matches(b) && y.matches(a))) return true;
    }
    return false;
  }

  [[nodiscard]] double latency(const Address& a, const Address& b) const {
    // Most specific match wins; among equals the later entry.
    int bestScore = -1;
    double best = a.ip == b.ip ? cfg_.sameHostLatencyMs : cfg_.defaultLatencyMs;
    for (const auto& l : cfg_.latencies) {
      bool fwd = l.a.matches(a) && l.b.matches(b);
      bool rev = l.a.matches(b) && l.b.matches(a);
      if (!fwd && !rev) continue;
      int score = (l.a.port != 0 ? 1 : 0) + (l.b.port != 0 ? 1 : 0);
      if (score >= bestScore) {
        bestScore = score;
        best = l.ms;
      }
    }
    return best;
  }

  void on_delivery(DeliveryObserver obs) { observers_.push_back(std::move(obs)); }

  // --- driving -----------------------------------------------------------------

  /// Processes events in (time, sequence) order until none remain, the
  /// absolute virtual time `untilMs` is passed, or `budget` events ran.
  SimRunStats run_until(double untilMs, std::size_t budget = 100000) {
    SimRunStats stats;
    drain_deferred();
    while (!queue_.empty()) {
      if (stats.events >= budget) {
        stats.budgetExhausted = true;
        return accumulate(stats);
      }
      const Event& top = queue_.top();
      if (top.time > untilMs) {
        now_ = std::max(now_, untilMs);
        return accumulate(stats);
      }
      Event ev = top;
      queue_.pop();
      now_ = ev.time;
      ++stats.events;
      if (auto* d = std::get_if<Delivery>(&ev.payload)) {
        deliver(*d, stats);
      } else {
        auto& t = std::get<TimerFire>(ev.payload);
        if (cancelled_.erase(t.id) == 0) {
          forget_timer(t.owner, t.id);
          ++stats.timersFired;
          t.fn();
        }
      }
      drain_deferred();
    }
    stats.quiescent = true;
    return accumulate(stats);
  }

  SimRunStats run_for(double durationMs, std::size_t budget = 100000) { return run_until(now_ + durationMs, budget); }

  /// Delivers everything queued; returns the number of delivered messages.
  std::size_t deliver_until_quiescent(std::size_t budget = 100000) {
    return run_until(std::numeric_limits<double>::infinity(), budget).delivered;
  }

  [[nodiscard]] std::size_t pending_events() const { return queue_.size(); }
  [[nodiscard]] const SimRunStats& totals() const { return totals_; }

 private:
  struct Delivery {
    Address from;
    Address to;
    std::string bytes;
  };
  struct TimerFire {
    TimerId id;
    Address owner;
    std::function<void()> fn;
  };
  struct Event {
    double time;
    std::uint64_t seq;
    std::variant<Delivery, TimerFire> payload;
  };
  struct Later {
    bool operator()(const Event& a, const Event& b) const {
      return a.time != b.time ? a.time > b.time : a.seq > b.seq;
    }
  };

  void push(double at, std::variant<Delivery, TimerFire> payload) {
    queue_.push(Event{at, ++seq_, std::move(payload)});
  }

  void deliver(const Delivery& d, SimRunStats& stats) {
    auto it = listeners_.find(d.to);
    if (it == listeners_.end()) {
      ++stats.dropped;
      return;
    }
    MessageEnvelope env = decode_message(d.bytes);
    env.receivedAtLocalTimestamp = now_;
    ++stats.delivered;
    for (const auto& obs : observers_) obs(now_, env);
    // The handler may close the listener; keep a copy alive for the call.
    MessageHandler handler = it->second;
    handler(env);
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

  void drain_deferred() {
    while (!deferred_.empty()) {
      auto fn = std::move(deferred_.front());
      deferred_.pop_front();
      fn();
    }
  }

  SimRunStats accumulate(const SimRunStats& s) {
    totals_.delivered += s.delivered;
    totals_.dropped += s.dropped;
    totals_.timersFired += s.timersFired;
    totals_.events += s.events;
    totals_.quiescent = s.quiescent;
    totals_.budgetExhausted = totals_.budgetExhausted || s.budgetExhausted;
    return s;
  }

  SimNetConfig cfg_;
  double now_;
  std::mt19937_64 rng_;
  std::uint64_t seq_ = 0;
  TimerId nextTimer_ = 0;
  std::priority_queue<Event, std::vector<Event>, Later> queue_;
  std::map<Address, MessageHandler> listeners_;
  std::multimap<Address, TimerId> timersByOwner_;
  std::unordered_set<TimerId> cancelled_;
  std::map<std::pair<Address, Address>, double> lastArrival_;
  std::deque<std::function<void()>> deferred_;
  std::vector<DeliveryObserver> observers_;
  SimRunStats totals_;
};

}  // namespace fogbus
