#pragma once

// Transport-neutral environment every component runs against: clock,
// listeners, sends, timers. Backed either by the simulated network
// (sim_network.hpp) or by real TCP sockets (tcp_network.hpp).

#include <array>
#include <cstdint>
#include <cstdlib>
#include <functional>
#include <map>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "fogbus/profile.hpp"
#include "fogbus/protocol.hpp"

namespace fogbus {

// ============================================================================
// Port plan
// ============================================================================

struct PortRange {
  int first = 0;
  int last = 0;
  [[nodiscard]] bool contains(int port) const { return port >= first && port <= last; }
  friend bool operator==(const PortRange&, const PortRange&) = default;
};

inline PortRange parse_port_range(std::string_view text) {
  auto dash = text.find('-');
  if (dash == std::string_view::npos) throw std::invalid_argument("port range must look like A-B");
  int a = std::stoi(std::string(text.substr(0, dash)));
  int b = std::stoi(std::string(text.substr(dash + 1)));
  if (a < 1 || b > 65535 || a > b) throw std::invalid_argument("invalid port range " + std::string(text));
  return {a, b};
}

inline std::string_view port_range_variable(Role role) {
  switch (role) {
    case Role::RemoteLogger: return "REMOTE_LOGGER_PORT_RANGE";
    case Role::Master: return "MASTER_PORT_RANGE";
    case Role::Actor: return "ACTOR_PORT_RANGE";
    case Role::User: return "USER_PORT_RANGE";
    case Role::TaskExecutor: return "TASK_EXECUTOR_PORT_RANGE";
  }
  return "";
}

class PortPlan {
 public:
  static PortPlan defaults() {
    PortPlan p;
    p.ranges_[index(Role::RemoteLogger)] = {5000, 5000};
    p.ranges_[index(Role::Master)] = {5001, 5010};
    p.ranges_[index(Role::Actor)] = {50000, 50100};
    p.ranges_[index(Role::User)] = {50101, 50200};
    p.ranges_[index(Role::TaskExecutor)] = {50201, 60000};
    return p;
  }

  /// Defaults overridden by *_PORT_RANGE environment variables.
  static PortPlan from_environment() {
    PortPlan p = defaults();
    for (Role r : kAllRoles) {
      std::string var{port_range_variable(r)};
      if (const char* v = std::getenv(var.c_str()); v != nullptr && *v != '\0') {
        p.set(r, parse_port_range(v));
      }
    }
    return p;
  }

  [[nodiscard]] PortRange range(Role r) const { return ranges_[index(r)]; }
  void set(Role r, PortRange range) { ranges_[index(r)] = range; }

 private:
  static std::size_t index(Role r) { return static_cast<std::size_t>(r); }
  std::array<PortRange, 5> ranges_{};
};

struct BindError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// ============================================================================
// Framing: 4-byte big-endian length, then the JSON document.
// ============================================================================

inline constexpr std::size_t kFrameHeaderBytes = 4;
inline constexpr std::uint32_t kMaxFrameBytes = 64U * 1024U * 1024U;

struct FrameError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

inline std::string frame_message(std::string_view document) {
  if (document.size() > kMaxFrameBytes) throw FrameError("message too large to frame");
  auto n = static_cast<std::uint32_t>(document.size());
  std::string out;
  out.reserve(kFrameHeaderBytes + document.size());
  out.push_back(static_cast<char>((n >> 24) & 0xFF));
  out.push_back(static_cast<char>((n >> 16) & 0xFF));
  out.push_back(static_cast<char>((n >> 8) & 0xFF));
  out.push_back(static_cast<char>(n & 0xFF));
  out.append(document);
  return out;
}

inline std::uint32_t frame_length(const unsigned char* header) {
  return (std::uint32_t(header[0]) << 24) | (std::uint32_t(header[1]) << 16) | (std::uint32_t(header[2]) << 8) |
         std::uint32_t(header[3]);
}

/// Incremental decoder for a byte stream of frames.
class FrameReader {
 public:
  void feed(std::string_view bytes) { buffer_.append(bytes); }

  std::optional<std::string> next() {
    if (buffer_.size() < kFrameHeaderBytes) return std::nullopt;
    auto n = frame_length(reinterpret_cast<const unsigned char*>(buffer_.data()));
    if (n > kMaxFrameBytes) throw FrameError("frame length exceeds limit");
    if (buffer_.size() < kFrameHeaderBytes + n) return std::nullopt;
    std::string doc = buffer_.substr(kFrameHeaderBytes, n);
    buffer_.erase(0, kFrameHeaderBytes + n);
    return doc;
  }

  [[nodiscard]] std::size_t buffered() const { return buffer_.size(); }

 private:
  std::string buffer_;
};

// ============================================================================
// Environment
// ============================================================================

using MessageHandler = std::function<void(const MessageEnvelope&)>;
using TimerId = std::uint64_t;

enum class SendStatus { Ok, Unreachable, EncodeError };

struct SendResult {
  SendStatus status = SendStatus::Ok;
  std::string detail;
  [[nodiscard]] bool ok() const { return status == SendStatus::Ok; }
  explicit operator bool() const { return ok(); }
};

class Component;

class Environment {
 public:
  explicit Environment(PortPlan plan) : plan_(std::move(plan)) {}
  virtual ~Environment() = default;
  Environment(const Environment&) = delete;
  Environment& operator=(const Environment&) = delete;

  /// Milliseconds since the Unix epoch (virtual in simulation).
  [[nodiscard]] virtual double now_ms() const = 0;

  /// Binds a listener for `role` on `ip`. Without an explicit port the lowest
  /// free port of the role's range is taken. Throws BindError.
  virtual Address listen(Role role, const std::string& ip, std::optional<int> port, MessageHandler handler) = 0;
  virtual void close(const Address& addr) = 0;

  /// Stamps sentAtSourceTimestamp, encodes and transmits.
  virtual SendResult send(const Address& dest, MessageEnvelope envelope) = 0;

  virtual TimerId set_timer(const Address& owner, double delayMs, std::function<void()> fn) = 0;
  virtual void cancel_timer(TimerId id) = 0;

  /// Runs `fn` after the current handler returns, on the same event loop.
  virtual void defer(std::function<void()> fn) = 0;

  [[nodiscard]] virtual HostProfile host_profile(const std::string& hostID) = 0;

  /// Duration attributed to one execution of `work` on `hostID`. In
  /// simulation the result also delays the executor's output.
  [[nodiscard]] virtual double execution_time_ms(double work, const std::string& hostID, double measuredWallMs) = 0;
  [[nodiscard]] virtual bool simulated() const = 0;
  [[nodiscard]] virtual std::uint64_t seed() const { return 0; }

  [[nodiscard]] const PortPlan& ports() const { return plan_; }

  void check_port(Role role, int port) const {
    auto r = plan_.range(role);
    if (!r.contains(port)) {
      throw BindError("port " + std::to_string(port) + " outside " + std::string(to_string(role)) + " range " +
                      std::to_string(r.first) + "-" + std::to_string(r.last));
    }
  }

  // Directory of live components, used by the harness and for introspection.
  void attach(const Address& addr, Component* c) { components_[addr] = c; }
  void detach(const Address& addr) { components_.erase(addr); }
  [[nodiscard]] Component* component_at(const Address& addr) const {
    auto it = components_.find(addr);
    return it == components_.end() ? nullptr : it->second;
  }
  [[nodiscard]] std::vector<Component*> components() const {
    std::vector<Component*> out;
    out.reserve(components_.size());
    for (const auto& [_, c] : components_) out.push_back(c);
    return out;
  }

  /// Every address ever bound, in bind order.
  [[nodiscard]] const std::vector<std::pair<Role, Address>>& bind_history() const { return bindHistory_; }

 protected:
  void record_bind(Role role, const Address& addr) { bindHistory_.emplace_back(role, addr); }

 private:
  PortPlan plan_;
  std::map<Address, Component*> components_;
  std::vector<std::pair<Role, Address>> bindHistory_;
};

}  // namespace fogbus
