#pragma once

#include <optional>
#include <string>
#include <utility>

#include <spdlog/spdlog.h>

#include "fogbus/transport.hpp"

namespace fogbus {

/// Base of every role. Owns its listener; handlers run on the environment's
/// event loop one at a time.
class Component {
 public:
  Component(Environment& env, Role role, const std::string& ip, std::optional<int> port, std::string hostID = {})
      : env_(env) {
    Address addr = env_.listen(role, ip, port, [this](const MessageEnvelope& e) { dispatch(e); });
    self_ = make_identity(role, addr, hostID.empty() ? ip : std::move(hostID));
    env_.attach(addr, this);
  }

  virtual ~Component() {
    if (env_.component_at(self_.addr) != this) return;
    env_.detach(self_.addr);
    env_.close(self_.addr);
  }

  Component(const Component&) = delete;
  Component& operator=(const Component&) = delete;

  virtual void start() {}

  [[nodiscard]] const ComponentIdentity& identity() const { return self_; }
  [[nodiscard]] const Address& address() const { return self_.addr; }
  [[nodiscard]] Role role() const { return self_.role; }
  [[nodiscard]] Environment& env() const { return env_; }
  [[nodiscard]] bool stopped() const { return stopped_; }

  /// Labels the log-printing name, e.g. with a container name.
  void set_label(std::string label) {
    label_ = std::move(label);
    rename();
  }

 protected:
  virtual void on_message(const MessageEnvelope& e) = 0;
  /// Called instead of on_message once stopped.
  virtual void on_stopped_message(const MessageEnvelope&) {}

  SendResult send(const ComponentIdentity& to, const MessageKind& k, Json data = Json::object()) {
    if (data.is_null()) data = Json::object();
    auto result = env_.send(to.addr, make_envelope(self_, to, k, std::move(data)));
    if (!result) spdlog::debug("{} -> {} {} failed: {}", self_.name, to.addr.str(), k.str(), result.detail);
    return result;
  }

  SendResult send(Role role, const Address& to, const MessageKind& k, Json data = Json::object()) {
    return send(peer_identity(role, to), k, std::move(data));
  }

  TimerId after(double delayMs, std::function<void()> fn) { return env_.set_timer(self_.addr, delayMs, std::move(fn)); }
  void cancel(std::optional<TimerId>& id) {
    if (id) env_.cancel_timer(*id);
    id.reset();
  }

  void reply_error(const MessageEnvelope& to, std::string reason, std::string detail = {}) {
    Json data{{"reason", std::move(reason)}, {"detail", std::move(detail)}, {"inReplyTo", to.kind().str()}};
    if (to.data.contains("userID")) data["userID"] = to.data["userID"];
    if (to.data.contains("dataID")) data["dataID"] = to.data["dataID"];
    send(to.source, kind::error, std::move(data));
  }

  /// Answers resourcesDiscovery/probe(try) with this component's identity.
  bool answer_probe(const MessageEnvelope& e) {
    if (e.kind() != kind::probeTry) return false;
    send(e.source, kind::probeResult, Json{{"role", to_string(self_.role)}, {"identity", self_}});
    return true;
  }

  void mark_stopped() { stopped_ = true; }

  /// Recomputes the naming forms after the id or master changed.
  void rename(const ComponentIdentity* master = nullptr) {
    refresh_names(self_, master);
    if (!label_.empty()) self_.nameLogPrinting = label_;
  }

  ComponentIdentity self_;
  Environment& env_;

 private:
  void dispatch(const MessageEnvelope& e) {
    try {
      if (stopped_) {
        on_stopped_message(e);
        return;
      }
      on_message(e);
    } catch (const std::exception& ex) {
      spdlog::warn("{} failed handling {} from {}: {}", self_.name, e.kind().str(), e.source.addr.str(), ex.what());
    }
  }

  bool stopped_ = false;
  std::string label_;
};

}  // namespace fogbus
