#pragma once

#include <algorithm>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include <spdlog/spdlog.h>

#include "fogbus/component.hpp"
#include "fogbus/master.hpp"
#include "fogbus/task_executor.hpp"

namespace fogbus {

struct ActorConfig {
  std::optional<Address> master;
  std::optional<Address> remoteLogger;
  double profileIntervalMs = 5000.0;  // 0 disables
  double retryInitialMs = 500.0;
  double retryCapMs = 8000.0;
};

inline void to_json(Json& j, const ActorConfig& c) {
  j = Json{{"profileIntervalMs", c.profileIntervalMs}, {"retryInitialMs", c.retryInitialMs},
           {"retryCapMs", c.retryCapMs}};
  if (c.master) j["master"] = *c.master;
  if (c.remoteLogger) j["remoteLogger"] = *c.remoteLogger;
}
inline void from_json(const Json& j, ActorConfig& c) {
  ActorConfig d;
  c.profileIntervalMs = j.value("profileIntervalMs", d.profileIntervalMs);
  c.retryInitialMs = j.value("retryInitialMs", d.retryInitialMs);
  c.retryCapMs = j.value("retryCapMs", d.retryCapMs);
  c.master.reset();
  c.remoteLogger.reset();
  if (j.contains("master")) c.master = j.at("master").get<Address>();
  if (j.contains("remoteLogger")) c.remoteLogger = j.at("remoteLogger").get<Address>();
}

class Actor final : public Component {
 public:
  Actor(Environment& env, const std::string& ip, std::optional<int> port, std::string hostID = {}, ActorConfig cfg = {})
      : Component(env, Role::Actor, ip, port, std::move(hostID)), cfg_(std::move(cfg)) {}

  ~Actor() override {
    // Children unbind before this listener does.
    executors_.clear();
    masters_.clear();
  }

  void start() override {
    if (cfg_.master) join(*cfg_.master);
  }

  struct MasterLink {
    ComponentIdentity master;
    bool registered = false;
    std::string componentID;
    double backoffMs = 0.0;
    std::size_t attempts = 0;
    std::optional<TimerId> retry;
  };

  [[nodiscard]] const std::map<Address, MasterLink>& masters() const { return links_; }
  [[nodiscard]] bool registered() const {
    return std::any_of(links_.begin(), links_.end(), [](const auto& l) { return l.second.registered; });
  }
  [[nodiscard]] std::size_t profile_ticks() const { return profileTicks_; }
  [[nodiscard]] std::vector<const TaskExecutor*> spawned_executors() const {
    std::vector<const TaskExecutor*> out;
    for (const auto& [_, x] : executors_) out.push_back(x.get());
    return out;
  }
  [[nodiscard]] std::vector<Master*> spawned_masters() const {
    std::vector<Master*> out;
    for (const auto& m : masters_) out.push_back(m.get());
    return out;
  }

  /// Registers with `master`, retrying with doubling backoff until it answers.
  void join(const Address& master) {
    auto& l = links_[master];
    l.master = peer_identity(Role::Master, master);
    if (l.registered || l.retry) return;
    l.backoffMs = cfg_.retryInitialMs;
    attempt(master);
  }

 protected:
  void on_message(const MessageEnvelope& e) override {
    if (answer_probe(e)) return;
    const auto k = e.kind();
    if (k == kind::registered) {
      on_registered(e);
    } else if (k == kind::runTaskExecutor) {
      on_run_task_executor(e);
    } else if (k == kind::initNewMaster) {
      on_init_new_master(e);
    } else if (k == kind::advertiseMaster) {
      join(e.source.addr);
    } else if (k == kind::terminated) {
      on_executor_terminated(e);
    } else {
      spdlog::debug("{} ignores {}", self_.name, k.str());
    }
  }

 private:
  HostProfile profile() { return clamp_profile(env_.host_profile(self_.hostID)); }

  void attempt(const Address& master) {
    auto& l = links_.at(master);
    ++l.attempts;
    send(l.master, kind::registerComponent, {{"resources", profile()}});
    double wait = l.backoffMs;
    l.backoffMs = std::min(l.backoffMs * 2.0, cfg_.retryCapMs);
    l.retry = after(wait, [this, master] {
      auto& link = links_.at(master);
      link.retry.reset();
      if (!link.registered) attempt(master);
    });
  }

  void on_registered(const MessageEnvelope& e) {
    auto it = links_.find(e.source.addr);
    if (it == links_.end()) return;
    auto& l = it->second;
    cancel(l.retry);
    l.master = e.source;
    l.componentID = e.data.at("identity").at("componentID").get<std::string>();
    bool first = !registered();
    l.registered = true;
    if (first) {
      self_.componentID = l.componentID;
      rename(&l.master);
      if (cfg_.profileIntervalMs > 0.0) profile_tick();
    }
  }

  void profile_tick() {
    ++profileTicks_;
    if (cfg_.remoteLogger) {
      send(Role::RemoteLogger, *cfg_.remoteLogger, kind::hostResources, {{"resources", profile()}});
    }
    profileTimer_ = after(cfg_.profileIntervalMs, [this] { profile_tick(); });
  }

  [[nodiscard]] bool accepts_commands_from(const Address& master) const { return links_.contains(master); }

  void on_run_task_executor(const MessageEnvelope& e) {
    if (!accepts_commands_from(e.source.addr)) {
      reply_error(e, "notRegistered", "actor is not registered with this master");
      return;
    }
    ExecutorConfig c;
    try {
      c = e.data.get<ExecutorConfig>();
    } catch (const std::exception& ex) {
      reply_error(e, "badCommand", ex.what());
      return;
    }
    if (init_task(c.taskName) == nullptr) {
      reply_error(e, "unknownTask", c.taskName);
      return;
    }
    c.master = e.source.addr;
    c.actor = self_.addr;
    if (!c.remoteLogger) c.remoteLogger = cfg_.remoteLogger;
    std::unique_ptr<TaskExecutor> x;
    try {
      x = std::make_unique<TaskExecutor>(env_, self_.addr.ip, std::nullopt, self_.hostID, c);
    } catch (const BindError& ex) {
      reply_error(e, "portExhausted", ex.what());
      return;
    }
    auto* raw = x.get();
    spdlog::info("{} started {} for user {} on {}", self_.nameLogPrinting, c.taskName, c.userID, raw->address().str());
    executors_[raw->address()] = std::move(x);
    raw->start();
  }

  void on_executor_terminated(const MessageEnvelope& e) {
    Address addr = e.source.addr;
    if (!executors_.contains(addr)) return;
    env_.defer([this, addr] { executors_.erase(addr); });
  }

  void on_init_new_master(const MessageEnvelope& e) {
    if (!accepts_commands_from(e.source.addr)) {
      reply_error(e, "notRegistered", "actor is not registered with this master");
      return;
    }
    MasterConfig c;
    try {
      c = e.data.value("config", Json::object()).get<MasterConfig>();
    } catch (const std::exception& ex) {
      reply_error(e, "badCommand", ex.what());
      return;
    }
    if (!c.creator) c.creator = e.source;
    if (!c.remoteLogger) c.remoteLogger = cfg_.remoteLogger;
    std::unique_ptr<Master> m;
    try {
      m = std::make_unique<Master>(env_, self_.addr.ip, std::nullopt, self_.hostID, c);
    } catch (const BindError& ex) {
      reply_error(e, "portExhausted", ex.what());
      return;
    } catch (const std::invalid_argument& ex) {
      reply_error(e, "badCommand", ex.what());
      return;
    }
    auto* raw = m.get();
    spdlog::info("{} started Master on {}", self_.nameLogPrinting, raw->address().str());
    masters_.push_back(std::move(m));
    raw->start();
  }

  ActorConfig cfg_;
  std::map<Address, MasterLink> links_;
  std::map<Address, std::unique_ptr<TaskExecutor>> executors_;
  std::vector<std::unique_ptr<Master>> masters_;
  std::size_t profileTicks_ = 0;
  std::optional<TimerId> profileTimer_;
};

}  // namespace fogbus
