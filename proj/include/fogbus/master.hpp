#pragma once

#include <algorithm>
#include <deque>
#include <map>
#include <memory>
#include <optional>
#include <set>
#include <stdexcept>
#include <string>
#include <vector>

#include <spdlog/spdlog.h>

#include "fogbus/appmodel.hpp"
#include "fogbus/component.hpp"
#include "fogbus/policy.hpp"
#include "fogbus/task_executor.hpp"

namespace fogbus {

/// Inclusive port span on one IP that discovery probes.
struct DiscoveryTarget {
  std::string ip;
  int from = 0;
  int to = 0;
};

inline void to_json(Json& j, const DiscoveryTarget& t) { j = Json{{"ip", t.ip}, {"from", t.from}, {"to", t.to}}; }
inline void from_json(const Json& j, DiscoveryTarget& t) {
  t.ip = j.at("ip").get<std::string>();
  t.from = j.at("from").get<int>();
  t.to = j.value("to", t.from);
  if (t.to < t.from) throw std::invalid_argument("discovery target range is reversed");
}

struct MasterConfig {
  std::string schedulerName = "RankingBased";
  Json schedulerConfig = Json::object();
  std::size_t queueCapacity = 8;
  double cpuThreshold = 0.9;
  std::optional<Address> remoteLogger;
  double profileIntervalMs = 5000.0;  // 0 disables
  double discoveryIntervalMs = 2000.0;
  std::vector<DiscoveryTarget> discoveryTargets;
  double coolOffMs = 10000.0;
  double executorIdleMs = 2000.0;
  int gameOfLifeTasks = kDefaultGameOfLifeTasks;
  std::optional<ComponentIdentity> creator;  // set on masters started by scaling
};

inline void to_json(Json& j, const MasterConfig& c) {
  j = Json{{"schedulerName", c.schedulerName},
           {"schedulerConfig", c.schedulerConfig},
           {"queueCapacity", c.queueCapacity},
           {"cpuThreshold", c.cpuThreshold},
           {"profileIntervalMs", c.profileIntervalMs},
           {"discoveryIntervalMs", c.discoveryIntervalMs},
           {"discoveryTargets", c.discoveryTargets},
           {"coolOffMs", c.coolOffMs},
           {"executorIdleMs", c.executorIdleMs},
           {"gameOfLifeTasks", c.gameOfLifeTasks}};
  if (c.remoteLogger) j["remoteLogger"] = *c.remoteLogger;
  if (c.creator) j["creator"] = *c.creator;
}

inline void from_json(const Json& j, MasterConfig& c) {
  MasterConfig d;
  c.schedulerName = j.value("schedulerName", d.schedulerName);
  c.schedulerConfig = j.value("schedulerConfig", Json::object());
  c.queueCapacity = j.value("queueCapacity", d.queueCapacity);
  c.cpuThreshold = j.value("cpuThreshold", d.cpuThreshold);
  c.profileIntervalMs = j.value("profileIntervalMs", d.profileIntervalMs);
  c.discoveryIntervalMs = j.value("discoveryIntervalMs", d.discoveryIntervalMs);
  c.discoveryTargets = j.value("discoveryTargets", std::vector<DiscoveryTarget>{});
  c.coolOffMs = j.value("coolOffMs", d.coolOffMs);
  c.executorIdleMs = j.value("executorIdleMs", d.executorIdleMs);
  c.gameOfLifeTasks = j.value("gameOfLifeTasks", d.gameOfLifeTasks);
  c.remoteLogger.reset();
  c.creator.reset();
  if (j.contains("remoteLogger")) c.remoteLogger = j.at("remoteLogger").get<Address>();
  if (j.contains("creator")) c.creator = j.at("creator").get<ComponentIdentity>();
}

struct RegistrationRecord {
  ComponentIdentity identity;
  double registeredAt = 0.0;
  std::optional<HostProfile> lastProfile;
  std::vector<Address> hostedExecutors;
  bool confirmed = true;  // false for actors imported from a peer until they register
};

struct PlacementQueueEntry {
  ComponentIdentity user;
  std::string applicationName;
  std::string label;
  double enqueuedAt = 0.0;
};

struct ExecutorRecord {
  ComponentIdentity identity;
  std::string taskName;
  std::string applicationName;
  std::string userID;  // user currently bound
  Address actor;
  bool ready = false;
  bool cooling = false;  // offered to the reuse pool
  std::optional<std::string> reusedFrom;  // previous user while a reuse is in flight
};

struct UserSession {
  ComponentIdentity user;
  std::string applicationName;
  std::string label;
  ApplicationSpec app;
  Decision decision;
  std::map<std::string, Address> executors;  // task -> executor
  bool serviceReadySent = false;
  std::map<std::string, double> received;  // dataID -> time the sensory data arrived
};

class Master final : public Component {
 public:
  Master(Environment& env, const std::string& ip, std::optional<int> port, std::string hostID = {},
         MasterConfig cfg = {})
      : Component(env, Role::Master, ip, port, std::move(hostID)), cfg_(std::move(cfg)) {
    policy_ = init_scheduler_by_name(cfg_.schedulerName, cfg_.schedulerConfig);
    if (!policy_) throw std::invalid_argument("unknown scheduler '" + cfg_.schedulerName + "'");
    self_.componentID = "0";
    rename();
  }

  void start() override {
    ownProfile_ = env_.host_profile(self_.hostID);
    if (cfg_.creator) send(*cfg_.creator, kind::getProfiles, {{"reason", "scaling"}});
    if (cfg_.profileIntervalMs > 0.0) profile_tick();
    if (!cfg_.discoveryTargets.empty() && cfg_.discoveryIntervalMs > 0.0) {
      discoveryTimer_ = after(cfg_.discoveryIntervalMs, [this] { discovery_tick(); });
    }
  }

  [[nodiscard]] const MasterConfig& config() const { return cfg_; }
  [[nodiscard]] const SchedulerPolicy& policy() const { return *policy_; }
  [[nodiscard]] const std::map<Address, RegistrationRecord>& registry() const { return registry_; }
  [[nodiscard]] const std::map<Address, ExecutorRecord>& executors() const { return executors_; }
  [[nodiscard]] const std::map<std::string, UserSession>& sessions() const { return sessions_; }
  [[nodiscard]] const std::deque<PlacementQueueEntry>& queue() const { return queue_; }
  [[nodiscard]] const std::vector<Decision>& decisions() const { return decisions_; }
  [[nodiscard]] std::size_t discovery_ticks() const { return discoveryTicks_; }

  [[nodiscard]] std::vector<ComponentIdentity> known_masters() const {
    std::vector<ComponentIdentity> out;
    for (const auto& [_, m] : knownMasters_) out.push_back(m);
    return out;
  }

  [[nodiscard]] std::vector<ComponentIdentity> actors() const {
    std::vector<ComponentIdentity> out;
    for (const auto& [_, r] : registry_) {
      if (r.identity.role == Role::Actor) out.push_back(r.identity);
    }
    return out;
  }

  [[nodiscard]] std::set<Address> actor_addresses() const {
    std::set<Address> out;
    for (const auto& a : actors()) out.insert(a.addr);
    return out;
  }

 protected:
  void on_message(const MessageEnvelope& e) override {
    observe_delay(e);
    if (answer_probe(e)) return;
    const auto k = e.kind();
    if (k == kind::registerComponent) {
      on_register(e);
    } else if (k == kind::deregister) {
      on_deregister(e);
    } else if (k == kind::lookup) {
      on_lookup(e);
    } else if (k == kind::ready) {
      on_ready(e);
    } else if (k == kind::sensoryData) {
      on_sensory_data(e);
    } else if (k == kind::finalResult) {
      on_final_result(e);
    } else if (k == kind::waiting) {
      on_waiting(e);
    } else if (k == kind::terminated) {
      on_terminated(e);
    } else if (k == kind::error) {
      on_error(e);
    } else if (k == kind::allResourcesProfiles) {
      on_profiles(e.data.at("profiles"));
    } else if (k == kind::getProfiles) {
      on_get_profiles(e);
    } else if (k == kind::profilesInfo) {
      on_profiles_info(e);
    } else if (k == kind::probeResult) {
      on_probe_result(e);
    } else if (k == kind::requestActorsInfo) {
      on_request_actors_info(e);
    } else if (k == kind::actorsInfo) {
      on_actors_info(e);
    } else {
      spdlog::debug("{} ignores {}", self_.name, k.str());
    }
  }

 private:
  // --- registry ----------------------------------------------------------------

  ComponentIdentity assign(const ComponentIdentity& who) {
    if (auto it = registry_.find(who.addr); it != registry_.end() && it->second.identity.role == who.role) {
      spdlog::warn("{} replaces live registration of {}", self_.name, it->second.identity.name);
      drop_record(who.addr);
    }
    ComponentIdentity id = who;
    id.componentID = std::to_string(nextID_++);
    refresh_names(id, &self_);
    registry_[id.addr] = RegistrationRecord{id, env_.now_ms(), std::nullopt, {}};
    return id;
  }

  void drop_record(const Address& addr) {
    if (auto it = registry_.find(addr); it != registry_.end() && it->second.identity.role == Role::User) {
      end_session(it->second.identity.componentID);
    }
    registry_.erase(addr);
  }

  void on_register(const MessageEnvelope& e) {
    switch (e.source.role) {
      case Role::Actor: register_actor(e); break;
      case Role::TaskExecutor: register_executor(e); break;
      case Role::User: register_user(e); break;
      default: reply_error(e, "refused", "role cannot register");
    }
  }

  void register_actor(const MessageEnvelope& e) {
    // An actor imported from a peer master answers advertiseMaster by registering; keep its ID.
    auto known = registry_.find(e.source.addr);
    bool imported = known != registry_.end() && known->second.identity.role == Role::Actor && !known->second.confirmed;
    auto id = imported ? known->second.identity : assign(e.source);
    auto& rec = registry_[id.addr];
    rec.confirmed = true;
    if (e.data.contains("resources")) {
      try {
        rec.lastProfile = clamp_profile(e.data.at("resources").get<HostProfile>());
      } catch (const std::exception& ex) {
        spdlog::warn("{} ignores bad profile from {}: {}", self_.name, id.name, ex.what());
      }
    }
    send(id, kind::registered, {{"identity", id}});
    retry_waiting_placements();
  }

  void register_executor(const MessageEnvelope& e) {
    auto id = assign(e.source);
    ExecutorRecord x;
    x.identity = id;
    x.taskName = e.data.value("taskName", std::string{});
    x.applicationName = e.data.value("applicationName", std::string{});
    x.userID = e.data.value("userID", std::string{});
    x.actor = e.data.value("actor", Address{});
    executors_[id.addr] = x;
    if (auto a = registry_.find(x.actor); a != registry_.end()) a->second.hostedExecutors.push_back(id.addr);
    if (auto s = sessions_.find(x.userID); s != sessions_.end()) s->second.executors[x.taskName] = id.addr;
    send(id, kind::registered, {{"identity", id}});
    answer_pending_lookups();
  }

  void register_user(const MessageEnvelope& e) {
    const std::string appName = e.data.value("applicationName", std::string{});
    auto app = find_application(appName, cfg_.gameOfLifeTasks);
    if (!app) {
      reply_error(e, "unknownApplication", appName);
      return;
    }
    auto id = assign(e.source);
    send(id, kind::registered, {{"identity", id}});
    PlacementQueueEntry entry{id, appName, e.data.value("applicationLabel", std::string{}), env_.now_ms()};
    UserSession s;
    s.user = id;
    s.applicationName = appName;
    s.label = entry.label;
    s.app = *app;
    sessions_[id.componentID] = std::move(s);
    request_placement(entry);
  }

  void on_deregister(const MessageEnvelope& e) {
    if (auto it = registry_.find(e.source.addr); it != registry_.end() && it->second.identity.role == Role::User) {
      drop_record(e.source.addr);
    }
  }

  void end_session(const std::string& userID) {
    sessions_.erase(userID);
    std::erase_if(queue_, [&](const PlacementQueueEntry& q) { return q.user.componentID == userID; });
    std::erase_if(awaitingActors_, [&](const PlacementQueueEntry& q) { return q.user.componentID == userID; });
  }

  // --- placement -----------------------------------------------------------------

  [[nodiscard]] bool has_capacity() const {
    return queue_.size() < cfg_.queueCapacity && ownProfile_.cpu.utilization < cfg_.cpuThreshold;
  }

  void request_placement(const PlacementQueueEntry& entry) {
    if (!has_capacity()) {
      scale_out(entry);
      return;
    }
    queue_.push_back(entry);
    place(entry);
  }

  SchedulingContext context_for(const UserSession& s) const {
    SchedulingContext ctx;
    ctx.userID = s.user.componentID;
    ctx.app = s.app;
    ctx.originHostID = s.user.hostID;
    std::set<std::string> hosts;
    for (const auto& [addr, r] : registry_) {
      if (r.identity.role != Role::Actor) continue;
      hosts.insert(r.identity.hostID);
      ctx.model.set_host(r.identity.hostID, r.lastProfile ? *r.lastProfile : env_.host_profile(r.identity.hostID));
    }
    ctx.actorHostIDs.assign(hosts.begin(), hosts.end());
    for (const auto& [key, ms] : history_) {
      for (double v : ms) ctx.model.record(key.first, key.second, v);
    }
    ctx.links = links_;
    return ctx;
  }

  /// First-registered actor on `hostID`.
  [[nodiscard]] const RegistrationRecord* actor_on(const std::string& hostID) const {
    const RegistrationRecord* best = nullptr;
    for (const auto& [_, r] : registry_) {
      if (r.identity.role != Role::Actor || r.identity.hostID != hostID) continue;
      if (best == nullptr || std::stoll(r.identity.componentID) < std::stoll(best->identity.componentID)) best = &r;
    }
    return best;
  }

  void place(const PlacementQueueEntry& entry) {
    auto sit = sessions_.find(entry.user.componentID);
    if (sit == sessions_.end()) return;
    UserSession& s = sit->second;
    auto ctx = context_for(s);
    if (ctx.actorHostIDs.empty()) {
      // Wait for an actor to register, or for the user's timeout.
      awaitingActors_.push_back(entry);
      return;
    }
    try {
      s.decision = policy_->schedule(ctx);
    } catch (const std::exception& ex) {
      fail_placement(s.user.componentID, "schedulingFailed", ex.what());
      return;
    }
    decisions_.push_back(s.decision);
    for (const auto& task : s.decision.indexSequence) {
      const auto& host = s.decision.indexToHostID.at(task);
      if (!try_reuse(s, task, host)) run_executor(s, task, host);
    }
  }

  void retry_waiting_placements() {
    auto waiting = std::move(awaitingActors_);
    awaitingActors_.clear();
    for (const auto& q : waiting) place(q);
  }

  void fail_placement(const std::string& userID, const std::string& reason, const std::string& detail) {
    auto it = sessions_.find(userID);
    if (it == sessions_.end()) return;
    send(it->second.user, kind::error, {{"reason", reason}, {"detail", detail}, {"userID", userID}});
    std::erase_if(queue_, [&](const PlacementQueueEntry& q) { return q.user.componentID == userID; });
  }

  bool try_reuse(UserSession& s, const std::string& task, const std::string& preferredHost) {
    ExecutorRecord* pick = nullptr;
    for (auto& [addr, x] : executors_) {
      if (!x.cooling || x.taskName != task || x.applicationName != s.applicationName) continue;
      if (pick == nullptr || (x.identity.hostID == preferredHost && pick->identity.hostID != preferredHost)) pick = &x;
    }
    if (pick == nullptr) return false;
    ExecutorRecord& x = *pick;
    x.cooling = false;
    x.ready = false;
    x.reusedFrom = x.userID;
    x.userID = s.user.componentID;
    s.executors[task] = x.identity.addr;
    auto r = send(x.identity, kind::reuse,
                  {{"userID", s.user.componentID}, {"taskName", task}, {"applicationName", s.applicationName}});
    if (!r) {
      forget_executor(x.identity.addr);
      s.executors.erase(task);
      return false;
    }
    return true;
  }

  void run_executor(UserSession& s, const std::string& task, const std::string& host) {
    const auto* actor = actor_on(host);
    if (actor == nullptr) {
      fail_placement(s.user.componentID, "placementFailed", "no actor on host " + host);
      return;
    }
    ExecutorConfig c;
    c.taskName = task;
    c.userID = s.user.componentID;
    c.applicationName = s.applicationName;
    c.master = self_.addr;
    c.actor = actor->identity.addr;
    c.remoteLogger = cfg_.remoteLogger;
    c.children = s.app.task_children(task);
    c.feedsActuator = s.app.feeds_actuator(task);
    c.parentCount = int(s.app.task_parents(task).size()) + (s.app.fed_by_sensor(task) ? 1 : 0);
    c.coolOffMs = cfg_.coolOffMs;
    c.idleMs = cfg_.executorIdleMs;
    s.executors.erase(task);
    auto r = send(actor->identity, kind::runTaskExecutor, Json(c));
    if (!r) fail_placement(s.user.componentID, "placementFailed", r.detail);
  }

  void on_error(const MessageEnvelope& e) {
    const std::string inReplyTo = e.data.value("inReplyTo", std::string{});
    if (e.source.role == Role::TaskExecutor && inReplyTo == kind::reuse.str()) {
      reuse_failed(e.source.addr);
      return;
    }
    if (e.source.role == Role::TaskExecutor) {
      // Execution errors go to the user that owns the data.
      auto it = sessions_.find(e.data.value("userID", std::string{}));
      if (it != sessions_.end()) send(it->second.user, kind::error, e.data);
      return;
    }
    if (e.source.role == Role::Actor && inReplyTo == kind::runTaskExecutor.str()) {
      fail_placement(e.data.value("userID", std::string{}), "placementFailed", e.data.value("detail", std::string{}));
      return;
    }
    spdlog::info("{} got error from {}: {}", self_.name, e.source.name, e.data.dump());
  }

  void reuse_failed(const Address& addr) {
    auto it = executors_.find(addr);
    if (it == executors_.end()) return;
    ExecutorRecord x = it->second;
    if (x.reusedFrom) {
      it->second.userID = *x.reusedFrom;
      it->second.reusedFrom.reset();
      it->second.ready = true;
    }
    auto s = sessions_.find(x.userID);
    if (s == sessions_.end()) return;
    const auto& d = s->second.decision.indexToHostID;
    auto host = d.find(x.taskName);
    run_executor(s->second, x.taskName, host != d.end() ? host->second : x.identity.hostID);
  }

  void forget_executor(const Address& addr) {
    auto it = executors_.find(addr);
    if (it == executors_.end()) return;
    if (auto a = registry_.find(it->second.actor); a != registry_.end()) {
      std::erase(a->second.hostedExecutors, addr);
    }
    executors_.erase(it);
    registry_.erase(addr);
  }

  // --- executor bootstrap ---------------------------------------------------------

  void on_lookup(const MessageEnvelope& e) {
    pendingLookups_.push_back(e);
    answer_pending_lookups();
  }

  void answer_pending_lookups() {
    std::vector<MessageEnvelope> still;
    for (auto& e : pendingLookups_) {
      auto s = sessions_.find(e.data.value("userID", std::string{}));
      if (s == sessions_.end()) continue;
      Json children = Json::object();
      bool complete = true;
      for (const auto& c : e.data.at("children")) {
        auto name = c.get<std::string>();
        auto x = s->second.executors.find(name);
        if (x == s->second.executors.end() || !executors_.contains(x->second)) {
          complete = false;
          break;
        }
        children[name] = executors_.at(x->second).identity;
      }
      if (!complete) {
        still.push_back(std::move(e));
        continue;
      }
      send(e.source, kind::lookup, {{"userID", s->first}, {"children", children}});
    }
    pendingLookups_ = std::move(still);
  }

  void on_ready(const MessageEnvelope& e) {
    auto it = executors_.find(e.source.addr);
    if (it == executors_.end()) {
      spdlog::info("{} ignores ready from unknown {}", self_.name, e.source.name);
      return;
    }
    it->second.ready = true;
    it->second.reusedFrom.reset();
    auto s = sessions_.find(it->second.userID);
    if (s == sessions_.end()) return;
    check_service_ready(s->second);
  }

  void check_service_ready(UserSession& s) {
    if (s.serviceReadySent) return;
    for (const auto& t : s.app.task_names()) {
      auto x = s.executors.find(t);
      if (x == s.executors.end()) return;
      auto r = executors_.find(x->second);
      if (r == executors_.end() || !r->second.ready || r->second.userID != s.user.componentID) return;
    }
    s.serviceReadySent = true;
    std::erase_if(queue_, [&](const PlacementQueueEntry& q) { return q.user.componentID == s.user.componentID; });
    send(s.user, kind::serviceReady, {{"userID", s.user.componentID}, {"applicationName", s.applicationName}});
  }

  // --- data ---------------------------------------------------------------------

  void on_sensory_data(const MessageEnvelope& e) {
    auto reg = registry_.find(e.source.addr);
    if (reg == registry_.end() || reg->second.identity.role != Role::User) {
      reply_error(e, "notRegistered");
      return;
    }
    auto s = sessions_.find(reg->second.identity.componentID);
    if (s == sessions_.end() || !s->second.serviceReadySent) {
      reply_error(e, "notReady", "service is not ready");
      return;
    }
    UserSession& us = s->second;
    std::vector<const ExecutorRecord*> entries;
    for (const auto& t : us.app.entryTasks) {
      auto x = us.executors.find(t);
      const ExecutorRecord* r = nullptr;
      if (x != us.executors.end()) {
        auto it = executors_.find(x->second);
        if (it != executors_.end() && it->second.userID == us.user.componentID) r = &it->second;
      }
      if (r == nullptr) {
        reply_error(e, "placementExpired", t);
        return;
      }
      entries.push_back(r);
    }
    // Executors of this placement are busy again.
    for (auto& [_, addr] : us.executors) {
      if (auto it = executors_.find(addr); it != executors_.end()) it->second.cooling = false;
    }
    const std::string dataID = e.data.value("dataID", std::to_string(++dataCounter_));
    us.received[dataID] = env_.now_ms();
    for (const auto* r : entries) {
      send(r->identity, kind::intermediateData,
           {{"userID", us.user.componentID},
            {"dataID", dataID},
            {"record", e.data.value("record", Json::object())},
            {"fromTask", kSensor}});
    }
  }

  void on_final_result(const MessageEnvelope& e) {
    const std::string userID = e.data.value("userID", std::string{});
    auto s = sessions_.find(userID);
    if (s == sessions_.end()) {
      spdlog::info("{} drops orphan result for user {}", self_.name, userID);
      log_event("orphanResult", {{"userID", userID}, {"from", e.source.name}});
      return;
    }
    const std::string dataID = e.data.value("dataID", std::string{});
    Json out{{"userID", userID},
             {"dataID", dataID},
             {"taskName", e.data.value("taskName", std::string{})},
             {"result", e.data.value("result", Json::object())}};
    send(s->second.user, kind::finalResult, out);
    if (cfg_.remoteLogger) {
      double t0 = s->second.received.contains(dataID) ? s->second.received.at(dataID) : e.sentAtSourceTimestamp;
      send(Role::RemoteLogger, *cfg_.remoteLogger, kind::responseTime,
           {{"userID", userID},
            {"applicationName", s->second.applicationName},
            {"dataID", dataID},
            {"taskName", out["taskName"]},
            {"responseTime", env_.now_ms() - t0}});
    }
  }

  void log_event(const std::string& what, Json detail) {
    if (!cfg_.remoteLogger) return;
    send(Role::RemoteLogger, *cfg_.remoteLogger, kind::event, {{"event", what}, {"detail", std::move(detail)}});
  }

  // --- cool-off pool ----------------------------------------------------------------

  void on_waiting(const MessageEnvelope& e) {
    auto it = executors_.find(e.source.addr);
    if (it == executors_.end()) return;
    for (const auto& d : e.data.value("durations", Json::array())) {
      history_[{it->second.taskName, it->second.identity.hostID}].push_back(d.get<double>());
    }
    it->second.cooling = true;
    send(it->second.identity, kind::wait, {{"coolOffDuration", cfg_.coolOffMs}});
  }

  void on_terminated(const MessageEnvelope& e) { forget_executor(e.source.addr); }

  // --- profiling ------------------------------------------------------------------

  void profile_tick() {
    ownProfile_ = env_.host_profile(self_.hostID);
    if (cfg_.remoteLogger) {
      send(Role::RemoteLogger, *cfg_.remoteLogger, kind::hostResources, {{"resources", ownProfile_}});
      send(Role::RemoteLogger, *cfg_.remoteLogger, kind::requestProfiles, {});
    }
    profileTimer_ = after(cfg_.profileIntervalMs, [this] { profile_tick(); });
  }

  void on_profiles(const Json& profiles) {
    for (auto& [addr, r] : registry_) {
      if (r.identity.role != Role::Actor || !profiles.contains(r.identity.hostID)) continue;
      try {
        r.lastProfile = clamp_profile(profiles.at(r.identity.hostID).get<HostProfile>());
      } catch (const std::exception& ex) {
        spdlog::warn("{} ignores profile of {}: {}", self_.name, r.identity.hostID, ex.what());
      }
    }
  }

  void observe_delay(const MessageEnvelope& e) {
    if (e.source.hostID.empty() || e.source.hostID == self_.hostID || e.receivedAtLocalTimestamp == 0.0) return;
    auto d = measure_network_delay(e);
    if (!d.skewed) links_.set(self_.hostID, e.source.hostID, d.milliseconds);
  }

  // --- scaling --------------------------------------------------------------------

  void scale_out(const PlacementQueueEntry& entry) {
    std::string userID = entry.user.componentID;
    if (auto peer = policy_->get_best_master(known_masters())) {
      redirect(userID, *peer);
      return;
    }
    if (scaling_) {
      pendingRedirects_.push_back(userID);
      return;
    }
    std::vector<ScaleCandidate> candidates;
    for (const auto& [_, r] : registry_) {
      if (r.identity.role != Role::Actor) continue;
      double u = r.lastProfile ? r.lastProfile->cpu.utilization : env_.host_profile(r.identity.hostID).cpu.utilization;
      candidates.push_back({r.identity, u});
    }
    auto pick = policy_->prepare_scaler().choose(candidates);
    if (!pick) {
      fail_placement(userID, "saturated", "no peer masters and no actors");
      end_session(userID);
      return;
    }
    MasterConfig child = cfg_;
    child.discoveryTargets.clear();
    child.creator = self_;
    scaling_ = true;
    pendingRedirects_.push_back(userID);
    auto r = send(candidates[*pick].actor, kind::initNewMaster, {{"config", Json(child)}});
    if (!r) {
      scaling_ = false;
      for (const auto& u : std::exchange(pendingRedirects_, {})) {
        fail_placement(u, "saturated", r.detail);
        end_session(u);
      }
    }
  }

  void redirect(const std::string& userID, const ComponentIdentity& to) {
    auto it = sessions_.find(userID);
    if (it == sessions_.end()) return;
    ComponentIdentity user = it->second.user;
    send(user, kind::redirect, {{"userID", userID}, {"master", to}});
    drop_record(user.addr);
  }

  void on_get_profiles(const MessageEnvelope& e) {
    if (e.source.role != Role::Master) {
      reply_error(e, "refused");
      return;
    }
    Json actorsJson = Json::array();
    Json profiles = Json::object();
    for (const auto& [_, r] : registry_) {
      if (r.identity.role != Role::Actor) continue;
      actorsJson.push_back(r.identity);
      profiles[r.identity.hostID] = r.lastProfile ? *r.lastProfile : env_.host_profile(r.identity.hostID);
    }
    send(e.source, kind::profilesInfo, {{"actors", actorsJson}, {"profiles", profiles}});
    knownMasters_[e.source.addr] = e.source;
    if (scaling_) {
      scaling_ = false;
      for (const auto& u : std::exchange(pendingRedirects_, {})) redirect(u, e.source);
    }
  }

  void on_profiles_info(const MessageEnvelope& e) {
    knownMasters_[e.source.addr] = e.source;
    for (const auto& a : e.data.value("actors", Json::array())) {
      auto actor = a.get<ComponentIdentity>();
      if (registry_.contains(actor.addr)) continue;
      auto id = assign(actor);
      auto& rec = registry_[id.addr];
      rec.confirmed = false;
      const auto& profiles = e.data.value("profiles", Json::object());
      if (profiles.contains(actor.hostID)) rec.lastProfile = profiles.at(actor.hostID).get<HostProfile>();
      send(id, kind::advertiseMaster, {{"master", self_}});
    }
    retry_waiting_placements();
  }

  // --- discovery ------------------------------------------------------------------

  void discovery_tick() {
    ++discoveryTicks_;
    for (const auto& t : cfg_.discoveryTargets) {
      for (int p = t.from; p <= t.to; ++p) {
        Address a{t.ip, p};
        if (a == self_.addr) continue;
        send(Role::Actor, a, kind::probeTry, {});
      }
    }
    for (const auto& [_, m] : knownMasters_) send(m, kind::requestActorsInfo, actors_payload());
    discoveryTimer_ = after(cfg_.discoveryIntervalMs, [this] { discovery_tick(); });
  }

  void on_probe_result(const MessageEnvelope& e) {
    if (e.source.role == Role::Actor) {
      if (!actor_addresses().contains(e.source.addr)) send(e.source, kind::advertiseMaster, {{"master", self_}});
    } else if (e.source.role == Role::Master && e.source.addr != self_.addr) {
      if (!knownMasters_.contains(e.source.addr)) {
        knownMasters_[e.source.addr] = e.source;
        send(e.source, kind::requestActorsInfo, actors_payload());
      }
    }
  }

  [[nodiscard]] Json actors_payload() const {
    Json list = Json::array();
    for (const auto& a : actors()) list.push_back(a);
    return Json{{"actors", list}};
  }

  void advertise_to_unknown(const Json& actorList) {
    auto mine = actor_addresses();
    for (const auto& a : actorList) {
      auto actor = a.get<ComponentIdentity>();
      if (!mine.contains(actor.addr)) send(actor, kind::advertiseMaster, {{"master", self_}});
    }
  }

  // Both directions carry the sender's actors, so one round trip merges the sets.
  void on_request_actors_info(const MessageEnvelope& e) {
    send(e.source, kind::actorsInfo, actors_payload());
    knownMasters_[e.source.addr] = e.source;
    advertise_to_unknown(e.data.value("actors", Json::array()));
  }

  void on_actors_info(const MessageEnvelope& e) {
    knownMasters_[e.source.addr] = e.source;
    advertise_to_unknown(e.data.value("actors", Json::array()));
  }

  MasterConfig cfg_;
  std::unique_ptr<SchedulerPolicy> policy_;
  HostProfile ownProfile_;
  std::uint64_t nextID_ = 1;
  std::uint64_t dataCounter_ = 0;
  std::map<Address, RegistrationRecord> registry_;
  std::map<Address, ExecutorRecord> executors_;
  std::map<std::string, UserSession> sessions_;
  std::deque<PlacementQueueEntry> queue_;
  std::vector<PlacementQueueEntry> awaitingActors_;
  std::vector<MessageEnvelope> pendingLookups_;
  std::vector<Decision> decisions_;
  std::map<std::pair<std::string, std::string>, std::vector<double>> history_;
  LinkLatencyTable links_;
  std::map<Address, ComponentIdentity> knownMasters_;
  bool scaling_ = false;
  std::vector<std::string> pendingRedirects_;
  std::size_t discoveryTicks_ = 0;
  std::optional<TimerId> profileTimer_, discoveryTimer_;
};

}  // namespace fogbus
