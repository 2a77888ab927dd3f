#pragma once

#include <chrono>
#include <deque>
#include <map>
#include <optional>
#include <set>
#include <stdexcept>
#include <string>
#include <vector>

#include <spdlog/spdlog.h>

#include "fogbus/appmodel.hpp"
#include "fogbus/component.hpp"

namespace fogbus {

// ============================================================================
// Lifecycle
// ============================================================================

enum class ExecState { Starting, AwaitingChildren, Ready, Serving, AskingToWait, CoolingOff, Terminated };

inline std::string_view to_string(ExecState s) {
  switch (s) {
    case ExecState::Starting: return "Starting";
    case ExecState::AwaitingChildren: return "AwaitingChildren";
    case ExecState::Ready: return "Ready";
    case ExecState::Serving: return "Serving";
    case ExecState::AskingToWait: return "AskingToWait";
    case ExecState::CoolingOff: return "CoolingOff";
    case ExecState::Terminated: return "Terminated";
  }
  return "?";
}

struct IllegalTransition : std::logic_error {
  using std::logic_error::logic_error;
};

class ExecutorLifecycle {
 public:
  explicit ExecutorLifecycle(std::string userID = {}) : servedUserID_(std::move(userID)) {}

  [[nodiscard]] static bool legal(ExecState from, ExecState to) {
    using S = ExecState;
    switch (from) {
      case S::Starting: return to == S::AwaitingChildren || to == S::Terminated;
      case S::AwaitingChildren: return to == S::Ready || to == S::Terminated;
      case S::Ready: return to == S::Serving;
      case S::Serving: return to == S::AskingToWait;
      case S::AskingToWait: return to == S::CoolingOff || to == S::Terminated;
      case S::CoolingOff: return to == S::Serving || to == S::Terminated;
      case S::Terminated: return false;
    }
    return false;
  }

  [[nodiscard]] ExecState state() const { return state_; }
  [[nodiscard]] const std::string& served_user() const { return servedUserID_; }
  [[nodiscard]] std::optional<double> cool_off_deadline() const { return deadline_; }
  [[nodiscard]] const std::vector<std::pair<ExecState, ExecState>>& history() const { return history_; }
  [[nodiscard]] bool can(ExecState to) const { return legal(state_, to); }
  /// Attempted transitions that were refused.
  [[nodiscard]] std::size_t rejected() const { return rejected_; }

  void transition(ExecState to) {
    if (!legal(state_, to)) {
      ++rejected_;
      throw IllegalTransition(std::string("illegal transition ") + std::string(to_string(state_)) + " -> " +
                              std::string(to_string(to)));
    }
    history_.emplace_back(state_, to);
    state_ = to;
    if (to != ExecState::CoolingOff) deadline_.reset();
  }

  void enter_cool_off(double deadline) {
    transition(ExecState::CoolingOff);
    deadline_ = deadline;
  }

  /// Reuse: the only way the served user changes.
  void rebind(std::string userID) {
    if (state_ != ExecState::CoolingOff) {
      ++rejected_;
      throw IllegalTransition("reuse outside CoolingOff");
    }
    transition(ExecState::Serving);
    servedUserID_ = std::move(userID);
  }

 private:
  ExecState state_ = ExecState::Starting;
  std::string servedUserID_;
  std::optional<double> deadline_;
  std::vector<std::pair<ExecState, ExecState>> history_;
  std::size_t rejected_ = 0;
};

// ============================================================================
// Executor
// ============================================================================

struct ExecutorConfig {
  std::string taskName;
  std::string userID;
  std::string applicationName;
  Address master;
  Address actor;
  std::optional<Address> remoteLogger;
  std::vector<std::string> children;  // task children; Actuator excluded
  bool feedsActuator = false;
  int parentCount = 1;  // task parents plus one for the Sensor
  double idleMs = 2000.0;
  double coolOffMs = 10000.0;
  double waitTimeoutMs = 5000.0;
  double lookupTimeoutMs = 5000.0;
  int lookupRetries = 3;
};

inline void to_json(Json& j, const ExecutorConfig& c) {
  j = Json{{"taskName", c.taskName},       {"userID", c.userID},
           {"applicationName", c.applicationName}, {"master", c.master},
           {"actor", c.actor},             {"children", c.children},
           {"feedsActuator", c.feedsActuator}, {"parentCount", c.parentCount},
           {"idleMs", c.idleMs},           {"coolOffMs", c.coolOffMs},
           {"waitTimeoutMs", c.waitTimeoutMs}, {"lookupTimeoutMs", c.lookupTimeoutMs},
           {"lookupRetries", c.lookupRetries}};
  if (c.remoteLogger) j["remoteLogger"] = *c.remoteLogger;
}

inline void from_json(const Json& j, ExecutorConfig& c) {
  ExecutorConfig d;
  c.taskName = j.at("taskName").get<std::string>();
  c.userID = j.at("userID").get<std::string>();
  c.applicationName = j.at("applicationName").get<std::string>();
  c.master = j.at("master").get<Address>();
  c.actor = j.value("actor", Address{});
  c.children = j.value("children", std::vector<std::string>{});
  c.feedsActuator = j.value("feedsActuator", false);
  c.parentCount = j.value("parentCount", 1);
  c.idleMs = j.value("idleMs", d.idleMs);
  c.coolOffMs = j.value("coolOffMs", d.coolOffMs);
  c.waitTimeoutMs = j.value("waitTimeoutMs", d.waitTimeoutMs);
  c.lookupTimeoutMs = j.value("lookupTimeoutMs", d.lookupTimeoutMs);
  c.lookupRetries = j.value("lookupRetries", d.lookupRetries);
  if (j.contains("remoteLogger")) c.remoteLogger = j.at("remoteLogger").get<Address>();
}

/// One execution as observed by the executor: whose payload ran while bound to whom.
struct ExecutionRecord {
  std::string payloadUserID;
  std::string servedUserID;
  std::string dataID;
};

class TaskExecutor final : public Component {
 public:
  TaskExecutor(Environment& env, const std::string& ip, std::optional<int> port, std::string hostID,
               ExecutorConfig cfg)
      : Component(env, Role::TaskExecutor, ip, port, std::move(hostID)),
        cfg_(std::move(cfg)),
        life_(cfg_.userID),
        task_(init_task(cfg_.taskName)) {}

  void start() override {
    if (task_ == nullptr) {
      reply_to_master(kind::error, {{"reason", "unknownTask"}, {"taskName", cfg_.taskName}});
      terminate("unknown task");
      return;
    }
    send(Role::Master, cfg_.master, kind::registerComponent,
         {{"taskName", cfg_.taskName},
          {"userID", cfg_.userID},
          {"applicationName", cfg_.applicationName},
          {"actor", cfg_.actor}});
    registrationTimer_ = after(cfg_.lookupTimeoutMs, [this] {
      registrationTimer_.reset();
      if (life_.state() == ExecState::Starting) terminate("registration timed out");
    });
  }

  [[nodiscard]] const ExecutorConfig& config() const { return cfg_; }
  [[nodiscard]] const ExecutorLifecycle& lifecycle() const { return life_; }
  [[nodiscard]] ExecState state() const { return life_.state(); }
  [[nodiscard]] const std::vector<ExecutionRecord>& executions() const { return executions_; }
  [[nodiscard]] const std::map<std::string, ComponentIdentity>& children() const { return children_; }

 protected:
  void on_message(const MessageEnvelope& e) override {
    if (answer_probe(e)) return;
    const auto k = e.kind();
    if (k == kind::registered) {
      on_registered(e);
    } else if (k == kind::lookup) {
      on_lookup_reply(e);
    } else if (k == kind::intermediateData) {
      on_data(e);
    } else if (k == kind::wait) {
      on_wait(e);
    } else if (k == kind::reuse) {
      on_reuse(e);
    } else {
      spdlog::debug("{} ignores {}", self_.name, k.str());
    }
  }

  void on_stopped_message(const MessageEnvelope& e) override {
    if (e.kind() == kind::reuse) reply_error(e, "terminated", cfg_.taskName);
  }

 private:
  struct Pending {
    DataRecord record = DataRecord::object();
    int arrived = 0;
  };
  struct Job {
    std::string dataID;
    std::string userID;
    DataRecord record;
  };

  void reply_to_master(const MessageKind& k, Json data) {
    data["taskName"] = cfg_.taskName;
    data["applicationName"] = cfg_.applicationName;
    if (!data.contains("userID")) data["userID"] = life_.served_user();
    send(Role::Master, cfg_.master, k, std::move(data));
  }

  void on_registered(const MessageEnvelope& e) {
    if (life_.state() != ExecState::Starting) return;
    cancel(registrationTimer_);
    if (e.data.contains("identity")) {
      auto id = e.data.at("identity").get<ComponentIdentity>();
      self_.componentID = id.componentID;
      auto master = peer_identity(Role::Master, cfg_.master);
      rename(&master);
    }
    life_.transition(ExecState::AwaitingChildren);
    resolve_children();
  }

  /// Looks children up (if any); sends ready once they are known.
  void resolve_children() {
    children_.clear();
    if (cfg_.children.empty()) {
      children_ready();
      return;
    }
    lookupAttempts_ = 0;
    send_lookup();
  }

  void send_lookup() {
    ++lookupAttempts_;
    reply_to_master(kind::lookup, {{"children", cfg_.children}});
    lookupTimer_ = after(cfg_.lookupTimeoutMs, [this] {
      lookupTimer_.reset();
      if (lookupAttempts_ <= cfg_.lookupRetries) {
        send_lookup();
        return;
      }
      reply_to_master(kind::error, {{"reason", "lookupFailed"}});
      terminate("children lookup failed");
    });
  }

  void on_lookup_reply(const MessageEnvelope& e) {
    if (!childrenPending_ && life_.state() != ExecState::AwaitingChildren) return;
    if (e.data.value("userID", std::string{}) != life_.served_user()) return;
    std::map<std::string, ComponentIdentity> found;
    for (const auto& [name, id] : e.data.at("children").items()) found[name] = id.get<ComponentIdentity>();
    for (const auto& c : cfg_.children) {
      if (!found.contains(c)) return;  // incomplete; keep waiting
    }
    cancel(lookupTimer_);
    children_ = std::move(found);
    children_ready();
  }

  void children_ready() {
    if (life_.state() == ExecState::AwaitingChildren) life_.transition(ExecState::Ready);
    childrenPending_ = false;
    reply_to_master(kind::ready, {});
    drain_parked();
  }

  void on_data(const MessageEnvelope& e) {
    const std::string user = e.data.value("userID", std::string{});
    if (user != life_.served_user()) {
      reply_error(e, "wrongUser", "executor serves user " + life_.served_user());
      return;
    }
    if (life_.state() == ExecState::Terminated) return;
    parked_.push_back(e);
    drain_parked();
  }

  /// Accepts parked inputs once the executor can serve.
  void drain_parked() {
    while (!parked_.empty()) {
      auto s = life_.state();
      if (childrenPending_ || s == ExecState::Starting || s == ExecState::AwaitingChildren ||
          s == ExecState::AskingToWait || s == ExecState::Terminated) {
        return;
      }
      if (s == ExecState::Ready) life_.transition(ExecState::Serving);
      if (s == ExecState::CoolingOff) {
        cancel(coolOffTimer_);
        life_.transition(ExecState::Serving);
      }
      MessageEnvelope e = std::move(parked_.front());
      parked_.pop_front();
      accept(e);
    }
  }

  void accept(const MessageEnvelope& e) {
    cancel(idleTimer_);
    const std::string dataID = e.data.value("dataID", std::string{});
    auto& slot = pending_[dataID];
    try {
      merge_records(slot.record, e.data.value("record", DataRecord::object()));
    } catch (const std::exception& ex) {
      pending_.erase(dataID);
      reply_to_master(kind::error, {{"reason", "execError"}, {"dataID", dataID}, {"detail", ex.what()}});
      arm_idle();
      return;
    }
    if (++slot.arrived < cfg_.parentCount) return;
    jobs_.push_back({dataID, life_.served_user(), std::move(slot.record)});
    pending_.erase(dataID);
    run_next();
  }

  void run_next() {
    if (busy_ || jobs_.empty()) return;
    Job job = std::move(jobs_.front());
    jobs_.pop_front();
    busy_ = true;
    executions_.push_back({job.userID, life_.served_user(), job.dataID});

    auto wall0 = std::chrono::steady_clock::now();
    std::optional<DataRecord> out;
    std::string failure;
    try {
      out = task_->exec(job.record);
    } catch (const std::exception& ex) {
      failure = ex.what();
    }
    double wallMs = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - wall0).count();
    double ms = env_.execution_time_ms(task_->work, self_.hostID, wallMs);
    durations_.push_back(ms);

    auto finish = [this, job = std::move(job), out = std::move(out), failure = std::move(failure)]() mutable {
      busy_ = false;
      if (!failure.empty()) {
        reply_to_master(kind::error,
                        {{"reason", "execError"}, {"dataID", job.dataID}, {"userID", job.userID}, {"detail", failure}});
      } else if (out) {
        emit(job, *out);
      }
      if (jobs_.empty()) {
        arm_idle();
      } else {
        run_next();
      }
    };
    if (env_.simulated() && ms > 0.0) {
      after(ms, std::move(finish));
    } else {
      finish();
    }
  }

  void emit(const Job& job, const DataRecord& out) {
    for (const auto& c : cfg_.children) {
      send(children_.at(c), kind::intermediateData,
           {{"userID", job.userID}, {"dataID", job.dataID}, {"record", out}, {"fromTask", cfg_.taskName}});
    }
    if (cfg_.feedsActuator) {
      reply_to_master(kind::finalResult, {{"dataID", job.dataID}, {"userID", job.userID}, {"result", out}});
    }
  }

  void arm_idle() {
    cancel(idleTimer_);
    idleTimer_ = after(cfg_.idleMs, [this] {
      idleTimer_.reset();
      if (life_.state() != ExecState::Serving || busy_ || !jobs_.empty() || !pending_.empty()) return;
      cool_off_cycle();
    });
  }

  void cool_off_cycle() {
    life_.transition(ExecState::AskingToWait);
    flush_durations();
    reply_to_master(kind::waiting, {{"durations", recentDurations_}});
    recentDurations_.clear();
    waitTimer_ = after(cfg_.waitTimeoutMs, [this] {
      waitTimer_.reset();
      if (life_.state() == ExecState::AskingToWait) terminate("no wait reply");
    });
  }

  void flush_durations() {
    recentDurations_ = durations_;
    if (!durations_.empty() && cfg_.remoteLogger) {
      send(Role::RemoteLogger, *cfg_.remoteLogger, kind::executionDuration,
           {{"taskName", cfg_.taskName}, {"hostID", self_.hostID}, {"durations", durations_}});
    }
    durations_.clear();
  }

  void on_wait(const MessageEnvelope& e) {
    if (life_.state() != ExecState::AskingToWait) return;
    cancel(waitTimer_);
    double coolOff = e.data.value("coolOffDuration", cfg_.coolOffMs);
    life_.enter_cool_off(env_.now_ms() + coolOff);
    coolOffTimer_ = after(coolOff, [this] {
      coolOffTimer_.reset();
      if (life_.state() == ExecState::CoolingOff) terminate("cool-off elapsed");
    });
    drain_parked();
  }

  void on_reuse(const MessageEnvelope& e) {
    if (life_.state() != ExecState::CoolingOff) {
      reply_error(e, "notCoolingOff", std::string(to_string(life_.state())));
      return;
    }
    cancel(coolOffTimer_);
    // Inputs parked for the previous user can no longer be served.
    parked_.clear();
    life_.rebind(e.data.at("userID").get<std::string>());
    childrenPending_ = !cfg_.children.empty();
    if (childrenPending_) {
      resolve_children();
    } else {
      children_ready();
    }
    arm_idle();
  }

  void terminate(const std::string& why) {
    spdlog::debug("{} terminating: {}", self_.name, why);
    if (life_.state() != ExecState::Terminated) {
      if (life_.can(ExecState::Terminated)) {
        life_.transition(ExecState::Terminated);
      } else {
        // Ready/Serving exits go through the cool-off handshake first.
        return;
      }
    }
    for (auto* t : {&idleTimer_, &waitTimer_, &coolOffTimer_, &lookupTimer_, &registrationTimer_}) cancel(*t);
    flush_durations();
    Json data{{"taskName", cfg_.taskName}, {"applicationName", cfg_.applicationName},
              {"userID", life_.served_user()}, {"reason", why}};
    send(Role::Master, cfg_.master, kind::terminated, data);
    if (cfg_.actor.port != 0) send(Role::Actor, cfg_.actor, kind::terminated, data);
    mark_stopped();
  }

  ExecutorConfig cfg_;
  ExecutorLifecycle life_;
  const TaskDefinition* task_;
  std::map<std::string, ComponentIdentity> children_;
  bool childrenPending_ = false;
  int lookupAttempts_ = 0;
  std::deque<MessageEnvelope> parked_;
  std::map<std::string, Pending> pending_;
  std::deque<Job> jobs_;
  bool busy_ = false;
  std::vector<double> durations_;
  std::vector<double> recentDurations_;
  std::vector<ExecutionRecord> executions_;
  std::optional<TimerId> idleTimer_, waitTimer_, coolOffTimer_, lookupTimer_, registrationTimer_;
};

}  // namespace fogbus
