#pragma once

// Shared fixtures: a scriptable component, a small cluster description, and
// the executor lifecycle property driver.

#include <functional>
#include <random>
#include <string>
#include <vector>

#include "fogbus/fogbus.hpp"

namespace fogbus::testing {

/// Records everything it receives and sends whatever the test tells it to.
class Stub final : public Component {
 public:
  Stub(Environment& env, Role role, const std::string& ip, std::optional<int> port = std::nullopt)
      : Component(env, role, ip, port) {}

  std::vector<MessageEnvelope> inbox;
  std::function<void(Stub&, const MessageEnvelope&)> onMessage;

  SendResult tell(const ComponentIdentity& to, const MessageKind& k, Json data = Json::object()) {
    return send(to, k, std::move(data));
  }
  SendResult tell(Role role, const Address& to, const MessageKind& k, Json data = Json::object()) {
    return send(role, to, k, std::move(data));
  }

  [[nodiscard]] std::size_t count(const MessageKind& k) const {
    return std::size_t(std::count_if(inbox.begin(), inbox.end(), [&](const auto& e) { return e.kind() == k; }));
  }
  [[nodiscard]] std::vector<MessageEnvelope> of(const MessageKind& k) const {
    std::vector<MessageEnvelope> out;
    for (const auto& e : inbox) {
      if (e.kind() == k) out.push_back(e);
    }
    return out;
  }

 protected:
  void on_message(const MessageEnvelope& e) override {
    inbox.push_back(e);
    if (onMessage) onMessage(*this, e);
  }
};

/// Stub behaviour of a master towards executors: answers register and lookup.
inline void act_as_master(Stub& m, std::map<std::string, ComponentIdentity> children = {}) {
  int next = 1;
  m.onMessage = [next, children](Stub& self, const MessageEnvelope& e) mutable {
    if (e.kind() == kind::registerComponent) {
      auto id = e.source;
      id.componentID = std::to_string(next++);
      self.tell(e.source, kind::registered, {{"identity", id}});
    } else if (e.kind() == kind::lookup) {
      Json found = Json::object();
      for (const auto& c : e.data.at("children")) {
        auto name = c.get<std::string>();
        if (children.contains(name)) found[name] = children.at(name);
      }
      self.tell(e.source, kind::lookup, {{"userID", e.data.at("userID")}, {"children", found}});
    }
  };
}

inline Json host_profile_json(int cores, double mhz, double cpu, double mem, double maxBytes = 4294967296.0) {
  return Json{{"cpu", {{"cores", cores}, {"frequency", mhz}, {"utilization", cpu}, {"utilizationPeak", 1.0}}},
              {"memory", {{"maximum", maxBytes}, {"utilization", mem}, {"utilizationPeak", 1.0}}}};
}

/// One master and remote logger on "server", `actors` actors on edge hosts, a phone for users.
inline Json cluster_json(int actors, std::uint64_t seed = 1, Json masterConfig = Json::object()) {
  Json hosts = Json::object();
  hosts["server"] = {{"ip", "10.0.0.1"}, {"profile", host_profile_json(8, 2400, 0.1, 0.3, 17179869184.0)}};
  hosts["phone"] = {{"ip", "10.0.0.100"}};
  Json comps = Json::array();
  comps.push_back({{"name", "logger"}, {"role", "RemoteLogger"}, {"host", "server"}, {"port", 5000}});
  comps.push_back({{"name", "master"},
                   {"role", "Master"},
                   {"host", "server"},
                   {"port", 5001},
                   {"remoteLogger", "logger"},
                   {"config", masterConfig}});
  for (int i = 1; i <= actors; ++i) {
    std::string h = "edge" + std::to_string(i);
    hosts[h] = {{"ip", "10.0.0." + std::to_string(10 + i)},
                {"profile", host_profile_json(2 + 2 * (i % 3), 1200.0 + 200.0 * i, 0.05 * (i % 4), 0.3)}};
    comps.push_back({{"name", "actor" + std::to_string(i)},
                     {"role", "Actor"},
                     {"host", h},
                     {"master", "master"},
                     {"remoteLogger", "logger"}});
  }
  return Json{{"name", "cluster"}, {"seed", seed},        {"horizonMs", 20000},       {"defaultLatencyMs", 2},
              {"hosts", hosts},    {"components", comps}, {"assertions", Json::array()}};
}

inline Json user_json(const std::string& name, const std::string& app, double startAtMs, Json inputs,
                      Json config = Json::object()) {
  return Json{{"name", name},
              {"role", "User"},
              {"host", "phone"},
              {"master", "master"},
              {"remoteLogger", "logger"},
              {"applicationName", app},
              {"applicationLabel", "480"},
              {"startAtMs", startAtMs},
              {"inputs", std::move(inputs)},
              {"config", std::move(config)}};
}

// ---------------------------------------------------------------------------
// Executor lifecycle property

struct LifecycleOutcome {
  std::size_t events = 0;
  std::size_t transitions = 0;
  std::size_t illegal = 0;      // history entries outside the relation
  std::size_t rejected = 0;     // refused transition attempts
  std::size_t mixedUsers = 0;   // executions whose payload belongs to another user
  std::size_t wrongResults = 0; // results reported under a user other than the payload's
  std::size_t silentRebinds = 0;  // served user changed other than via reuse
  std::size_t reuses = 0;
  bool terminated = false;
};

/// Drives one real executor with a random event sequence from a scripted master.
inline LifecycleOutcome run_lifecycle_sequence(std::uint64_t seed, std::size_t length = 40) {
  std::mt19937_64 rng(seed);
  SimNetConfig net;
  net.seed = seed;
  SimEnvironment env(net);
  Stub master(env, Role::Master, "10.0.0.1", 5001);
  Stub actor(env, Role::Actor, "10.0.0.2", 50000);
  Stub child(env, Role::TaskExecutor, "10.0.0.3", 50201);
  bool withChild = (rng() % 2) == 0;
  act_as_master(master, {{"NaiveFormula1", child.identity()}});

  ExecutorConfig c;
  c.taskName = "NaiveFormula0";
  c.userID = "1";
  c.applicationName = withChild ? "NaiveFormulaSerialized" : "NaiveFormulaParallelized";
  c.master = master.address();
  c.actor = actor.address();
  if (withChild) c.children = {"NaiveFormula1"};
  c.feedsActuator = !withChild;
  c.idleMs = 50;
  c.coolOffMs = 200;
  c.waitTimeoutMs = 100;
  TaskExecutor x(env, "10.0.0.2", std::nullopt, "edge", c);
  x.start();
  env.run_for(10);

  LifecycleOutcome out;
  std::vector<std::string> users{"1", "2", "3"};
  std::string expectedUser = "1";
  int dataSeq = 0;
  for (std::size_t i = 0; i < length; ++i) {
    ++out.events;
    const auto& u = users[rng() % users.size()];
    switch (rng() % 6) {
      case 0:
      case 1: {
        std::string dataID = u + "#" + std::to_string(dataSeq++);
        master.tell(x.identity(), kind::intermediateData,
                    {{"userID", u}, {"dataID", dataID}, {"record", {{"a", 1}, {"b", 2}, {"c", 3}}},
                     {"fromTask", "Sensor"}});
        break;
      }
      case 2:
        master.tell(x.identity(), kind::wait, {{"coolOffDuration", double(rng() % 300)}});
        break;
      case 3: {
        bool cooling = x.state() == ExecState::CoolingOff;
        master.tell(x.identity(), kind::reuse, {{"userID", u}, {"taskName", c.taskName}});
        env.run_for(1);
        if (cooling && x.lifecycle().served_user() == u) {
          expectedUser = u;
          ++out.reuses;
        }
        break;
      }
      case 4:
        master.tell(x.identity(), kind::registered, {{"identity", x.identity()}});
        break;
      default:
        break;
    }
    env.run_for(double(rng() % 120));
    if (x.lifecycle().served_user() != expectedUser) {
      ++out.silentRebinds;
      expectedUser = x.lifecycle().served_user();
    }
  }
  env.run_for(1000);

  for (const auto& [from, to] : x.lifecycle().history()) {
    if (!ExecutorLifecycle::legal(from, to)) ++out.illegal;
  }
  out.transitions = x.lifecycle().history().size();
  out.rejected = x.lifecycle().rejected();
  for (const auto& r : x.executions()) {
    if (r.payloadUserID != r.servedUserID) ++out.mixedUsers;
    if (r.dataID.substr(0, r.dataID.find('#')) != r.payloadUserID) ++out.mixedUsers;
  }
  auto check_owner = [&](const MessageEnvelope& e) {
    auto dataID = e.data.value("dataID", std::string{});
    auto user = e.data.value("userID", std::string{});
    if (dataID.substr(0, dataID.find('#')) != user) ++out.wrongResults;
  };
  for (const auto& e : master.of(kind::finalResult)) check_owner(e);
  for (const auto& e : child.of(kind::intermediateData)) check_owner(e);
  out.terminated = x.state() == ExecState::Terminated;
  return out;
}

}  // namespace fogbus::testing
