#pragma once

// Scripted clusters on the simulated network: scenario files, message
// traces and assertions over them.

#include <cmath>
#include <fstream>
#include <map>
#include <memory>
#include <optional>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "fogbus/actor.hpp"
#include "fogbus/master.hpp"
#include "fogbus/remote_logger.hpp"
#include "fogbus/sim_network.hpp"
#include "fogbus/user.hpp"

namespace fogbus {

struct ScenarioError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// ============================================================================
// Trace
// ============================================================================

struct TraceEntry {
  double timeMs = 0.0;  // since scenario start
  std::string source;
  std::string destination;
  Role sourceRole = Role::User;
  Role destinationRole = Role::User;
  Address sourceAddr;
  Address destinationAddr;
  MessageKind kind;
  Json data;
};

inline void to_json(Json& j, const TraceEntry& t) {
  j = Json{{"timeMs", t.timeMs},
           {"source", t.source},
           {"destination", t.destination},
           {"type", t.kind.type},
           {"subType", t.kind.subType},
           {"subSubType", t.kind.subSubType}};
}

using MessageTrace = std::vector<TraceEntry>;

/// "type/subType[/subSubType]"; any part may be "*". A missing subSubType matches any.
struct KindPattern {
  std::string type = "*";
  std::string subType = "*";
  std::optional<std::string> subSubType;

  static KindPattern parse(const std::string& s) {
    KindPattern p;
    std::vector<std::string> parts;
    std::stringstream in(s);
    for (std::string part; std::getline(in, part, '/');) parts.push_back(part);
    if (parts.empty() || parts.size() > 3) throw ScenarioError("bad message pattern '" + s + "'");
    p.type = parts[0];
    if (parts.size() > 1) p.subType = parts[1];
    if (parts.size() > 2) p.subSubType = parts[2];
    return p;
  }

  [[nodiscard]] bool matches(const MessageKind& k) const {
    auto eq = [](const std::string& pat, const std::string& v) { return pat == "*" || pat == v; };
    return eq(type, k.type) && eq(subType, k.subType) && (!subSubType || eq(*subSubType, k.subSubType));
  }
};

/// True iff `pattern` embeds in `trace` as a subsequence.
inline bool assert_sequence(const MessageTrace& trace, const std::vector<KindPattern>& pattern) {
  std::size_t i = 0;
  for (const auto& t : trace) {
    if (i == pattern.size()) break;
    if (pattern[i].matches(t.kind)) ++i;
  }
  return i == pattern.size();
}

inline bool assert_sequence(const MessageTrace& trace, const std::vector<std::string>& pattern) {
  std::vector<KindPattern> p;
  for (const auto& s : pattern) p.push_back(KindPattern::parse(s));
  return assert_sequence(trace, p);
}

inline std::size_t count_kind(const MessageTrace& trace, const std::string& pattern) {
  auto p = KindPattern::parse(pattern);
  return std::size_t(std::count_if(trace.begin(), trace.end(), [&](const TraceEntry& t) { return p.matches(t.kind); }));
}

/// Entries whose sender/receiver roles the catalog does not permit.
inline std::vector<TraceEntry> route_violations(const MessageTrace& trace) {
  std::vector<TraceEntry> out;
  for (const auto& t : trace) {
    const auto* entry = classify(t.kind);
    if (entry == nullptr || !entry->permits(t.sourceRole, t.destinationRole)) out.push_back(t);
  }
  return out;
}

/// The interaction pattern of one NaiveFormulaParallelized request.
inline std::vector<std::string> request_flow_pattern(std::size_t tasks = 3) {
  std::vector<std::string> p{"registration/register"};
  for (std::size_t i = 0; i < tasks; ++i) p.push_back("placement/runTaskExecutor");
  for (std::size_t i = 0; i < tasks; ++i) p.push_back("acknowledgement/ready");
  p.push_back("acknowledgement/serviceReady");
  p.push_back("data/sensoryData");
  for (std::size_t i = 0; i < tasks; ++i) p.push_back("data/finalResult");
  return p;
}

// ============================================================================
// Scenario
// ============================================================================

struct ScenarioHost {
  std::string ip;
  std::optional<HostProfile> profile;
};

struct ScenarioComponent {
  std::string name;
  Role role = Role::User;
  std::string host;
  std::optional<int> port;
  double startAtMs = 0.0;
  Json spec;  // the full component object
};

struct ScenarioStep {
  double atMs = 0.0;
  std::string action;
  Json spec;
};

struct Scenario {
  std::string name;
  std::uint64_t seed = 1;
  double horizonMs = 60000.0;
  std::size_t eventBudget = 100000;
  double defaultLatencyMs = 1.0;
  double sameHostLatencyMs = 0.0;
  double jitterMs = 0.0;
  std::map<std::string, ScenarioHost> hosts;
  Json links = Json::array();
  Json partitions = Json::array();
  std::vector<ScenarioComponent> components;
  std::vector<ScenarioStep> workload;
  Json assertions = Json::array();

  static Scenario from_json(const Json& j) {
    if (!j.is_object()) throw ScenarioError("scenario must be a JSON object");
    Scenario s;
    try {
      s.name = j.value("name", std::string{"scenario"});
      s.seed = j.value("seed", std::uint64_t{1});
      s.horizonMs = j.value("horizonMs", s.horizonMs);
      s.eventBudget = j.value("eventBudget", s.eventBudget);
      s.defaultLatencyMs = j.value("defaultLatencyMs", s.defaultLatencyMs);
      s.sameHostLatencyMs = j.value("sameHostLatencyMs", s.sameHostLatencyMs);
      s.jitterMs = j.value("jitterMs", s.jitterMs);
      const Json hosts = j.value("hosts", Json::object());
      for (const auto& [name, h] : hosts.items()) {
        ScenarioHost host;
        host.ip = h.at("ip").get<std::string>();
        if (h.contains("profile")) {
          host.profile = h.at("profile").get<HostProfile>();
          validate_profile(*host.profile);
        }
        s.hosts[name] = host;
      }
      s.links = j.value("links", Json::array());
      s.partitions = j.value("partitions", Json::array());
      for (const auto& c : j.value("components", Json::array())) {
        ScenarioComponent sc;
        sc.name = c.at("name").get<std::string>();
        auto role = role_from_string(c.at("role").get<std::string>());
        if (!role) throw ScenarioError("unknown role in component '" + sc.name + "'");
        sc.role = *role;
        sc.host = c.at("host").get<std::string>();
        if (c.contains("port")) sc.port = c.at("port").get<int>();
        sc.startAtMs = c.value("startAtMs", 0.0);
        sc.spec = c;
        s.components.push_back(std::move(sc));
      }
      for (const auto& w : j.value("workload", Json::array())) {
        s.workload.push_back({w.value("atMs", 0.0), w.at("action").get<std::string>(), w});
      }
      s.assertions = j.value("assertions", Json::array());
    } catch (const ScenarioError&) {
      throw;
    } catch (const std::exception& ex) {
      throw ScenarioError(std::string("malformed scenario: ") + ex.what());
    }
    s.validate();
    return s;
  }

  static Scenario load(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ScenarioError("cannot read scenario " + path);
    Json j;
    try {
      j = Json::parse(in);
    } catch (const Json::parse_error& ex) {
      throw ScenarioError(std::string("scenario is not JSON: ") + ex.what());
    }
    return from_json(j);
  }

  void validate() const {
    std::set<std::string> names;
    for (const auto& c : components) {
      if (!hosts.contains(c.host)) throw ScenarioError("component '" + c.name + "' references undefined host '" + c.host + "'");
      if (!names.insert(c.name).second) throw ScenarioError("duplicate component name '" + c.name + "'");
    }
    for (const auto& l : links) {
      if (l.value("ms", 0.0) < 0.0) throw ScenarioError("negative link latency");
    }
    if (defaultLatencyMs < 0.0 || sameHostLatencyMs < 0.0 || jitterMs < 0.0) throw ScenarioError("negative latency");
  }
};

// ============================================================================
// Harness
// ============================================================================

struct AssertionResult {
  std::string description;
  bool passed = false;
  std::string detail;
};

inline void to_json(Json& j, const AssertionResult& a) {
  j = Json{{"description", a.description}, {"passed", a.passed}, {"detail", a.detail}};
}

class Harness {
 public:
  explicit Harness(Scenario s) : sc_(std::move(s)) {
    SimNetConfig net;
    net.seed = sc_.seed;
    net.defaultLatencyMs = sc_.defaultLatencyMs;
    net.sameHostLatencyMs = sc_.sameHostLatencyMs;
    net.jitterMs = sc_.jitterMs;
    for (const auto& [name, h] : sc_.hosts) {
      if (h.profile) net.hosts[name] = *h.profile;
    }
    env_ = std::make_unique<SimEnvironment>(net);
    env_->on_delivery([this](double t, const MessageEnvelope& e) { record(t, e); });
    for (const auto& c : sc_.components) build(c);
    // Component names resolve only once the components are bound.
    for (const auto& l : sc_.links) env_->set_latency(endpoint(l.at("a")), endpoint(l.at("b")), l.at("ms").get<double>());
    for (const auto& p : sc_.partitions) env_->sever(endpoint(p.at("a")), endpoint(p.at("b")));
  }

  ~Harness() {
    // Users and masters first so nothing outlives the environment.
    for (auto it = order_.rbegin(); it != order_.rend(); ++it) owned_.erase(*it);
  }

  Harness(const Harness&) = delete;
  Harness& operator=(const Harness&) = delete;

  [[nodiscard]] SimEnvironment& env() { return *env_; }
  [[nodiscard]] const Scenario& scenario() const { return sc_; }
  [[nodiscard]] const MessageTrace& trace() const { return trace_; }

  template <class T>
  [[nodiscard]] T* find(const std::string& name) const {
    auto it = owned_.find(name);
    return it == owned_.end() ? nullptr : dynamic_cast<T*>(it->second.get());
  }

  [[nodiscard]] Address address_of(const std::string& name) const {
    auto it = owned_.find(name);
    if (it == owned_.end()) throw ScenarioError("unknown component '" + name + "'");
    return it->second->address();
  }

  /// Schedules starts and workload, runs to the horizon or quiescence.
  SimRunStats run() {
    double t0 = env_->now_ms();
    for (const auto& c : sc_.components) {
      Component* comp = owned_.at(c.name).get();
      env_->set_timer(comp->address(), c.startAtMs, [comp] { comp->start(); });
    }
    for (const auto& w : sc_.workload) {
      env_->set_timer(Address{"harness", 0}, w.atMs, [this, w] { apply(w); });
    }
    stats_ = env_->run_until(t0 + sc_.horizonMs, sc_.eventBudget);
    return stats_;
  }

  [[nodiscard]] std::vector<AssertionResult> evaluate() const {
    std::vector<AssertionResult> out;
    for (const auto& a : sc_.assertions) out.push_back(check(a));
    return out;
  }

  /// All masters, including those started by actors during scaling.
  [[nodiscard]] std::vector<const Master*> all_masters() const {
    std::vector<const Master*> out;
    for (const auto& name : order_) {
      if (auto* m = find<Master>(name)) out.push_back(m);
      if (auto* a = find<Actor>(name)) {
        for (auto* m : a->spawned_masters()) out.push_back(m);
      }
    }
    return out;
  }

  [[nodiscard]] Json report() const {
    Json r;
    r["scenario"] = sc_.name;
    r["seed"] = sc_.seed;
    Json counts = Json::object();
    for (const auto& t : trace_) counts[t.kind.str()] = counts.value(t.kind.str(), 0) + 1;
    r["trace"] = Json{{"messages", trace_.size()}, {"counts", counts}};
    Json decisions = Json::array();
    for (const auto* m : all_masters()) {
      for (const auto& d : m->decisions()) {
        Json dj = d;
        dj["master"] = m->identity().name;
        decisions.push_back(dj);
      }
    }
    r["decisions"] = decisions;
    Json users = Json::object();
    for (const auto& name : order_) {
      if (auto* u = find<User>(name)) {
        users[name] = Json{{"phase", to_string(u->phase())},
                           {"error", u->error()},
                           {"redirects", u->redirects()},
                           {"stats", u->stats()},
                           {"submissions", u->submissions()}};
      }
    }
    r["users"] = users;
    auto results = evaluate();
    r["assertions"] = results;
    bool ok = std::all_of(results.begin(), results.end(), [](const AssertionResult& a) { return a.passed; }) &&
              !stats_.budgetExhausted;
    r["status"] = ok ? "pass" : "fail";
    r["run"] = Json{{"events", stats_.events},
                    {"delivered", stats_.delivered},
                    {"dropped", stats_.dropped},
                    {"quiescent", stats_.quiescent},
                    {"budgetExhausted", stats_.budgetExhausted},
                    {"virtualTimeMs", env_->elapsed_ms()}};
    return r;
  }

 private:
  void record(double t, const MessageEnvelope& e) {
    TraceEntry te;
    te.timeMs = t - env_->config().startTimeMs;
    te.source = e.source.name;
    te.sourceRole = e.source.role;
    te.sourceAddr = e.source.addr;
    te.destinationAddr = e.destination.addr;
    // The receiver's real role; the envelope only carries what the sender assumed.
    Component* dest = env_->component_at(e.destination.addr);
    te.destinationRole = dest != nullptr ? dest->role() : e.destination.role;
    te.destination = dest != nullptr ? dest->identity().name : e.destination.name;
    te.kind = e.kind();
    te.data = e.data;
    trace_.push_back(std::move(te));
  }

  [[nodiscard]] EndpointPattern endpoint(const Json& j) const {
    auto s = j.get<std::string>();
    if (auto it = owned_.find(s); it != owned_.end()) {
      const auto& a = it->second->address();
      return {a.ip, a.port};
    }
    if (auto h = sc_.hosts.find(s); h != sc_.hosts.end()) return {h->second.ip, 0};
    auto colon = s.rfind(':');
    if (colon == std::string::npos) return {s, 0};
    return {s.substr(0, colon), std::stoi(s.substr(colon + 1))};
  }

  [[nodiscard]] std::optional<Address> ref(const Json& c, const char* key) const {
    if (!c.contains(key)) return std::nullopt;
    const auto& v = c.at(key);
    if (v.is_array()) return v.get<Address>();
    return address_of(v.get<std::string>());
  }

  static DataRecord expand_input(const Json& in) {
    if (in.is_object() && in.contains("$gameOfLife")) {
      const auto& g = in.at("$gameOfLife");
      return game_of_life_input(g.value("tasks", kDefaultGameOfLifeTasks), g.value("seed", std::uint64_t{1}),
                                g.value("density", 0.35));
    }
    return in;
  }

  void build(const ScenarioComponent& c) {
    const auto& host = sc_.hosts.at(c.host);
    const Json& j = c.spec;
    std::unique_ptr<Component> comp;
    switch (c.role) {
      case Role::RemoteLogger:
        comp = std::make_unique<RemoteLogger>(*env_, host.ip, c.port, open_log_store(j.value("logPath", std::string{})),
                                              c.host);
        break;
      case Role::Master: {
        MasterConfig mc = j.value("config", Json::object()).get<MasterConfig>();
        if (auto rl = ref(j, "remoteLogger")) mc.remoteLogger = rl;
        comp = std::make_unique<Master>(*env_, host.ip, c.port, c.host, mc);
        break;
      }
      case Role::Actor: {
        ActorConfig ac = j.value("config", Json::object()).get<ActorConfig>();
        if (auto m = ref(j, "master")) ac.master = m;
        if (auto rl = ref(j, "remoteLogger")) ac.remoteLogger = rl;
        comp = std::make_unique<Actor>(*env_, host.ip, c.port, c.host, ac);
        break;
      }
      case Role::User: {
        Json uj = j.value("config", Json::object());
        uj["applicationName"] = j.at("applicationName");
        if (j.contains("applicationLabel")) uj["applicationLabel"] = j.at("applicationLabel");
        auto m = ref(j, "master");
        if (!m) throw ScenarioError("user '" + c.name + "' needs a master");
        uj["master"] = *m;
        if (auto rl = ref(j, "remoteLogger")) uj["remoteLogger"] = *rl;
        auto u = std::make_unique<User>(*env_, host.ip, c.port, c.host, uj.get<UserConfig>());
        for (const auto& in : j.value("inputs", Json::array())) u->submit(expand_input(in));
        comp = std::move(u);
        break;
      }
      case Role::TaskExecutor:
        throw ScenarioError("task executors are started by actors, not by scenarios");
    }
    order_.push_back(c.name);
    owned_[c.name] = std::move(comp);
  }

  void apply(const ScenarioStep& w) {
    const Json& j = w.spec;
    if (w.action == "sever") {
      env_->sever(endpoint(j.at("a")), endpoint(j.at("b")));
    } else if (w.action == "heal") {
      env_->heal(endpoint(j.at("a")), endpoint(j.at("b")));
    } else if (w.action == "setLatency") {
      env_->set_latency(endpoint(j.at("a")), endpoint(j.at("b")), j.at("ms").get<double>());
    } else if (w.action == "submit") {
      auto* u = find<User>(j.at("component").get<std::string>());
      if (u == nullptr) throw ScenarioError("submit to unknown user");
      u->submit(expand_input(j.at("input")));
    } else if (w.action == "start") {
      owned_.at(j.at("component").get<std::string>())->start();
    } else {
      throw ScenarioError("unknown workload action '" + w.action + "'");
    }
  }

  [[nodiscard]] const Master* master_named(const std::string& name) const {
    if (auto* m = find<Master>(name)) return m;
    throw ScenarioError("unknown master '" + name + "'");
  }

  [[nodiscard]] const User* user_named(const std::string& name) const {
    if (auto* u = find<User>(name)) return u;
    throw ScenarioError("unknown user '" + name + "'");
  }

  [[nodiscard]] AssertionResult check(const Json& a) const {
    AssertionResult r;
    const std::string type = a.value("type", std::string{});
    r.description = a.value("description", type);
    try {
      if (type == "count") {
        auto pattern = a.at("kind").get<std::string>();
        auto p = KindPattern::parse(pattern);
        std::optional<Role> from, to;
        if (a.contains("from")) from = role_from_string(a.at("from").get<std::string>());
        if (a.contains("to")) to = role_from_string(a.at("to").get<std::string>());
        double after = a.value("afterMs", -1.0);
        double before = a.value("beforeMs", std::numeric_limits<double>::infinity());
        std::size_t n = 0;
        for (const auto& t : trace_) {
          if (!p.matches(t.kind) || (from && t.sourceRole != *from) || (to && t.destinationRole != *to)) continue;
          if (t.timeMs < after || t.timeMs >= before) continue;
          ++n;
        }
        r.detail = pattern + " x" + std::to_string(n);
        r.passed = true;
        if (a.contains("equals")) r.passed = r.passed && n == a.at("equals").get<std::size_t>();
        if (a.contains("min")) r.passed = r.passed && n >= a.at("min").get<std::size_t>();
        if (a.contains("max")) r.passed = r.passed && n <= a.at("max").get<std::size_t>();
      } else if (type == "sequence") {
        std::vector<std::string> pattern;
        if (a.value("pattern", Json()) == "requestFlow") {
          pattern = request_flow_pattern(a.value("tasks", std::size_t{3}));
        } else {
          pattern = a.at("pattern").get<std::vector<std::string>>();
        }
        r.passed = assert_sequence(trace_, pattern);
        r.detail = std::to_string(pattern.size()) + " steps";
      } else if (type == "routes") {
        auto bad = route_violations(trace_);
        r.passed = bad.empty();
        r.detail = bad.empty() ? "all routes permitted"
                               : bad.front().kind.str() + " from " + std::string(to_string(bad.front().sourceRole)) +
                                     " to " + std::string(to_string(bad.front().destinationRole));
      } else if (type == "userComplete") {
        const auto* u = user_named(a.at("user").get<std::string>());
        r.passed = u->phase() == User::Phase::Finished && u->all_complete();
        r.detail = std::string(to_string(u->phase())) + (u->error().empty() ? "" : ": " + u->error());
      } else if (type == "userFailed") {
        const auto* u = user_named(a.at("user").get<std::string>());
        auto want = a.value("error", std::string{});
        r.passed = u->phase() == User::Phase::Failed && u->error().rfind(want, 0) == 0;
        r.detail = std::string(to_string(u->phase())) + ": " + u->error();
      } else if (type == "result") {
        const auto* u = user_named(a.at("user").get<std::string>());
        auto idx = a.value("submission", std::size_t{0});
        const auto& subs = u->submissions();
        if (idx >= subs.size()) throw ScenarioError("no such submission");
        const auto& agg = subs[idx].aggregate;
        auto key = a.at("key").get<std::string>();
        if (!agg.contains(key)) {
          r.detail = "missing " + key;
        } else if (a.contains("tolerance")) {
          double got = agg.at(key).get<double>();
          double want = a.at("equals").get<double>();
          r.passed = std::fabs(got - want) <= a.at("tolerance").get<double>();
          r.detail = key + "=" + agg.at(key).dump();
        } else {
          r.passed = agg.at(key) == a.at("equals");
          r.detail = key + "=" + agg.at(key).dump();
        }
      } else if (type == "submissionFailed") {
        const auto* u = user_named(a.at("user").get<std::string>());
        const auto& s = u->submissions().at(a.value("submission", std::size_t{0}));
        r.passed = s.done && !s.ok;
        r.detail = s.error + " missing " + Json(s.missing).dump();
      } else if (type == "stats") {
        const auto* u = user_named(a.at("user").get<std::string>());
        r.passed = u->stats().count == a.at("count").get<std::size_t>();
        r.detail = "count=" + std::to_string(u->stats().count);
      } else if (type == "redirects") {
        const auto* u = user_named(a.at("user").get<std::string>());
        r.passed = u->redirects() == a.at("equals").get<int>();
        r.detail = "redirects=" + std::to_string(u->redirects());
      } else if (type == "registered") {
        const auto* m = master_named(a.at("master").get<std::string>());
        auto addr = address_of(a.at("component").get<std::string>());
        r.passed = m->registry().contains(addr);
        r.detail = r.passed ? "registered" : "absent";
        if (r.passed && a.contains("beforeMs")) {
          double at = m->registry().at(addr).registeredAt - env_->config().startTimeMs;
          r.passed = at < a.at("beforeMs").get<double>();
          r.detail = "registered at " + std::to_string(at);
        }
      } else if (type == "sameActors") {
        auto names = a.at("masters").get<std::vector<std::string>>();
        std::optional<std::set<Address>> first;
        r.passed = true;
        for (const auto& n : names) {
          auto set = master_named(n)->actor_addresses();
          if (!first) {
            first = set;
          } else if (set != *first) {
            r.passed = false;
          }
        }
        r.detail = std::to_string(first ? first->size() : 0) + " actors";
        if (a.contains("size") && first) r.passed = r.passed && first->size() == a.at("size").get<std::size_t>();
      } else if (type == "masters") {
        auto n = all_masters().size();
        r.passed = n == a.at("equals").get<std::size_t>();
        r.detail = std::to_string(n) + " masters";
      } else {
        r.detail = "unknown assertion type '" + type + "'";
      }
    } catch (const std::exception& ex) {
      r.passed = false;
      r.detail = ex.what();
    }
    return r;
  }

  Scenario sc_;
  std::unique_ptr<SimEnvironment> env_;
  std::map<std::string, std::unique_ptr<Component>> owned_;
  std::vector<std::string> order_;
  MessageTrace trace_;
  SimRunStats stats_;
};

/// Loads, runs and reports in one call.
inline Json run_scenario(const Scenario& s) {
  Harness h(s);
  h.run();
  return h.report();
}

}  // namespace fogbus
