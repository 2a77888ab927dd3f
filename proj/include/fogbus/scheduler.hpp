#pragma once

// Placement primitives: execution-time model, task ranking, greedy
// assignment, response-time estimation and the ranking-based schedule.

#include <algorithm>
#include <chrono>
#include <map>
#include <numeric>
#include <set>
#include <span>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "fogbus/appmodel.hpp"
#include "fogbus/profile.hpp"

namespace fogbus {

using Placement = std::map<std::string, std::string>;

struct NoActorsError : std::runtime_error {
  NoActorsError() : std::runtime_error("no actors available for placement") {}
};

struct ModelError : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};

/// Mean of `history` if non-empty, else work / effective capacity.
inline double estimate_exec_time(double work, const HostProfile& host, std::span<const double> history = {}) {
  if (!history.empty()) {
    return std::accumulate(history.begin(), history.end(), 0.0) / double(history.size());
  }
  return work / effective_capacity(host);
}

inline double estimate_exec_time(const TaskDefinition& task, const HostProfile& host,
                                 std::span<const double> history = {}) {
  return estimate_exec_time(task.work, host, history);
}

/// Per (task, host) estimates from host profiles, task work and observed history.
class ExecTimeModel {
 public:
  void set_host(const std::string& hostID, const HostProfile& p) { hosts_[hostID] = p; }
  void set_work(const std::string& task, double work) { work_[task] = work; }
  void record(const std::string& task, const std::string& hostID, double ms) { history_[{task, hostID}].push_back(ms); }
  void clear_history() { history_.clear(); }

  [[nodiscard]] bool has_host(const std::string& hostID) const { return hosts_.contains(hostID); }
  [[nodiscard]] const std::map<std::string, HostProfile>& hosts() const { return hosts_; }

  [[nodiscard]] double work(const std::string& task) const {
    if (auto it = work_.find(task); it != work_.end()) return it->second;
    if (const auto* def = init_task(task)) return def->work;
    throw ModelError("no work constant for task '" + task + "'");
  }

  [[nodiscard]] std::span<const double> history(const std::string& task, const std::string& hostID) const {
    auto it = history_.find({task, hostID});
    if (it == history_.end()) return {};
    return it->second;
  }

  [[nodiscard]] double estimate(const std::string& task, const std::string& hostID) const {
    auto h = history(task, hostID);
    if (!h.empty()) return estimate_exec_time(0.0, HostProfile{}, h);
    auto it = hosts_.find(hostID);
    if (it == hosts_.end()) throw ModelError("no profile for host '" + hostID + "'");
    return estimate_exec_time(work(task), it->second);
  }

  [[nodiscard]] double mean_estimate(const std::string& task, const std::vector<std::string>& hostIDs) const {
    if (hostIDs.empty()) throw NoActorsError();
    double sum = 0.0;
    for (const auto& h : hostIDs) sum += estimate(task, h);
    return sum / double(hostIDs.size());
  }

 private:
  std::map<std::string, HostProfile> hosts_;
  std::map<std::string, double> work_;
  std::map<std::pair<std::string, std::string>, std::vector<double>> history_;
};

/// Symmetric host-to-host latency; zero between co-located tasks.
class LinkLatencyTable {
 public:
  LinkLatencyTable() = default;
  explicit LinkLatencyTable(double defaultMs) : default_(defaultMs) {}

  void set(const std::string& a, const std::string& b, double ms) {
    if (ms < 0.0) throw std::invalid_argument("latency must be >= 0");
    table_[key(a, b)] = ms;
  }

  [[nodiscard]] double operator()(const std::string& a, const std::string& b) const {
    if (a == b) return 0.0;
    auto it = table_.find(key(a, b));
    return it == table_.end() ? default_ : it->second;
  }

  [[nodiscard]] double default_ms() const { return default_; }
  [[nodiscard]] const std::map<std::pair<std::string, std::string>, double>& entries() const { return table_; }

 private:
  static std::pair<std::string, std::string> key(const std::string& a, const std::string& b) {
    return a < b ? std::pair{a, b} : std::pair{b, a};
  }
  double default_ = 0.0;
  std::map<std::pair<std::string, std::string>, double> table_;
};

struct Decision {
  std::string userID;
  std::vector<std::string> indexSequence;
  std::map<std::string, std::string> indexToHostID;
  double schedulingTime = 0.0;  // ms
  double cost = 0.0;            // estimated response time, ms

  /// Equality without schedulingTime, which is wall-clock measured.
  [[nodiscard]] bool same_placement(const Decision& o) const {
    return userID == o.userID && indexSequence == o.indexSequence && indexToHostID == o.indexToHostID &&
           cost == o.cost;
  }
};

inline void to_json(nlohmann::json& j, const Decision& d) {
  j = nlohmann::json{{"userID", d.userID},
                     {"indexSequence", d.indexSequence},
                     {"indexToHostID", d.indexToHostID},
                     {"schedulingTime", d.schedulingTime},
                     {"cost", d.cost}};
}
inline void from_json(const nlohmann::json& j, Decision& d) {
  d.userID = j.at("userID").get<std::string>();
  d.indexSequence = j.at("indexSequence").get<std::vector<std::string>>();
  d.indexToHostID = j.at("indexToHostID").get<std::map<std::string, std::string>>();
  d.schedulingTime = j.at("schedulingTime").get<double>();
  d.cost = j.at("cost").get<double>();
}

/// Everything a policy needs to place one application for one user.
struct SchedulingContext {
  std::string userID;
  ApplicationSpec app;
  std::vector<std::string> actorHostIDs;  // candidate hosts, one per actor
  ExecTimeModel model;
  LinkLatencyTable links;
  std::string originHostID;  // where Sensor and Actuator live; empty ignores those edges
};

/// Number of precedence edges (p, c) where c is not strictly after p.
inline std::size_t precedence_violations(const ApplicationSpec& spec, const std::vector<std::string>& order) {
  std::map<std::string, std::size_t> pos;
  for (std::size_t i = 0; i < order.size(); ++i) pos[order[i]] = i;
  std::size_t bad = 0;
  for (const auto& [p, c] : spec.edges()) {
    auto ip = pos.find(p);
    auto ic = pos.find(c);
    if (ip == pos.end() || ic == pos.end() || ip->second >= ic->second) ++bad;
  }
  return bad;
}

inline std::vector<std::string> sorted_unique(std::vector<std::string> v) {
  std::sort(v.begin(), v.end());
  v.erase(std::unique(v.begin(), v.end()), v.end());
  return v;
}

/// Precedence first; within a layer, descending mean estimate, ties by name.
inline std::vector<std::string> rank_application_tasks(const ApplicationSpec& spec, const ExecTimeModel& model,
                                                       const std::vector<std::string>& hostIDs) {
  auto hosts = sorted_unique(hostIDs);
  std::vector<std::string> out;
  for (auto layer : topological_layers(spec)) {
    std::vector<std::pair<double, std::string>> keyed;
    keyed.reserve(layer.size());
    for (auto& t : layer) keyed.emplace_back(model.mean_estimate(t, hosts), std::move(t));
    std::sort(keyed.begin(), keyed.end(), [](const auto& a, const auto& b) {
      return a.first != b.first ? a.first > b.first : a.second < b.second;
    });
    for (auto& [_, t] : keyed) out.push_back(std::move(t));
  }
  return out;
}

/// Greedy earliest completion in rank order; ties by ascending hostID.
inline std::map<std::string, std::string> tasks_assignment(const std::vector<std::string>& ranked,
                                                           const ApplicationSpec& spec,
                                                           const std::vector<std::string>& hostIDs,
                                                           const ExecTimeModel& model) {
  auto hosts = sorted_unique(hostIDs);
  if (hosts.empty()) throw NoActorsError();
  std::map<std::string, double> busy;
  std::map<std::string, double> finish;
  std::map<std::string, std::string> placement;
  for (const auto& t : ranked) {
    double ready = 0.0;
    if (spec.has_task(t)) {
      for (const auto& p : spec.task_parents(t)) {
        if (auto it = finish.find(p); it != finish.end()) ready = std::max(ready, it->second);
      }
    }
    const std::string* best = nullptr;
    double bestDone = 0.0;
    for (const auto& h : hosts) {
      double done = std::max(busy[h], ready) + model.estimate(t, h);
      if (best == nullptr || done < bestDone) {
        best = &h;
        bestDone = done;
      }
    }
    busy[*best] = bestDone;
    finish[t] = bestDone;
    placement[t] = *best;
  }
  return placement;
}

/// Longest path through the placed DAG: task estimates plus link latency
/// between the hosts of consecutive tasks (and to/from the origin host).
inline double estimate_cost(const std::map<std::string, std::string>& placement, const ApplicationSpec& spec,
                            const ExecTimeModel& model, const LinkLatencyTable& links,
                            const std::string& originHostID = {}) {
  if (spec.task_count() == 0) return 0.0;
  std::map<std::string, double> finish;
  double total = 0.0;
  for (const auto& layer : topological_layers(spec)) {
    for (const auto& t : layer) {
      const auto& host = placement.at(t);
      double start = 0.0;
      if (!originHostID.empty() && spec.fed_by_sensor(t)) start = links(originHostID, host);
      for (const auto& p : spec.task_parents(t)) {
        start = std::max(start, finish.at(p) + links(placement.at(p), host));
      }
      double done = start + model.estimate(t, host);
      finish[t] = done;
      double out = done;
      if (!originHostID.empty() && spec.feeds_actuator(t)) out += links(host, originHostID);
      total = std::max(total, out);
    }
  }
  return total;
}

inline double estimate_cost(const Decision& d, const ApplicationSpec& spec, const ExecTimeModel& model,
                            const LinkLatencyTable& links, const std::string& originHostID = {}) {
  return estimate_cost(d.indexToHostID, spec, model, links, originHostID);
}

inline Decision schedule_ranking_based(const SchedulingContext& ctx) {
  if (ctx.actorHostIDs.empty()) throw NoActorsError();
  auto start = std::chrono::steady_clock::now();
  Decision d;
  d.userID = ctx.userID;
  d.indexSequence = rank_application_tasks(ctx.app, ctx.model, ctx.actorHostIDs);
  d.indexToHostID = tasks_assignment(d.indexSequence, ctx.app, ctx.actorHostIDs, ctx.model);
  d.schedulingTime =
      std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - start).count();
  d.cost = estimate_cost(d, ctx.app, ctx.model, ctx.links, ctx.originHostID);
  return d;
}

}  // namespace fogbus
