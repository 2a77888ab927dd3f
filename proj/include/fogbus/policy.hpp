#pragma once

// Scheduler plug-in interface and the policies selectable by name.

#include <memory>
#include <optional>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

#include "fogbus/nsga2.hpp"
#include "fogbus/protocol.hpp"
#include "fogbus/scheduler.hpp"

namespace fogbus {

struct NotImplementedError : std::logic_error {
  using std::logic_error::logic_error;
};

/// Candidate host for a new master.
struct ScaleCandidate {
  ComponentIdentity actor;
  double utilization = 0.0;
};

/// Picks the host that will run a new master: least CPU utilization, then
/// lowest hostID, then lowest port.
class Scaler {
 public:
  [[nodiscard]] std::optional<std::size_t> choose(const std::vector<ScaleCandidate>& candidates) const {
    std::optional<std::size_t> best;
    for (std::size_t i = 0; i < candidates.size(); ++i) {
      if (!best || better(candidates[i], candidates[*best])) best = i;
    }
    return best;
  }

 private:
  static bool better(const ScaleCandidate& a, const ScaleCandidate& b) {
    if (a.utilization != b.utilization) return a.utilization < b.utilization;
    if (a.actor.hostID != b.actor.hostID) return a.actor.hostID < b.actor.hostID;
    return a.actor.addr < b.actor.addr;
  }
};

class SchedulerPolicy {
 public:
  SchedulerPolicy(std::string name, std::uint64_t seed) : name_(std::move(name)), rng_(seed) {}
  virtual ~SchedulerPolicy() = default;

  [[nodiscard]] const std::string& name() const { return name_; }
  [[nodiscard]] virtual bool implemented() const { return true; }

  virtual Decision schedule(const SchedulingContext& ctx) = 0;

  /// Uniform choice among known masters; none when there are none.
  virtual std::optional<ComponentIdentity> get_best_master(const std::vector<ComponentIdentity>& knownMasters) {
    if (knownMasters.empty()) return std::nullopt;
    std::uniform_int_distribution<std::size_t> pick(0, knownMasters.size() - 1);
    return knownMasters[pick(rng_)];
  }

  virtual Scaler prepare_scaler() { return Scaler{}; }

 protected:
  std::string name_;
  std::mt19937_64 rng_;
};

class RankingBasedPolicy final : public SchedulerPolicy {
 public:
  explicit RankingBasedPolicy(std::uint64_t seed = 1) : SchedulerPolicy("RankingBased", seed) {}
  Decision schedule(const SchedulingContext& ctx) override { return schedule_ranking_based(ctx); }
};

class Nsga2Policy final : public SchedulerPolicy {
 public:
  explicit Nsga2Policy(Nsga2Params params = {}) : SchedulerPolicy("NSGA2", params.seed), params_(params) {}
  Decision schedule(const SchedulingContext& ctx) override { return schedule_nsga2(ctx, params_); }
  [[nodiscard]] const Nsga2Params& params() const { return params_; }

 private:
  Nsga2Params params_;
};

/// A recognized policy name with no implementation here.
class UnimplementedPolicy final : public SchedulerPolicy {
 public:
  explicit UnimplementedPolicy(std::string name) : SchedulerPolicy(std::move(name), 0) {}
  [[nodiscard]] bool implemented() const override { return false; }
  Decision schedule(const SchedulingContext&) override {
    throw NotImplementedError("scheduler '" + name_ + "' is not implemented");
  }
};

/// nullptr for unknown names. `config` may carry Nsga2Params keys and "seed".
inline std::unique_ptr<SchedulerPolicy> init_scheduler_by_name(const std::string& name,
                                                               const nlohmann::json& config = nlohmann::json::object()) {
  std::uint64_t seed = config.is_object() ? config.value("seed", std::uint64_t{1}) : 1;
  if (name == "RankingBased") return std::make_unique<RankingBasedPolicy>(seed);
  if (name == "NSGA2") {
    Nsga2Params p;
    if (config.is_object()) p = config.get<Nsga2Params>();
    return std::make_unique<Nsga2Policy>(p);
  }
  if (name == "OHNSGA" || name == "NSGA3") return std::make_unique<UnimplementedPolicy>(name);
  return nullptr;
}

inline bool is_known_scheduler(const std::string& name) { return init_scheduler_by_name(name) != nullptr; }

}  // namespace fogbus
