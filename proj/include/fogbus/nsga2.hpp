#pragma once

// NSGA-II over integer placement vectors (one actor index per task).

#include <algorithm>
#include <cstdint>
#include <limits>
#include <numeric>
#include <random>
#include <stdexcept>
#include <vector>

#include "fogbus/scheduler.hpp"

namespace fogbus {

using Objectives = std::vector<double>;

/// a dominates b: no worse everywhere, strictly better somewhere (minimization).
inline bool dominates(const Objectives& a, const Objectives& b) {
  bool better = false;
  for (std::size_t i = 0; i < a.size(); ++i) {
    if (a[i] > b[i]) return false;
    if (a[i] < b[i]) better = true;
  }
  return better;
}

/// Fast non-dominated sort. Returns fronts as index lists into `points`,
/// each front in ascending index order.
inline std::vector<std::vector<std::size_t>> non_dominated_sort(const std::vector<Objectives>& points) {
  const std::size_t n = points.size();
  for (const auto& p : points) {
    if (p.size() != points.front().size()) throw std::invalid_argument("objective vectors differ in dimension");
  }
  std::vector<std::vector<std::size_t>> dominated(n);
  std::vector<std::size_t> counter(n, 0);
  std::vector<std::vector<std::size_t>> fronts;
  std::vector<std::size_t> current;
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < n; ++j) {
      if (i == j) continue;
      if (dominates(points[i], points[j])) {
        dominated[i].push_back(j);
      } else if (dominates(points[j], points[i])) {
        ++counter[i];
      }
    }
    if (counter[i] == 0) current.push_back(i);
  }
  while (!current.empty()) {
    std::vector<std::size_t> next;
    for (auto i : current) {
      for (auto j : dominated[i]) {
        if (--counter[j] == 0) next.push_back(j);
      }
    }
    std::sort(next.begin(), next.end());
    fronts.push_back(std::move(current));
    current = std::move(next);
  }
  return fronts;
}

/// Crowding distance of each point of one front; boundary points are infinite.
inline std::vector<double> crowding_distance(const std::vector<Objectives>& front) {
  const std::size_t n = front.size();
  std::vector<double> dist(n, 0.0);
  if (n == 0) return dist;
  const double inf = std::numeric_limits<double>::infinity();
  for (std::size_t m = 0; m < front.front().size(); ++m) {
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), [&](auto a, auto b) { return front[a][m] < front[b][m]; });
    dist[order.front()] = inf;
    dist[order.back()] = inf;
    double range = front[order.back()][m] - front[order.front()][m];
    if (range <= 0.0) continue;
    for (std::size_t k = 1; k + 1 < n; ++k) {
      dist[order[k]] += (front[order[k + 1]][m] - front[order[k - 1]][m]) / range;
    }
  }
  return dist;
}

struct Nsga2Params {
  std::size_t populationSize = 16;
  std::size_t generations = 30;
  double crossoverRate = 0.9;
  double mutationRate = 0.2;  // per gene
  std::uint64_t seed = 1;
};

inline void to_json(nlohmann::json& j, const Nsga2Params& p) {
  j = nlohmann::json{{"populationSize", p.populationSize},
                     {"generations", p.generations},
                     {"crossoverRate", p.crossoverRate},
                     {"mutationRate", p.mutationRate},
                     {"seed", p.seed}};
}
inline void from_json(const nlohmann::json& j, Nsga2Params& p) {
  Nsga2Params d;
  p.populationSize = j.value("populationSize", d.populationSize);
  p.generations = j.value("generations", d.generations);
  p.crossoverRate = j.value("crossoverRate", d.crossoverRate);
  p.mutationRate = j.value("mutationRate", d.mutationRate);
  p.seed = j.value("seed", d.seed);
  if (p.populationSize < 2) throw std::invalid_argument("populationSize must be >= 2");
  if (p.crossoverRate < 0.0 || p.crossoverRate > 1.0 || p.mutationRate < 0.0 || p.mutationRate > 1.0) {
    throw std::invalid_argument("rates must lie in [0,1]");
  }
}

/// Placement search space: tasks in rank order, hosts sorted.
class PlacementProblem {
 public:
  explicit PlacementProblem(const SchedulingContext& ctx)
      : ctx_(ctx), hosts_(sorted_unique(ctx.actorHostIDs)) {
    if (hosts_.empty()) throw NoActorsError();
    tasks_ = rank_application_tasks(ctx.app, ctx.model, hosts_);
  }

  using Genome = std::vector<std::size_t>;

  [[nodiscard]] std::size_t genes() const { return tasks_.size(); }
  [[nodiscard]] std::size_t alleles() const { return hosts_.size(); }
  [[nodiscard]] const std::vector<std::string>& tasks() const { return tasks_; }
  [[nodiscard]] const std::vector<std::string>& hosts() const { return hosts_; }

  [[nodiscard]] std::map<std::string, std::string> placement(const Genome& g) const {
    std::map<std::string, std::string> out;
    for (std::size_t i = 0; i < tasks_.size(); ++i) out[tasks_[i]] = hosts_[g[i]];
    return out;
  }

  [[nodiscard]] double response_time(const Genome& g) const {
    return estimate_cost(placement(g), ctx_.app, ctx_.model, ctx_.links, ctx_.originHostID);
  }

  /// max minus min accumulated busy time over every candidate actor.
  [[nodiscard]] double imbalance(const Genome& g) const {
    std::vector<double> busy(hosts_.size(), 0.0);
    for (std::size_t i = 0; i < tasks_.size(); ++i) busy[g[i]] += ctx_.model.estimate(tasks_[i], hosts_[g[i]]);
    auto [lo, hi] = std::minmax_element(busy.begin(), busy.end());
    return *hi - *lo;
  }

  [[nodiscard]] Objectives evaluate(const Genome& g) const { return {response_time(g), imbalance(g)}; }

  [[nodiscard]] Decision decision(const Genome& g) const {
    Decision d;
    d.userID = ctx_.userID;
    d.indexSequence = tasks_;
    d.indexToHostID = placement(g);
    d.cost = response_time(g);
    return d;
  }

 private:
  const SchedulingContext& ctx_;
  std::vector<std::string> hosts_;
  std::vector<std::string> tasks_;
};

namespace detail {

struct Individual {
  PlacementProblem::Genome genome;
  Objectives objectives;
  std::size_t rank = 0;
  double crowding = 0.0;
};

/// Assigns rank and crowding to every member; returns them ordered by
/// (rank asc, crowding desc, genome asc).
inline void rank_population(std::vector<Individual>& pop) {
  std::vector<Objectives> pts;
  pts.reserve(pop.size());
  for (const auto& ind : pop) pts.push_back(ind.objectives);
  auto fronts = non_dominated_sort(pts);
  for (std::size_t r = 0; r < fronts.size(); ++r) {
    std::vector<Objectives> fp;
    for (auto i : fronts[r]) fp.push_back(pop[i].objectives);
    auto cd = crowding_distance(fp);
    for (std::size_t k = 0; k < fronts[r].size(); ++k) {
      pop[fronts[r][k]].rank = r;
      pop[fronts[r][k]].crowding = cd[k];
    }
  }
  std::stable_sort(pop.begin(), pop.end(), [](const Individual& a, const Individual& b) {
    if (a.rank != b.rank) return a.rank < b.rank;
    if (a.crowding != b.crowding) return a.crowding > b.crowding;
    return a.genome < b.genome;
  });
}

}  // namespace detail

inline Decision schedule_nsga2(const SchedulingContext& ctx, const Nsga2Params& params = {}) {
  auto start = std::chrono::steady_clock::now();
  PlacementProblem problem(ctx);
  const std::size_t n = problem.genes();
  const std::size_t k = problem.alleles();
  const std::size_t popSize = std::max<std::size_t>(2, params.populationSize);
  std::mt19937_64 rng(params.seed);
  std::uniform_int_distribution<std::size_t> allele(0, k - 1);
  std::uniform_real_distribution<double> coin(0.0, 1.0);

  auto make = [&](PlacementProblem::Genome g) {
    detail::Individual ind;
    ind.objectives = problem.evaluate(g);
    ind.genome = std::move(g);
    return ind;
  };

  std::vector<detail::Individual> pop;
  pop.reserve(2 * popSize);
  for (std::size_t i = 0; i < popSize; ++i) {
    PlacementProblem::Genome g(n);
    for (auto& gene : g) gene = allele(rng);
    pop.push_back(make(std::move(g)));
  }
  detail::rank_population(pop);

  std::uniform_int_distribution<std::size_t> pick(0, popSize - 1);
  auto tournament = [&]() -> const detail::Individual& {
    const auto& a = pop[pick(rng)];
    const auto& b = pop[pick(rng)];
    if (a.rank != b.rank) return a.rank < b.rank ? a : b;
    return a.crowding >= b.crowding ? a : b;
  };

  for (std::size_t gen = 0; gen < params.generations; ++gen) {
    std::vector<detail::Individual> offspring;
    offspring.reserve(popSize);
    while (offspring.size() < popSize) {
      auto c1 = tournament().genome;
      auto c2 = tournament().genome;
      if (n > 1 && coin(rng) < params.crossoverRate) {
        std::size_t cut = std::uniform_int_distribution<std::size_t>(1, n - 1)(rng);
        for (std::size_t i = cut; i < n; ++i) std::swap(c1[i], c2[i]);
      }
      for (auto* c : {&c1, &c2}) {
        for (auto& gene : *c) {
          if (coin(rng) < params.mutationRate) gene = allele(rng);
        }
      }
      offspring.push_back(make(std::move(c1)));
      if (offspring.size() < popSize) offspring.push_back(make(std::move(c2)));
    }
    for (auto& o : offspring) pop.push_back(std::move(o));
    detail::rank_population(pop);
    pop.resize(popSize);
    detail::rank_population(pop);
  }

  const detail::Individual* best = nullptr;
  for (const auto& ind : pop) {
    if (ind.rank != 0) continue;
    if (best == nullptr || ind.objectives[0] < best->objectives[0] ||
        (ind.objectives[0] == best->objectives[0] && ind.genome < best->genome)) {
      best = &ind;
    }
  }
  Decision d = problem.decision(best->genome);
  d.schedulingTime = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - start).count();
  return d;
}

}  // namespace fogbus
