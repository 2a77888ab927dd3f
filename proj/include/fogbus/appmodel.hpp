#pragma once

// Application DAGs, the task registry and the built-in task logic.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <map>
#include <optional>
#include <random>
#include <set>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

namespace fogbus {

using DataRecord = nlohmann::json;

inline constexpr const char* kSensor = "Sensor";
inline constexpr const char* kActuator = "Actuator";

inline bool is_virtual_endpoint(const std::string& name) { return name == kSensor || name == kActuator; }

// ============================================================================
// Task errors
// ============================================================================

struct TaskError : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct MissingKeyError : TaskError {
  explicit MissingKeyError(const std::string& key) : TaskError("missing input key '" + key + "'"), key(key) {}
  std::string key;
};
struct DivisionByZeroError : TaskError {
  using TaskError::TaskError;
};
struct RaggedGridError : TaskError {
  using TaskError::TaskError;
};
struct RecordConflictError : TaskError {
  using TaskError::TaskError;
};

namespace detail {

inline const DataRecord& numeric_input(const DataRecord& in, const std::string& key) {
  if (!in.is_object() || !in.contains(key)) throw MissingKeyError(key);
  const auto& v = in.at(key);
  if (!v.is_number()) throw TaskError("input key '" + key + "' is not numeric");
  return v;
}

inline bool all_integers(std::initializer_list<const DataRecord*> values) {
  return std::all_of(values.begin(), values.end(), [](const DataRecord* v) { return v->is_number_integer(); });
}

/// Writes `key` unless it already holds a value of a different JSON type.
inline void write_result(DataRecord& rec, const std::string& key, DataRecord value) {
  if (rec.contains(key) && rec[key].type() != value.type() &&
      !(rec[key].is_number() && value.is_number())) {
    throw RecordConflictError("refusing to overwrite '" + key + "' with a different type");
  }
  rec[key] = std::move(value);
}

}  // namespace detail

// ============================================================================
// Built-in task logic
// ============================================================================

/// resultPart0 = a + b + c (integral when all inputs are integral).
inline DataRecord exec_naive_formula0(DataRecord in) {
  const auto& a = detail::numeric_input(in, "a");
  const auto& b = detail::numeric_input(in, "b");
  const auto& c = detail::numeric_input(in, "c");
  DataRecord result;
  if (detail::all_integers({&a, &b, &c})) {
    result = a.get<std::int64_t>() + b.get<std::int64_t>() + c.get<std::int64_t>();
  } else {
    result = a.get<double>() + b.get<double>() + c.get<double>();
  }
  detail::write_result(in, "resultPart0", std::move(result));
  return in;
}

/// resultPart1 = a^2 / (b^2 + c^2).
inline DataRecord exec_naive_formula1(DataRecord in) {
  double a = detail::numeric_input(in, "a").get<double>();
  double b = detail::numeric_input(in, "b").get<double>();
  double c = detail::numeric_input(in, "c").get<double>();
  double denom = b * b + c * c;
  if (denom == 0.0) throw DivisionByZeroError("b*b + c*c is zero");
  detail::write_result(in, "resultPart1", a * a / denom);
  return in;
}

/// resultPart2 = 1/a + 2/b + 3/c.
inline DataRecord exec_naive_formula2(DataRecord in) {
  double a = detail::numeric_input(in, "a").get<double>();
  double b = detail::numeric_input(in, "b").get<double>();
  double c = detail::numeric_input(in, "c").get<double>();
  if (a == 0.0 || b == 0.0 || c == 0.0) throw DivisionByZeroError("a, b and c must be nonzero");
  detail::write_result(in, "resultPart2", 1.0 / a + 2.0 / b + 3.0 / c);
  return in;
}

/// Terminal aggregate of the serialized chain: finalResult = sum of the three parts.
inline DataRecord exec_naive_formula3(DataRecord in) {
  double sum = 0.0;
  for (const char* key : {"resultPart0", "resultPart1", "resultPart2"}) {
    sum += detail::numeric_input(in, key).get<double>();
  }
  detail::write_result(in, "finalResult", sum);
  return in;
}

using Grid = std::vector<std::vector<std::uint8_t>>;

/// One Conway generation with a dead boundary.
inline Grid life_step(const Grid& g) {
  const std::size_t rows = g.size();
  const std::size_t cols = rows == 0 ? 0 : g.front().size();
  for (const auto& row : g) {
    if (row.size() != cols) throw RaggedGridError("grid rows differ in length");
  }
  Grid next(rows, std::vector<std::uint8_t>(cols, 0));
  for (std::size_t r = 0; r < rows; ++r) {
    for (std::size_t c = 0; c < cols; ++c) {
      int n = 0;
      for (int dr = -1; dr <= 1; ++dr) {
        for (int dc = -1; dc <= 1; ++dc) {
          if (dr == 0 && dc == 0) continue;
          auto rr = static_cast<std::ptrdiff_t>(r) + dr;
          auto cc = static_cast<std::ptrdiff_t>(c) + dc;
          if (rr < 0 || cc < 0 || rr >= std::ptrdiff_t(rows) || cc >= std::ptrdiff_t(cols)) continue;
          n += g[std::size_t(rr)][std::size_t(cc)] != 0 ? 1 : 0;
        }
      }
      bool alive = g[r][c] != 0;
      next[r][c] = (n == 3 || (alive && n == 2)) ? 1 : 0;
    }
  }
  return next;
}

inline Grid grid_from_json(const DataRecord& j) {
  if (!j.is_array()) throw TaskError("grid must be an array of rows");
  Grid g;
  g.reserve(j.size());
  for (const auto& row : j) {
    if (!row.is_array()) throw TaskError("grid row must be an array");
    std::vector<std::uint8_t> cells;
    cells.reserve(row.size());
    for (const auto& cell : row) {
      if (cell.is_boolean()) {
        cells.push_back(cell.get<bool>() ? 1 : 0);
      } else if (cell.is_number_integer()) {
        cells.push_back(cell.get<int>() != 0 ? 1 : 0);
      } else {
        throw TaskError("grid cells must be booleans or 0/1");
      }
    }
    g.push_back(std::move(cells));
  }
  return g;
}

inline DataRecord grid_to_json(const Grid& g) {
  DataRecord j = DataRecord::array();
  for (const auto& row : g) {
    DataRecord r = DataRecord::array();
    for (auto cell : row) r.push_back(int(cell));
    j.push_back(std::move(r));
  }
  return j;
}

/// {grid} -> {grid'}: one generation on the record's "grid" key.
inline DataRecord exec_game_of_life_step(DataRecord in) {
  if (!in.is_object() || !in.contains("grid")) throw MissingKeyError("grid");
  auto g = grid_from_json(in["grid"]);
  in["grid"] = grid_to_json(life_step(g));
  return in;
}

inline std::string game_of_life_input_key(int index) { return "grid" + std::to_string(index); }
inline std::string game_of_life_output_key(int index) { return "resultGrid" + std::to_string(index); }
inline int game_of_life_side(int index) { return 8 + 4 * index; }

/// Task k steps its own input grid and records the next generation under its result key.
inline DataRecord exec_game_of_life_task(int index, DataRecord in) {
  auto key = game_of_life_input_key(index);
  if (!in.is_object() || !in.contains(key)) throw MissingKeyError(key);
  auto next = life_step(grid_from_json(in[key]));
  detail::write_result(in, game_of_life_output_key(index), grid_to_json(next));
  return in;
}

/// Seeded random initial grids for the first `taskCount` GameOfLife tasks.
inline DataRecord game_of_life_input(int taskCount, std::uint64_t seed, double density = 0.35) {
  DataRecord rec = DataRecord::object();
  std::mt19937_64 rng(seed);
  std::bernoulli_distribution alive(density);
  for (int k = 0; k < taskCount; ++k) {
    int side = game_of_life_side(k);
    Grid g(std::size_t(side), std::vector<std::uint8_t>(std::size_t(side), 0));
    for (auto& row : g) {
      for (auto& cell : row) cell = alive(rng) ? 1 : 0;
    }
    rec[game_of_life_input_key(k)] = grid_to_json(g);
  }
  return rec;
}

// ============================================================================
// Task registry
// ============================================================================

struct TaskDefinition {
  int taskID = 0;
  std::string taskName;
  double work = 1.0;  // abstract work units; see scheduler estimates
  /// Empty result means "nothing to forward".
  std::function<std::optional<DataRecord>(DataRecord)> exec;
};

inline constexpr int kGameOfLifeMaxTasks = 63;
inline constexpr int kFirstInventedTaskID = 111;

class TaskRegistry {
 public:
  void add(TaskDefinition def) {
    if (byName_.contains(def.taskName)) throw std::logic_error("duplicate task name " + def.taskName);
    for (const auto& [_, d] : byName_) {
      if (d.taskID == def.taskID) throw std::logic_error("duplicate task id " + std::to_string(def.taskID));
    }
    byName_.emplace(def.taskName, std::move(def));
  }

  [[nodiscard]] const TaskDefinition* find(const std::string& name) const {
    auto it = byName_.find(name);
    return it == byName_.end() ? nullptr : &it->second;
  }

  [[nodiscard]] std::size_t size() const { return byName_.size(); }
  [[nodiscard]] const std::map<std::string, TaskDefinition>& all() const { return byName_; }

  static const TaskRegistry& builtin() {
    static const TaskRegistry registry = [] {
      TaskRegistry r;
      auto wrap = [](DataRecord (*fn)(DataRecord)) {
        return [fn](DataRecord in) -> std::optional<DataRecord> { return fn(std::move(in)); };
      };
      r.add({108, "NaiveFormula0", 100.0, wrap(&exec_naive_formula0)});
      r.add({109, "NaiveFormula1", 150.0, wrap(&exec_naive_formula1)});
      r.add({110, "NaiveFormula2", 200.0, wrap(&exec_naive_formula2)});
      r.add({kFirstInventedTaskID, "NaiveFormula3", 50.0, wrap(&exec_naive_formula3)});
      for (int k = 0; k < kGameOfLifeMaxTasks; ++k) {
        int side = game_of_life_side(k);
        r.add({kFirstInventedTaskID + 1 + k, "GameOfLife" + std::to_string(k), double(side * side) / 10.0,
               [k](DataRecord in) -> std::optional<DataRecord> { return exec_game_of_life_task(k, std::move(in)); }});
      }
      return r;
    }();
    return registry;
  }

 private:
  std::map<std::string, TaskDefinition> byName_;
};

/// Looks a task up in the built-in registry.
inline const TaskDefinition* init_task(const std::string& taskName) { return TaskRegistry::builtin().find(taskName); }

// ============================================================================
// Application model
// ============================================================================

struct TaskDependency {
  std::vector<std::string> parents;
  std::vector<std::string> children;
  friend bool operator==(const TaskDependency&, const TaskDependency&) = default;
};

struct ApplicationSpec {
  std::string name;
  std::vector<std::string> entryTasks;
  std::map<std::string, TaskDependency> tasksWithDependency;

  [[nodiscard]] std::vector<std::string> task_names() const {
    std::vector<std::string> out;
    for (const auto& [n, _] : tasksWithDependency) out.push_back(n);
    return out;
  }
  [[nodiscard]] std::size_t task_count() const { return tasksWithDependency.size(); }
  [[nodiscard]] bool has_task(const std::string& n) const { return tasksWithDependency.contains(n); }

  /// Parents that are tasks (virtual Sensor excluded).
  [[nodiscard]] std::vector<std::string> task_parents(const std::string& n) const {
    std::vector<std::string> out;
    for (const auto& p : tasksWithDependency.at(n).parents) {
      if (!is_virtual_endpoint(p)) out.push_back(p);
    }
    return out;
  }
  [[nodiscard]] std::vector<std::string> task_children(const std::string& n) const {
    std::vector<std::string> out;
    for (const auto& c : tasksWithDependency.at(n).children) {
      if (!is_virtual_endpoint(c)) out.push_back(c);
    }
    return out;
  }
  [[nodiscard]] bool feeds_actuator(const std::string& n) const {
    const auto& ch = tasksWithDependency.at(n).children;
    return std::find(ch.begin(), ch.end(), kActuator) != ch.end();
  }
  [[nodiscard]] bool fed_by_sensor(const std::string& n) const {
    const auto& ps = tasksWithDependency.at(n).parents;
    return std::find(ps.begin(), ps.end(), kSensor) != ps.end();
  }

  /// Task-to-task edges (parent, child), union of both declarations.
  [[nodiscard]] std::set<std::pair<std::string, std::string>> edges() const {
    std::set<std::pair<std::string, std::string>> out;
    for (const auto& [n, dep] : tasksWithDependency) {
      for (const auto& c : dep.children) {
        if (!is_virtual_endpoint(c)) out.emplace(n, c);
      }
      for (const auto& p : dep.parents) {
        if (!is_virtual_endpoint(p)) out.emplace(p, n);
      }
    }
    return out;
  }

  friend bool operator==(const ApplicationSpec&, const ApplicationSpec&) = default;
};

inline void to_json(nlohmann::json& j, const TaskDependency& d) {
  j = nlohmann::json{{"parents", d.parents}, {"children", d.children}};
}
inline void from_json(const nlohmann::json& j, TaskDependency& d) {
  d.parents = j.at("parents").get<std::vector<std::string>>();
  d.children = j.at("children").get<std::vector<std::string>>();
}
inline void to_json(nlohmann::json& j, const ApplicationSpec& a) {
  j = nlohmann::json{{"name", a.name}, {"entryTasks", a.entryTasks}, {"tasksWithDependency", a.tasksWithDependency}};
}
inline void from_json(const nlohmann::json& j, ApplicationSpec& a) {
  a.name = j.value("name", std::string{});
  a.entryTasks = j.at("entryTasks").get<std::vector<std::string>>();
  a.tasksWithDependency = j.at("tasksWithDependency").get<std::map<std::string, TaskDependency>>();
}

struct Violation {
  enum class Kind { Cycle, UndefinedTask, UnreachableActuator, EntryWithoutSensor, InconsistentEdge };
  Kind kind;
  std::string detail;
};

inline const char* to_string(Violation::Kind k) {
  switch (k) {
    case Violation::Kind::Cycle: return "cycle";
    case Violation::Kind::UndefinedTask: return "undefined-task";
    case Violation::Kind::UnreachableActuator: return "unreachable-actuator";
    case Violation::Kind::EntryWithoutSensor: return "entry-without-sensor";
    case Violation::Kind::InconsistentEdge: return "inconsistent-edge";
  }
  return "?";
}

struct CycleError : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};

namespace detail {

/// Kahn leveling over defined tasks; leftover tasks (on or behind a cycle) go to `stuck`.
inline std::vector<std::vector<std::string>> kahn_layers(const ApplicationSpec& spec, std::vector<std::string>* stuck) {
  std::map<std::string, int> indegree;
  std::map<std::string, std::vector<std::string>> out;
  for (const auto& [n, _] : spec.tasksWithDependency) indegree[n] = 0;
  for (const auto& [p, c] : spec.edges()) {
    if (!spec.has_task(p) || !spec.has_task(c)) continue;
    ++indegree[c];
    out[p].push_back(c);
  }
  std::vector<std::vector<std::string>> layers;
  std::vector<std::string> frontier;
  for (const auto& [n, d] : indegree) {
    if (d == 0) frontier.push_back(n);
  }
  std::size_t placed = 0;
  while (!frontier.empty()) {
    std::sort(frontier.begin(), frontier.end());
    std::vector<std::string> next;
    for (const auto& n : frontier) {
      for (const auto& c : out[n]) {
        if (--indegree[c] == 0) next.push_back(c);
      }
    }
    placed += frontier.size();
    layers.push_back(std::move(frontier));
    frontier = std::move(next);
  }
  if (stuck != nullptr && placed != indegree.size()) {
    for (const auto& [n, d] : indegree) {
      if (d > 0) stuck->push_back(n);
    }
  }
  return layers;
}

}  // namespace detail

inline std::vector<Violation> validate_application(const ApplicationSpec& spec) {
  using K = Violation::Kind;
  std::vector<Violation> v;
  auto defined = [&](const std::string& n) { return is_virtual_endpoint(n) || spec.has_task(n); };

  for (const auto& e : spec.entryTasks) {
    if (!spec.has_task(e)) {
      v.push_back({K::UndefinedTask, "entry task '" + e + "' is not defined"});
    } else if (!spec.fed_by_sensor(e)) {
      v.push_back({K::EntryWithoutSensor, "entry task '" + e + "' lacks a Sensor parent"});
    }
  }
  for (const auto& [n, dep] : spec.tasksWithDependency) {
    for (const auto& p : dep.parents) {
      if (!defined(p)) v.push_back({K::UndefinedTask, "'" + n + "' names undefined parent '" + p + "'"});
    }
    for (const auto& c : dep.children) {
      if (!defined(c)) v.push_back({K::UndefinedTask, "'" + n + "' names undefined child '" + c + "'"});
    }
  }
  for (const auto& [p, c] : spec.edges()) {
    if (!spec.has_task(p) || !spec.has_task(c)) continue;
    const auto& pc = spec.tasksWithDependency.at(p).children;
    const auto& cp = spec.tasksWithDependency.at(c).parents;
    if (std::find(pc.begin(), pc.end(), c) == pc.end() || std::find(cp.begin(), cp.end(), p) == cp.end()) {
      v.push_back({K::InconsistentEdge, "edge " + p + " -> " + c + " is declared on one side only"});
    }
  }

  std::vector<std::string> stuck;
  detail::kahn_layers(spec, &stuck);
  if (!stuck.empty()) {
    std::string names;
    for (const auto& s : stuck) names += (names.empty() ? "" : ", ") + s;
    v.push_back({K::Cycle, "tasks on or behind a cycle: " + names});
  }

  // Reverse reachability from tasks that feed the Actuator.
  std::set<std::string> reaches;
  std::vector<std::string> work;
  for (const auto& [n, _] : spec.tasksWithDependency) {
    if (spec.feeds_actuator(n)) {
      reaches.insert(n);
      work.push_back(n);
    }
  }
  auto edges = spec.edges();
  while (!work.empty()) {
    auto n = work.back();
    work.pop_back();
    for (const auto& [p, c] : edges) {
      if (c == n && spec.has_task(p) && reaches.insert(p).second) work.push_back(p);
    }
  }
  for (const auto& [n, _] : spec.tasksWithDependency) {
    if (!reaches.contains(n)) v.push_back({K::UnreachableActuator, "'" + n + "' never reaches the Actuator"});
  }
  return v;
}

/// Layer k holds tasks whose task-parents all lie in earlier layers; names sorted within a layer.
inline std::vector<std::vector<std::string>> topological_layers(const ApplicationSpec& spec) {
  std::vector<std::string> stuck;
  auto layers = detail::kahn_layers(spec, &stuck);
  if (!stuck.empty()) throw CycleError("application '" + spec.name + "' has a dependency cycle");
  return layers;
}

// ============================================================================
// Built-in applications
// ============================================================================

inline constexpr int kDefaultGameOfLifeTasks = 8;

namespace detail {

inline void link(ApplicationSpec& a, const std::string& parent, const std::string& child) {
  a.tasksWithDependency[parent].children.push_back(child);
  a.tasksWithDependency[child].parents.push_back(parent);
}

inline ApplicationSpec parallel_app(std::string name, const std::vector<std::string>& tasks) {
  ApplicationSpec a;
  a.name = std::move(name);
  for (const auto& t : tasks) {
    a.entryTasks.push_back(t);
    a.tasksWithDependency[t] = {{kSensor}, {kActuator}};
  }
  return a;
}

inline ApplicationSpec chain_app(std::string name, const std::vector<std::string>& tasks) {
  ApplicationSpec a;
  a.name = std::move(name);
  a.entryTasks = {tasks.front()};
  for (const auto& t : tasks) a.tasksWithDependency[t];
  a.tasksWithDependency[tasks.front()].parents.push_back(kSensor);
  for (std::size_t i = 0; i + 1 < tasks.size(); ++i) link(a, tasks[i], tasks[i + 1]);
  a.tasksWithDependency[tasks.back()].children.push_back(kActuator);
  return a;
}

inline std::vector<std::string> game_of_life_tasks(int n) {
  if (n < 1 || n > kGameOfLifeMaxTasks) throw std::invalid_argument("GameOfLife task count must be in 1..63");
  std::vector<std::string> out;
  for (int k = 0; k < n; ++k) out.push_back("GameOfLife" + std::to_string(k));
  return out;
}

}  // namespace detail

/// Binary-tree reduction: task k consumes tasks 2k+1 and 2k+2; leaves read the sensor; task 0 feeds the actuator.
inline ApplicationSpec game_of_life_pyramid(int n) {
  auto tasks = detail::game_of_life_tasks(n);
  ApplicationSpec a;
  a.name = "GameOfLifePyramid";
  for (const auto& t : tasks) a.tasksWithDependency[t];
  for (int k = n - 1; k >= 1; --k) detail::link(a, tasks[std::size_t(k)], tasks[std::size_t((k - 1) / 2)]);
  a.tasksWithDependency[tasks[0]].children.push_back(kActuator);
  for (int k = 0; k < n; ++k) {
    if (2 * k + 1 >= n) {
      a.entryTasks.push_back(tasks[std::size_t(k)]);
      a.tasksWithDependency[tasks[std::size_t(k)]].parents.push_back(kSensor);
    }
  }
  return a;
}

inline std::vector<ApplicationSpec> builtin_applications(int gameOfLifeTasks = kDefaultGameOfLifeTasks) {
  auto gol = detail::game_of_life_tasks(gameOfLifeTasks);
  return {
      detail::parallel_app("NaiveFormulaParallelized", {"NaiveFormula0", "NaiveFormula1", "NaiveFormula2"}),
      detail::chain_app("NaiveFormulaSerialized", {"NaiveFormula0", "NaiveFormula1", "NaiveFormula2", "NaiveFormula3"}),
      detail::chain_app("GameOfLifeSerialized", gol),
      detail::parallel_app("GameOfLifeParallelized", gol),
      game_of_life_pyramid(gameOfLifeTasks),
  };
}

inline std::optional<ApplicationSpec> find_application(const std::string& name,
                                                       int gameOfLifeTasks = kDefaultGameOfLifeTasks) {
  for (auto& a : builtin_applications(gameOfLifeTasks)) {
    if (a.name == name) return a;
  }
  return std::nullopt;
}

/// Record merge for joins: union of keys; a shared key must agree.
inline void merge_records(DataRecord& into, const DataRecord& from) {
  for (const auto& [k, v] : from.items()) {
    if (!into.contains(k)) {
      into[k] = v;
    } else if (into[k] != v) {
      throw RecordConflictError("inputs disagree on key '" + k + "'");
    }
  }
}

}  // namespace fogbus
