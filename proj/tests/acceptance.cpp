// Acceptance run: one PASS/FAIL line per criterion, non-zero exit on any FAIL.

#include <fcntl.h>
#include <spawn.h>
#include <sys/wait.h>
#include <unistd.h>

#include <chrono>
#include <cmath>
#include <csignal>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <random>
#include <regex>
#include <set>
#include <sstream>
#include <thread>

#include "fogbus/fogbus.hpp"
#include "oracles.hpp"
#include "support.hpp"
#include "messages.hpp"

extern char** environ;

using namespace fogbus;
namespace fs = std::filesystem;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

fs::path scenario(const std::string& stem) { return fs::path(FOGBUS_SOURCE_DIR) / "scenarios" / (stem + ".json"); }

// Role-aware subsequence match over the trace.
struct Step {
  MessageKind kind;
  Role from;
  Role to;
};

bool embeds(const MessageTrace& trace, const std::vector<Step>& steps) {
  std::size_t i = 0;
  for (const auto& t : trace) {
    if (i == steps.size()) break;
    const auto& s = steps[i];
    if (t.kind == s.kind && t.sourceRole == s.from && t.destinationRole == s.to) ++i;
  }
  return i == steps.size();
}

std::size_t count(const MessageTrace& trace, const MessageKind& k, double afterMs = -1.0) {
  return std::size_t(std::count_if(trace.begin(), trace.end(),
                                   [&](const TraceEntry& t) { return t.kind == k && t.timeMs >= afterMs; }));
}

// ---------------------------------------------------------------------------

Outcome golden() {
  auto e = decode_message(testdata::kHostResourcesMessage);
  bool ok = e.source.role == Role::Actor && e.destination.role == Role::RemoteLogger && e.type == "log" &&
            e.subType == "hostResources" && e.data["resources"]["cpu"]["cores"] == 8 &&
            e.data["resources"]["cpu"]["frequency"].get<double>() == 2400.0 &&
            e.sentAtSourceTimestamp == 1625572932123.89;
  auto text = encode_message(e);
  bool trip = text == testdata::kHostResourcesGolden && decode_message(text) == e;
  return {ok && trip, std::string("fields ") + (ok ? "ok" : "wrong") + ", round trip " + (trip ? "exact" : "differs")};
}

Outcome catalog_coverage() {
  std::size_t passed = 0;
  std::map<MessageKind, std::set<std::pair<Role, Role>>> allowed;
  for (const auto& row : testdata::kMessageRows) {
    const auto* entry = classify(row.kind);
    bool ok = entry != nullptr;
    for (Role s : row.senders) {
      for (Role r : row.receivers) {
        ok = ok && entry->permits(s, r);
        allowed[row.kind].emplace(s, r);
      }
    }
    if (ok) ++passed;
  }
  // Pairs outside the table must be refused.
  std::size_t leaks = 0;
  for (const auto& [k, pairs] : allowed) {
    const auto* entry = classify(k);
    if (entry == nullptr) continue;
    for (Role s : kAllRoles) {
      for (Role r : kAllRoles) {
        if (!pairs.contains({s, r}) && entry->permits(s, r)) ++leaks;
      }
    }
  }
  std::ostringstream d;
  d << passed << "/" << testdata::kMessageRows.size() << " rows, " << leaks << " unlisted role pairs permitted";
  return {passed == testdata::kMessageRows.size() && leaks == 0, d.str()};
}

Outcome parallel_e2e() {
  Harness h(Scenario::load(scenario("parallel-naive-formula").string()));
  h.run();
  const auto* u = h.find<User>("user");
  if (u == nullptr || u->submissions().empty() || !u->all_complete()) return {false, "user did not complete"};
  const auto& r = u->submissions().front().aggregate;
  bool p0 = r.contains("resultPart0") && r["resultPart0"].get<double>() == 6.0;
  bool p1 = r.contains("resultPart1") && std::abs(r["resultPart1"].get<double>() - 1.0 / 13.0) <= 1e-9;
  bool p2 = r.contains("resultPart2") && std::abs(r["resultPart2"].get<double>() - 3.0) <= 1e-9;

  using R = Role;
  std::vector<Step> flow{{kind::registerComponent, R::User, R::Master}};
  for (int i = 0; i < 3; ++i) flow.push_back({kind::runTaskExecutor, R::Master, R::Actor});
  for (int i = 0; i < 3; ++i) flow.push_back({kind::ready, R::TaskExecutor, R::Master});
  flow.push_back({kind::serviceReady, R::Master, R::User});
  flow.push_back({kind::sensoryData, R::User, R::Master});
  for (int i = 0; i < 3; ++i) flow.push_back({kind::intermediateData, R::Master, R::TaskExecutor});
  for (int i = 0; i < 3; ++i) flow.push_back({kind::finalResult, R::TaskExecutor, R::Master});
  for (int i = 0; i < 3; ++i) flow.push_back({kind::finalResult, R::Master, R::User});
  bool seq = embeds(h.trace(), flow);

  std::ostringstream d;
  d << "resultPart0=" << r.value("resultPart0", Json()).dump() << " resultPart1=" << r.value("resultPart1", Json()).dump()
    << " resultPart2=" << r.value("resultPart2", Json()).dump() << ", interaction pattern " << (seq ? "matched" : "missing");
  return {p0 && p1 && p2 && seq, d.str()};
}

Outcome reuse() {
  Harness h(Scenario::load(scenario("reuse").string()));
  h.run();
  auto runs = count(h.trace(), kind::runTaskExecutor);
  auto reuses = count(h.trace(), kind::reuse);
  auto lateRuns = count(h.trace(), kind::runTaskExecutor, 6000.0);
  bool done = h.find<User>("first")->all_complete() && h.find<User>("second")->all_complete();
  std::ostringstream d;
  d << "runTaskExecutor=" << runs << " (" << lateRuns << " for the second request), reuse=" << reuses
    << (done ? "" : ", a user did not complete");
  return {runs == 3 && lateRuns == 0 && reuses == 3 && done, d.str()};
}

Outcome scaling() {
  Harness h(Scenario::load(scenario("scaling").string()));
  h.run();
  auto redirects = count(h.trace(), kind::redirect);
  auto spawned = count(h.trace(), kind::initNewMaster);
  bool done = h.find<User>("alice")->all_complete() && h.find<User>("bob")->all_complete();
  std::ostringstream d;
  d << "redirect=" << redirects << " initNewMaster=" << spawned << ", both users "
    << (done ? "received all results" : "did not finish");
  return {(redirects == 1 || spawned == 1) && spawned <= 1 && done, d.str()};
}

Outcome discovery() {
  auto s = Scenario::load(scenario("discovery").string());
  double interval = 0.0;
  for (const auto& c : s.components) {
    if (c.name == "masterA") interval = c.spec.at("config").at("discoveryIntervalMs").get<double>();
  }
  Harness h(s);
  h.run();
  auto stray = h.address_of("stray");
  auto masterA = h.address_of("masterA");
  double at = -1.0;
  for (const auto& t : h.trace()) {
    if (t.kind == kind::registered && t.sourceAddr == masterA && t.destinationAddr == stray) {
      at = t.timeMs;
      break;
    }
  }
  auto set_of = [&](const char* name) {
    std::set<Address> out;
    for (const auto& a : h.find<Master>(name)->actors()) out.insert(a.addr);
    return out;
  };
  auto a = set_of("masterA");
  auto b = set_of("masterB");
  // Tick k fires at k * interval; the reply needs a few link hops on top.
  bool inTime = at >= 0.0 && at <= 2.0 * interval + 100.0;
  std::ostringstream d;
  d << "stray registered at " << at << " ms (tick " << interval << " ms), actor sets " << a.size() << "/" << b.size()
    << (a == b ? " identical" : " differ");
  return {inTime && a == b && a.size() == 3, d.str()};
}

Outcome nsga_oracle() {
  std::mt19937_64 rng(2021);
  std::size_t sortMismatch = 0;
  std::size_t within = 0;
  const std::size_t instances = 50;
  for (std::size_t n = 0; n < instances; ++n) {
    auto ctx = oracle::random_instance(rng, 4, 4);
    PlacementProblem problem(ctx);
    // Every genome of the instance as a population.
    std::vector<Objectives> pts;
    PlacementProblem::Genome g(problem.genes(), 0);
    while (true) {
      pts.push_back(problem.evaluate(g));
      std::size_t i = 0;
      while (i < g.size() && ++g[i] == problem.alleles()) g[i++] = 0;
      if (i == g.size()) break;
    }
    auto fronts = non_dominated_sort(pts);
    std::vector<std::size_t> got(pts.size(), 0);
    for (std::size_t f = 0; f < fronts.size(); ++f) {
      for (auto i : fronts[f]) got[i] = f;
    }
    if (got != oracle::brute_force_front_index(pts)) ++sortMismatch;

    Nsga2Params p;
    p.populationSize = 16;
    p.generations = 30;
    p.seed = 7;
    double best = oracle::exhaustive_optimum(ctx);
    double found = schedule_nsga2(ctx, p).cost;
    if (found <= best * 1.05 + 1e-12) ++within;
  }
  std::ostringstream d;
  d << "sort mismatches " << sortMismatch << "/" << instances << ", within 5% of optimum on " << within << "/"
    << instances;
  return {sortMismatch == 0 && within >= 45, d.str()};
}

Outcome ranking_determinism() {
  std::mt19937_64 rng(77);
  std::size_t invalid = 0;
  std::size_t differing = 0;
  for (int n = 0; n < 100; ++n) {
    auto ctx = oracle::random_instance(rng, 8, 5);
    auto a = schedule_ranking_based(ctx);
    auto b = schedule_ranking_based(ctx);
    if (!oracle::is_topological(ctx.app, a.indexSequence)) ++invalid;
    if (!a.same_placement(b)) ++differing;
  }
  std::ostringstream d;
  d << invalid << " invalid orders, " << differing << " differing repeats over 100 instances";
  return {invalid == 0 && differing == 0, d.str()};
}

Outcome lifecycle_property() {
  testing::LifecycleOutcome total;
  for (std::uint64_t seed = 1; seed <= 1000; ++seed) {
    auto o = testing::run_lifecycle_sequence(seed);
    total.events += o.events;
    total.transitions += o.transitions;
    total.illegal += o.illegal;
    total.rejected += o.rejected;
    total.mixedUsers += o.mixedUsers;
    total.wrongResults += o.wrongResults;
    total.silentRebinds += o.silentRebinds;
    total.reuses += o.reuses;
  }
  std::ostringstream d;
  d << total.transitions << " transitions, " << total.illegal << " illegal, " << total.mixedUsers
    << " mixed payloads, " << total.wrongResults << " misattributed results, " << total.silentRebinds
    << " silent rebinds (" << total.reuses << " reuses, " << total.rejected << " refused attempts)";
  return {total.illegal == 0 && total.mixedUsers == 0 && total.wrongResults == 0 && total.silentRebinds == 0,
          d.str()};
}

Outcome log_durability() {
  auto dir = fs::temp_directory_path() / ("fogbus-acceptance-" + std::to_string(::getpid()));
  fs::remove_all(dir);
  auto path = dir / "logs.jsonl";
  std::mt19937_64 rng(10);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  std::vector<LogRecord> written;
  {
    FileLogStore store(path);
    for (int i = 0; i < 1000; ++i) {
      LogRecord r;
      r.kind = i % 2 == 0 ? "hostResources" : "responseTime";
      r.source = make_identity(Role::Actor, {"10.0.0." + std::to_string(i % 250), 50000 + i % 100}, "h" + std::to_string(i));
      r.timestamp = 1625572932000.0 + i * 0.37;
      r.payload = {{"i", i}, {"u", unit(rng)}, {"text", "rec\n\"" + std::to_string(i) + "\""}, {"nested", {{"x", {1, 2.5, nullptr}}}}};
      store.append(r);
      written.push_back(r);
    }
    store.close();
  }
  FileLogStore reopened(path);
  auto back = reopened.query("");
  std::size_t equal = 0;
  for (std::size_t i = 0; i < std::min(back.size(), written.size()); ++i) {
    const auto& a = back[i];
    const auto& b = written[i];
    if (a.kind == b.kind && a.source == b.source && a.timestamp == b.timestamp && a.payload == b.payload) ++equal;
  }
  fs::remove_all(dir);
  std::ostringstream d;
  d << back.size() << " records reopened, " << equal << " identical";
  return {back.size() == 1000 && equal == 1000, d.str()};
}

// --- criterion 11: real processes through the command-line defaults ---------

struct Child {
  pid_t pid = -1;
  fs::path err;
};

Child spawn(const fs::path& dir, const std::string& tag, std::vector<std::string> args) {
  Child c;
  c.err = dir / (tag + ".err");
  auto out = dir / (tag + ".out");
  posix_spawn_file_actions_t fa;
  posix_spawn_file_actions_init(&fa);
  posix_spawn_file_actions_addopen(&fa, 1, out.c_str(), O_WRONLY | O_CREAT | O_TRUNC, 0644);
  posix_spawn_file_actions_addopen(&fa, 2, c.err.c_str(), O_WRONLY | O_CREAT | O_TRUNC, 0644);
  args.insert(args.begin(), FOGBUS_CLI);
  std::vector<char*> argv;
  for (auto& a : args) argv.push_back(a.data());
  argv.push_back(nullptr);
  if (posix_spawn(&c.pid, FOGBUS_CLI, &fa, nullptr, argv.data(), environ) != 0) c.pid = -1;
  posix_spawn_file_actions_destroy(&fa);
  return c;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p);
  std::stringstream s;
  s << in.rdbuf();
  return s.str();
}

bool wait_for(const fs::path& p, const std::string& needle, std::chrono::milliseconds limit) {
  auto until = std::chrono::steady_clock::now() + limit;
  while (std::chrono::steady_clock::now() < until) {
    if (slurp(p).find(needle) != std::string::npos) return true;
    std::this_thread::sleep_for(std::chrono::milliseconds(20));
  }
  return false;
}

Outcome port_plan() {
  for (const char* v : {"REMOTE_LOGGER_PORT_RANGE", "MASTER_PORT_RANGE", "ACTOR_PORT_RANGE", "USER_PORT_RANGE",
                        "TASK_EXECUTOR_PORT_RANGE"}) {
    ::unsetenv(v);
  }
  auto dir = fs::temp_directory_path() / ("fogbus-ports-" + std::to_string(::getpid()));
  fs::remove_all(dir);
  fs::create_directories(dir);

  std::vector<Child> daemons;
  daemons.push_back(spawn(dir, "logger", {"remote-logger"}));
  bool up = wait_for(daemons.back().err, "listening on", std::chrono::seconds(2));
  daemons.push_back(spawn(dir, "master", {"master"}));
  up = up && wait_for(daemons.back().err, "listening on", std::chrono::seconds(2));
  daemons.push_back(spawn(dir, "actor", {"actor"}));
  up = up && wait_for(daemons.back().err, "listening on", std::chrono::seconds(2));

  int userStatus = -1;
  Child user;
  if (up) {
    user = spawn(dir, "user",
                 {"user", "--applicationName", "NaiveFormulaParallelized", "--a", "1", "--b", "2", "--c", "3"});
    auto until = std::chrono::steady_clock::now() + std::chrono::seconds(3);
    while (std::chrono::steady_clock::now() < until) {
      int st = 0;
      if (::waitpid(user.pid, &st, WNOHANG) == user.pid) {
        userStatus = WIFEXITED(st) ? WEXITSTATUS(st) : -1;
        break;
      }
      std::this_thread::sleep_for(std::chrono::milliseconds(20));
    }
    if (userStatus == -1 && user.pid > 0) {
      ::kill(user.pid, SIGKILL);
      ::waitpid(user.pid, nullptr, 0);
    }
  }
  for (auto& d : daemons) {
    if (d.pid > 0) ::kill(d.pid, SIGTERM);
  }
  for (auto& d : daemons) {
    if (d.pid > 0) ::waitpid(d.pid, nullptr, 0);
  }

  // Fixed plan, independent of the library's own table.
  const std::map<std::string, std::pair<int, int>> plan{{"RemoteLogger", {5000, 5000}},
                                                        {"Master", {5001, 5010}},
                                                        {"Actor", {50000, 50100}},
                                                        {"User", {50101, 50200}},
                                                        {"TaskExecutor", {50201, 60000}}};
  static const std::regex listening(R"((\w+)-\S+ listening on [\d.]+:(\d+))");
  static const std::regex started(R"(started (\w+)( for user \S+)? on [\d.]+:(\d+))");
  std::map<std::string, std::size_t> seen;
  std::size_t outside = 0;
  std::vector<fs::path> logs;
  for (const auto& d : daemons) logs.push_back(d.err);
  if (user.pid > 0) logs.push_back(user.err);
  for (const auto& p : logs) {
    std::istringstream in(slurp(p));
    for (std::string line; std::getline(in, line);) {
      std::smatch m;
      std::string role;
      int port = 0;
      if (std::regex_search(line, m, listening)) {
        role = m[1];
        port = std::stoi(m[2]);
      } else if (std::regex_search(line, m, started)) {
        role = m[2].matched ? "TaskExecutor" : std::string(m[1]);
        port = std::stoi(m[3]);
      } else {
        continue;
      }
      ++seen[role];
      auto r = plan.find(role);
      if (r == plan.end() || port < r->second.first || port > r->second.second) ++outside;
    }
  }
  fs::remove_all(dir);
  std::ostringstream d;
  d << "binds:";
  for (const auto& [role, n] : seen) d << " " << role << "=" << n;
  d << ", " << outside << " outside the plan, user exit " << userStatus;
  bool all = seen["RemoteLogger"] == 1 && seen["Master"] == 1 && seen["Actor"] == 1 && seen["User"] == 1 &&
             seen["TaskExecutor"] == 3;
  return {up && all && outside == 0 && userStatus == 0, d.str()};
}

}  // namespace

int main() {
  spdlog::set_level(spdlog::level::off);
  struct Criterion {
    int id;
    const char* name;
    double budgetS;
    std::function<Outcome()> run;
  };
  std::vector<Criterion> criteria{
      {1, "protocol golden message", 1.0, golden},
      {2, "message catalog coverage", 1.0, catalog_coverage},
      {3, "parallel NaiveFormula end to end", 5.0, parallel_e2e},
      {4, "executor reuse within cool-off", 5.0, reuse},
      {5, "scaling under saturation", 10.0, scaling},
      {6, "discovery and actor set convergence", 5.0, discovery},
      {7, "NSGA-II against exhaustive oracle", 60.0, nsga_oracle},
      {8, "ranking policy validity and determinism", 10.0, ranking_determinism},
      {9, "executor lifecycle property", 10.0, lifecycle_property},
      {10, "log store durability", 5.0, log_durability},
      {11, "port plan conformance", 5.0, port_plan},
  };
  int failed = 0;
  for (const auto& c : criteria) {
    auto t0 = std::chrono::steady_clock::now();
    Outcome o;
    try {
      o = c.run();
    } catch (const std::exception& ex) {
      o = {false, std::string("exception: ") + ex.what()};
    }
    double s = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    bool ok = o.pass && s < c.budgetS;
    if (!ok) ++failed;
    std::printf("criterion %2d: %s  %s: %s [%.3f s of %.0f s]\n", c.id, ok ? "PASS" : "FAIL", c.name,
                o.detail.c_str(), s, c.budgetS);
    std::fflush(stdout);
  }
  std::printf("%d of %zu criteria passed\n", int(criteria.size()) - failed, criteria.size());
  return failed == 0 ? 0 : 1;
}
