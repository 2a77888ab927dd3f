// fogbus: launch one component per process, or replay a scenario.

#include <csignal>
#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>
#include <spdlog/sinks/stdout_color_sinks.h>
#include <spdlog/spdlog.h>

#include "fogbus/fogbus.hpp"

namespace {

using fogbus::Json;
using fogbus::LaunchConfig;
using fogbus::Role;

constexpr int kExitUsage = 2;
constexpr int kExitBind = 1;

struct Inputs {
  std::optional<double> a, b, c;
  std::uint64_t seed = 1;
};

void add_launch_flags(CLI::App* app, LaunchConfig& c, Role role) {
  app->add_option("--bindIP", c.bindIP, "address to listen on");
  app->add_option("--bindPort", c.bindPort, "port to listen on; lowest free port of the role's range if omitted");
  app->add_option("--containerName", c.containerName, "label for the component's log name");
  app->add_option("--videoPath", c.videoPath, "not supported");
  app->add_option("--configPath", c.configPath, "JSON file with component settings");
  if (role != Role::RemoteLogger) {
    app->add_option("--remoteLoggerIP", c.remoteLoggerIP);
    app->add_option("--remoteLoggerPort", c.remoteLoggerPort);
  }
  if (role != Role::RemoteLogger && role != Role::Master) {
    app->add_option("--masterIP", c.masterIP);
    app->add_option("--masterPort", c.masterPort);
  }
  if (role == Role::Master) app->add_option("--schedulerName", c.schedulerName, "RankingBased, NSGA2, OHNSGA or NSGA3");
  if (role == Role::RemoteLogger) app->add_option("--logPath", c.logPath, "NDJSON file; in-memory when omitted");
  if (role == Role::User) {
    app->add_option("--applicationName", c.applicationName);
    app->add_option("--applicationLabel", c.applicationLabel);
  }
}

std::optional<double> prompt(const char* name) {
  std::cout << name << " = " << std::flush;
  double v = 0.0;
  if (!(std::cin >> v)) return std::nullopt;
  return v;
}

Json number(double v) {
  if (v == double(std::int64_t(v))) return Json(std::int64_t(v));
  return Json(v);
}

void print_results(const fogbus::User& u) {
  for (const auto& s : u.submissions()) {
    if (s.ok) {
      std::cout << "Received all the " << s.results << " results\n";
    } else {
      std::cout << "Incomplete: " << s.error << ", missing " << Json(s.missing).dump() << "\n";
    }
    for (const auto& [k, v] : s.aggregate.items()) {
      if (k.rfind("grid", 0) == 0) continue;
      std::cout << "  " << k << ": " << (v.is_array() ? "<grid>" : v.dump()) << "\n";
    }
  }
  const auto& st = u.stats();
  std::cout << "Response time: last " << st.last << " ms, mean " << st.mean << " ms over " << st.count
            << " results\n";
}

int run_component(Role role, const LaunchConfig& cfg, const Inputs& in) {
  fogbus::TcpEnvironment env;
  std::unique_ptr<fogbus::Component> comp;
  try {
    comp = fogbus::launch_component(env, role, cfg);
  } catch (const fogbus::UsageError& ex) {
    std::cerr << "usage error: " << ex.what() << "\n";
    return kExitUsage;
  } catch (const fogbus::BindError& ex) {
    std::cerr << "bind failed: " << ex.what() << "\n";
    return kExitBind;
  }
  spdlog::info("{} listening on {}", comp->identity().nameLogPrinting, comp->address().str());

  int status = 0;
  if (auto* user = dynamic_cast<fogbus::User*>(comp.get())) {
    auto app = cfg.applicationName;
    if (app.rfind("NaiveFormula", 0) == 0) {
      auto a = in.a ? in.a : prompt("a");
      auto b = in.b ? in.b : prompt("b");
      auto c = in.c ? in.c : prompt("c");
      if (!a || !b || !c) {
        std::cerr << "usage error: a, b and c are required\n";
        return kExitUsage;
      }
      user->submit(Json{{"a", number(*a)}, {"b", number(*b)}, {"c", number(*c)}});
    } else {
      user->submit(fogbus::game_of_life_input(user->config().gameOfLifeTasks, in.seed));
    }
    user->on_finished([&](const fogbus::User& u) {
      status = u.phase() == fogbus::User::Phase::Finished && u.all_complete() ? 0 : 1;
      env.defer([&env] { env.stop(); });
    });
  }

  boost::asio::signal_set signals(env.io(), SIGINT, SIGTERM);
  signals.async_wait([&env](const boost::system::error_code&, int) { env.stop(); });
  comp->start();
  env.run();

  if (auto* user = dynamic_cast<fogbus::User*>(comp.get())) {
    if (user->phase() == fogbus::User::Phase::Failed) {
      std::cerr << "failed: " << user->error() << "\n";
      status = 1;
    }
    print_results(*user);
  }
  return status;
}

int run_scenario_file(const std::string& path, bool quiet, const std::string& output, bool withTrace) {
  fogbus::Scenario s;
  try {
    s = fogbus::Scenario::load(path);
  } catch (const fogbus::ScenarioError& ex) {
    std::cerr << "malformed scenario: " << ex.what() << "\n";
    return kExitUsage;
  }
  Json report;
  try {
    fogbus::Harness h(s);
    h.run();
    report = h.report();
    if (withTrace) report["messages"] = h.trace();
  } catch (const fogbus::ScenarioError& ex) {
    std::cerr << "malformed scenario: " << ex.what() << "\n";
    return kExitUsage;
  } catch (const fogbus::BindError& ex) {
    std::cerr << "scenario bind failed: " << ex.what() << "\n";
    return kExitUsage;
  }
  bool pass = report["status"] == "pass";
  if (!output.empty()) {
    std::ofstream(output) << report.dump(2) << "\n";
  }
  if (quiet) {
    std::size_t failed = 0;
    for (const auto& a : report["assertions"]) {
      if (!a["passed"].get<bool>()) {
        ++failed;
        std::cerr << "FAIL " << a["description"].get<std::string>() << ": " << a["detail"].get<std::string>() << "\n";
      }
    }
    std::cout << s.name << ": " << report["status"].get<std::string>() << " (" << report["assertions"].size()
              << " assertions, " << failed << " failed, " << report["trace"]["messages"] << " messages)\n";
  } else if (output.empty()) {
    std::cout << report.dump(2) << "\n";
  }
  return pass ? 0 : 1;
}

}  // namespace

int main(int argc, char** argv) {
  spdlog::set_default_logger(spdlog::stderr_color_mt("fogbus"));

  CLI::App app{"fogbus: edge/fog orchestration components"};
  app.require_subcommand(1);
  std::string level = "info";
  app.add_option("--logLevel", level, "trace, debug, info, warn, error or off");

  LaunchConfig cfg;
  Inputs in;
  auto* rl = app.add_subcommand("remote-logger", "collect logs from every component");
  add_launch_flags(rl, cfg, Role::RemoteLogger);
  auto* master = app.add_subcommand("master", "registry, scheduling, scaling and discovery");
  add_launch_flags(master, cfg, Role::Master);
  auto* actor = app.add_subcommand("actor", "host agent that starts task executors");
  add_launch_flags(actor, cfg, Role::Actor);
  auto* user = app.add_subcommand("user", "request an application and submit data");
  add_launch_flags(user, cfg, Role::User);
  user->add_option("--a", in.a);
  user->add_option("--b", in.b);
  user->add_option("--c", in.c);
  user->add_option("--seed", in.seed, "seed for generated Game of Life grids");
  auto* te = app.add_subcommand("task-executor", "run one task executor (settings via --configPath)");
  add_launch_flags(te, cfg, Role::TaskExecutor);

  std::string scenarioPath, output;
  bool quiet = false, withTrace = false;
  auto* sc = app.add_subcommand("scenario", "run a simulated cluster and report");
  sc->add_option("file", scenarioPath, "scenario JSON")->required();
  sc->add_flag("--quiet", quiet, "one summary line instead of the report");
  sc->add_option("--output", output, "write the report to this file");
  sc->add_flag("--trace", withTrace, "include every delivered message in the report");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kExitUsage;
  }
  spdlog::set_level(spdlog::level::from_str(level));

  if (sc->parsed()) {
    if (level == "info") spdlog::set_level(spdlog::level::warn);
    return run_scenario_file(scenarioPath, quiet, output, withTrace);
  }
  std::optional<Role> role;
  if (rl->parsed()) role = Role::RemoteLogger;
  if (master->parsed()) role = Role::Master;
  if (actor->parsed()) role = Role::Actor;
  if (user->parsed()) role = Role::User;
  if (te->parsed()) role = Role::TaskExecutor;
  try {
    return run_component(*role, cfg, in);
  } catch (const std::invalid_argument& ex) {
    std::cerr << "usage error: " << ex.what() << "\n";
    return kExitUsage;
  }
}
