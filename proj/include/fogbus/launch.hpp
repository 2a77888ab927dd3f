#pragma once

// Builds one component from command-line style settings.

#include <fstream>
#include <memory>
#include <optional>
#include <stdexcept>
#include <string>

#include "fogbus/actor.hpp"
#include "fogbus/master.hpp"
#include "fogbus/remote_logger.hpp"
#include "fogbus/task_executor.hpp"
#include "fogbus/user.hpp"

namespace fogbus {

struct UsageError : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};

struct LaunchConfig {
  std::string bindIP = "127.0.0.1";
  std::optional<int> bindPort;
  std::string masterIP = "127.0.0.1";
  std::optional<int> masterPort;
  std::string remoteLoggerIP = "127.0.0.1";
  std::optional<int> remoteLoggerPort;
  std::string schedulerName = "RankingBased";
  std::string applicationName;
  std::string applicationLabel;
  std::string containerName;
  std::string videoPath;
  std::string logPath;
  std::string configPath;
};

/// Rejects settings that can never work for `role`.
inline void validate_launch(Role role, const LaunchConfig& c, const PortPlan& plan) {
  if (!c.videoPath.empty()) {
    throw UsageError("--videoPath: video applications are out of scope for this build");
  }
  if (c.bindPort && !plan.range(role).contains(*c.bindPort)) {
    auto r = plan.range(role);
    throw UsageError("--bindPort " + std::to_string(*c.bindPort) + " is outside the " + std::string(to_string(role)) +
                     " range " + std::to_string(r.first) + "-" + std::to_string(r.last));
  }
  if (role == Role::Master && !is_known_scheduler(c.schedulerName)) {
    throw UsageError("--schedulerName: unknown scheduler '" + c.schedulerName + "'");
  }
  if (role == Role::User) {
    if (c.applicationName.empty()) throw UsageError("--applicationName is required");
    if (!find_application(c.applicationName)) {
      throw UsageError("--applicationName: unknown application '" + c.applicationName + "'");
    }
  }
}

inline Json load_config_file(const std::string& path) {
  if (path.empty()) return Json::object();
  std::ifstream in(path);
  if (!in) throw UsageError("--configPath: cannot read " + path);
  try {
    Json j = Json::parse(in);
    if (!j.is_object()) throw UsageError("--configPath: expected a JSON object");
    return j;
  } catch (const Json::parse_error& ex) {
    throw UsageError(std::string("--configPath: ") + ex.what());
  }
}

inline Address master_address(const LaunchConfig& c, const PortPlan& plan) {
  return {c.masterIP, c.masterPort.value_or(plan.range(Role::Master).first)};
}

inline Address remote_logger_address(const LaunchConfig& c, const PortPlan& plan) {
  return {c.remoteLoggerIP, c.remoteLoggerPort.value_or(plan.range(Role::RemoteLogger).first)};
}

/// Constructs (but does not start) the component. Throws UsageError or BindError.
inline std::unique_ptr<Component> launch_component(Environment& env, Role role, const LaunchConfig& c) {
  const auto& plan = env.ports();
  validate_launch(role, c, plan);
  Json file = load_config_file(c.configPath);
  std::unique_ptr<Component> out;
  try {
    switch (role) {
      case Role::RemoteLogger:
        out = std::make_unique<RemoteLogger>(env, c.bindIP, c.bindPort, open_log_store(c.logPath), c.bindIP);
        break;
      case Role::Master: {
        Json mj = file;
        mj["schedulerName"] = c.schedulerName;
        auto mc = mj.get<MasterConfig>();
        mc.remoteLogger = remote_logger_address(c, plan);
        out = std::make_unique<Master>(env, c.bindIP, c.bindPort, c.bindIP, mc);
        break;
      }
      case Role::Actor: {
        auto ac = file.get<ActorConfig>();
        ac.master = master_address(c, plan);
        ac.remoteLogger = remote_logger_address(c, plan);
        out = std::make_unique<Actor>(env, c.bindIP, c.bindPort, c.bindIP, ac);
        break;
      }
      case Role::User: {
        Json uj = file;
        uj["applicationName"] = c.applicationName;
        uj["applicationLabel"] = c.applicationLabel;
        uj["master"] = master_address(c, plan);
        uj["remoteLogger"] = remote_logger_address(c, plan);
        out = std::make_unique<User>(env, c.bindIP, c.bindPort, c.bindIP, uj.get<UserConfig>());
        break;
      }
      case Role::TaskExecutor: {
        Json xj = file;
        xj["master"] = master_address(c, plan);
        if (!xj.contains("taskName") || !xj.contains("userID") || !xj.contains("applicationName")) {
          throw UsageError("task-executor needs taskName, userID and applicationName in --configPath");
        }
        auto xc = xj.get<ExecutorConfig>();
        xc.remoteLogger = remote_logger_address(c, plan);
        out = std::make_unique<TaskExecutor>(env, c.bindIP, c.bindPort, c.bindIP, xc);
        break;
      }
    }
  } catch (const Json::exception& ex) {
    throw UsageError(std::string("invalid configuration: ") + ex.what());
  }
  out->set_label(c.containerName);
  return out;
}

}  // namespace fogbus
