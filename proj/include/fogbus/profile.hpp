#pragma once

// Host resource profile as carried in log/hostResources payloads.

#include <algorithm>
#include <chrono>
#include <cstdint>
#include <fstream>
#include <sstream>
#include <stdexcept>
#include <string>
#include <thread>

#include <json.hpp>

namespace fogbus {

struct ProfileError : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};

struct CpuProfile {
  int cores = 1;
  double frequency = 1000.0;  // MHz
  double utilization = 0.0;
  double utilizationPeak = 0.0;
  friend bool operator==(const CpuProfile&, const CpuProfile&) = default;
};

struct MemoryProfile {
  std::uint64_t maximum = 0;  // bytes
  double utilization = 0.0;
  double utilizationPeak = 0.0;
  friend bool operator==(const MemoryProfile&, const MemoryProfile&) = default;
};

struct HostProfile {
  CpuProfile cpu;
  MemoryProfile memory;
  friend bool operator==(const HostProfile&, const HostProfile&) = default;
};

inline void to_json(nlohmann::json& j, const HostProfile& p) {
  j = nlohmann::json{{"cpu",
                      {{"cores", p.cpu.cores},
                       {"frequency", p.cpu.frequency},
                       {"utilization", p.cpu.utilization},
                       {"utilizationPeak", p.cpu.utilizationPeak}}},
                     {"memory",
                      {{"maximum", p.memory.maximum},
                       {"utilization", p.memory.utilization},
                       {"utilizationPeak", p.memory.utilizationPeak}}}};
}

/// Parses without validating; see validate_profile.
inline void from_json(const nlohmann::json& j, HostProfile& p) {
  try {
    const auto& cpu = j.at("cpu");
    p.cpu.cores = cpu.at("cores").get<int>();
    p.cpu.frequency = cpu.at("frequency").get<double>();
    p.cpu.utilization = cpu.at("utilization").get<double>();
    p.cpu.utilizationPeak = cpu.at("utilizationPeak").get<double>();
    const auto& mem = j.at("memory");
    p.memory.maximum = mem.at("maximum").get<std::uint64_t>();
    p.memory.utilization = mem.at("utilization").get<double>();
    p.memory.utilizationPeak = mem.at("utilizationPeak").get<double>();
  } catch (const nlohmann::json::exception& ex) {
    throw ProfileError(std::string("malformed host profile: ") + ex.what());
  }
}

inline void validate_profile(const HostProfile& p) {
  auto unit = [](double v) { return v >= 0.0 && v <= 1.0; };
  if (p.cpu.cores < 1) throw ProfileError("cpu.cores must be >= 1");
  if (!(p.cpu.frequency > 0.0)) throw ProfileError("cpu.frequency must be > 0");
  if (!unit(p.cpu.utilization) || !unit(p.cpu.utilizationPeak)) throw ProfileError("cpu utilization outside [0,1]");
  if (!unit(p.memory.utilization) || !unit(p.memory.utilizationPeak)) {
    throw ProfileError("memory utilization outside [0,1]");
  }
  if (p.cpu.utilization > p.cpu.utilizationPeak) throw ProfileError("cpu utilization above its peak");
  if (p.memory.utilization > p.memory.utilizationPeak) throw ProfileError("memory utilization above its peak");
}

inline HostProfile clamp_profile(HostProfile p) {
  auto c = [](double v) { return std::clamp(v, 0.0, 1.0); };
  p.cpu.cores = std::max(1, p.cpu.cores);
  p.cpu.utilization = c(p.cpu.utilization);
  p.cpu.utilizationPeak = std::max(c(p.cpu.utilizationPeak), p.cpu.utilization);
  p.memory.utilization = c(p.memory.utilization);
  p.memory.utilizationPeak = std::max(c(p.memory.utilizationPeak), p.memory.utilization);
  return p;
}

struct SaturatedHostError : std::domain_error {
  using std::domain_error::domain_error;
};

/// cores x GHz x idle fraction. Throws when the host has no idle capacity.
inline double effective_capacity(const HostProfile& p) {
  if (p.cpu.cores < 1 || !(p.cpu.frequency > 0.0)) throw ProfileError("host has no compute capacity");
  if (p.cpu.utilization >= 1.0) throw SaturatedHostError("host cpu is saturated");
  return p.cpu.cores * (p.cpu.frequency / 1000.0) * (1.0 - p.cpu.utilization);
}

/// Samples the local machine through /proc. Utilization is measured over `window`.
inline HostProfile sample_local_profile(std::chrono::milliseconds window = std::chrono::milliseconds(50)) {
  HostProfile p;
  p.cpu.cores = std::max(1U, std::thread::hardware_concurrency());

  auto read_cpu = []() -> std::pair<unsigned long long, unsigned long long> {
    std::ifstream in("/proc/stat");
    std::string label;
    unsigned long long user = 0, nice = 0, sys = 0, idle = 0, iowait = 0, irq = 0, softirq = 0, steal = 0;
    in >> label >> user >> nice >> sys >> idle >> iowait >> irq >> softirq >> steal;
    unsigned long long idleAll = idle + iowait;
    return {user + nice + sys + irq + softirq + steal + idleAll, idleAll};
  };
  auto [total0, idle0] = read_cpu();
  std::this_thread::sleep_for(window);
  auto [total1, idle1] = read_cpu();
  if (total1 > total0) {
    p.cpu.utilization = 1.0 - double(idle1 - idle0) / double(total1 - total0);
  }

  {
    std::ifstream in("/proc/cpuinfo");
    std::string line;
    while (std::getline(in, line)) {
      if (line.rfind("cpu MHz", 0) == 0) {
        auto pos = line.find(':');
        if (pos != std::string::npos) p.cpu.frequency = std::stod(line.substr(pos + 1));
        break;
      }
    }
  }
  {
    std::ifstream in("/proc/meminfo");
    std::string line;
    unsigned long long total = 0, available = 0;
    while (std::getline(in, line)) {
      std::istringstream fields(line);
      std::string key;
      unsigned long long value = 0;
      fields >> key >> value;
      if (key == "MemTotal:") total = value;
      if (key == "MemAvailable:") available = value;
    }
    p.memory.maximum = total * 1024ULL;
    if (total > 0) p.memory.utilization = 1.0 - double(available) / double(total);
  }
  p.cpu.utilizationPeak = 1.0;
  p.memory.utilizationPeak = 1.0;
  return clamp_profile(p);
}

}  // namespace fogbus
