#pragma once

// Pluggable persistence for the remote logger.

#include <filesystem>
#include <fstream>
#include <functional>
#include <memory>
#include <stdexcept>
#include <string>
#include <vector>

#include <spdlog/spdlog.h>

#include "fogbus/protocol.hpp"

namespace fogbus {

struct LogRecord {
  std::string kind;  // hostResources | responseTime | executionDuration | event
  ComponentIdentity source;
  double timestamp = 0.0;
  Json payload = Json::object();
  friend bool operator==(const LogRecord&, const LogRecord&) = default;
};

inline void to_json(Json& j, const LogRecord& r) {
  j = Json{{"kind", r.kind}, {"source", r.source}, {"timestamp", r.timestamp}, {"payload", r.payload}};
}
inline void from_json(const Json& j, LogRecord& r) {
  r.kind = j.at("kind").get<std::string>();
  r.source = j.at("source").get<ComponentIdentity>();
  r.timestamp = j.at("timestamp").get<double>();
  r.payload = j.at("payload");
}

using LogFilter = std::function<bool(const LogRecord&)>;

class LogStore {
 public:
  virtual ~LogStore() = default;
  virtual void append(const LogRecord& r) = 0;
  /// Records of `kind` (all kinds when empty) accepted by `filter`, in append order.
  [[nodiscard]] virtual std::vector<LogRecord> query(const std::string& kind, const LogFilter& filter = {}) const = 0;
  [[nodiscard]] virtual std::size_t size() const = 0;
};

class MemoryLogStore : public LogStore {
 public:
  void append(const LogRecord& r) override { records_.push_back(r); }

  [[nodiscard]] std::vector<LogRecord> query(const std::string& kind, const LogFilter& filter = {}) const override {
    std::vector<LogRecord> out;
    for (const auto& r : records_) {
      if ((kind.empty() || r.kind == kind) && (!filter || filter(r))) out.push_back(r);
    }
    return out;
  }

  [[nodiscard]] std::size_t size() const override { return records_.size(); }

 protected:
  std::vector<LogRecord> records_;
};

/// Newline-delimited JSON, append-only. Existing records are loaded on open;
/// a torn final line is skipped.
class FileLogStore final : public MemoryLogStore {
 public:
  explicit FileLogStore(std::filesystem::path path) : path_(std::move(path)) {
    if (path_.has_parent_path()) std::filesystem::create_directories(path_.parent_path());
    load();
    out_.open(path_, std::ios::app | std::ios::binary);
    if (!out_) throw std::runtime_error("cannot open log file " + path_.string());
  }

  void append(const LogRecord& r) override {
    Json j = r;
    out_ << j.dump() << '\n';
    out_.flush();
    if (!out_) throw std::runtime_error("write failed on " + path_.string());
    MemoryLogStore::append(r);
  }

  void close() { out_.close(); }
  [[nodiscard]] const std::filesystem::path& path() const { return path_; }
  [[nodiscard]] std::size_t skipped_lines() const { return skipped_; }

 private:
  void load() {
    std::ifstream in(path_, std::ios::binary);
    if (!in) return;
    std::string line;
    while (std::getline(in, line)) {
      if (line.empty()) continue;
      try {
        records_.push_back(Json::parse(line).get<LogRecord>());
      } catch (const std::exception& ex) {
        ++skipped_;
        spdlog::warn("skipping unreadable log line in {}: {}", path_.string(), ex.what());
      }
    }
  }

  std::filesystem::path path_;
  std::ofstream out_;
  std::size_t skipped_ = 0;
};

/// "" or "memory" selects the in-memory store; anything else is a file path.
inline std::unique_ptr<LogStore> open_log_store(const std::string& logPath) {
  if (logPath.empty() || logPath == "memory") return std::make_unique<MemoryLogStore>();
  return std::make_unique<FileLogStore>(logPath);
}

}  // namespace fogbus
