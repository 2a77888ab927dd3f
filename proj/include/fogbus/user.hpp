#pragma once

#include <deque>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include <spdlog/spdlog.h>

#include "fogbus/appmodel.hpp"
#include "fogbus/component.hpp"

namespace fogbus {

/// Running mean of response times, updated once per result message.
struct ResponseTimeStats {
  std::size_t count = 0;
  double mean = 0.0;
  double last = 0.0;
  double sum = 0.0;

  void update(double ms) {
    ++count;
    last = ms;
    sum += ms;
    mean += (ms - mean) / double(count);
  }
};

inline void to_json(Json& j, const ResponseTimeStats& s) {
  j = Json{{"count", s.count}, {"mean", s.mean}, {"last", s.last}};
}

/// Result keys an application's aggregate must hold to be complete.
inline std::vector<std::string> expected_result_keys(const std::string& app, int gameOfLifeTasks = kDefaultGameOfLifeTasks) {
  if (app == "NaiveFormulaSerialized") return {"finalResult"};
  if (app == "NaiveFormulaParallelized") return {"resultPart0", "resultPart1", "resultPart2"};
  if (app.rfind("GameOfLife", 0) == 0) {
    std::vector<std::string> out;
    for (int k = 0; k < gameOfLifeTasks; ++k) out.push_back(game_of_life_output_key(k));
    return out;
  }
  return {};
}

inline std::vector<std::string> missing_result_keys(const std::string& app, const DataRecord& aggregate,
                                                    int gameOfLifeTasks = kDefaultGameOfLifeTasks) {
  std::vector<std::string> out;
  for (auto& k : expected_result_keys(app, gameOfLifeTasks)) {
    if (!aggregate.is_object() || !aggregate.contains(k)) out.push_back(std::move(k));
  }
  return out;
}

inline bool completion_predicate(const std::string& app, const DataRecord& aggregate,
                                 int gameOfLifeTasks = kDefaultGameOfLifeTasks) {
  if (expected_result_keys(app, gameOfLifeTasks).empty()) return false;
  return missing_result_keys(app, aggregate, gameOfLifeTasks).empty();
}

struct UserConfig {
  std::string applicationName;
  std::string applicationLabel;
  Address master;
  std::optional<Address> remoteLogger;
  double timeoutMs = 30000.0;           // per submission
  double placementTimeoutMs = 30000.0;  // until serviceReady
  double registerRetryMs = 1000.0;
  int gameOfLifeTasks = kDefaultGameOfLifeTasks;
  bool deregisterWhenDone = true;
};

inline void from_json(const Json& j, UserConfig& c) {
  UserConfig d;
  c.applicationName = j.at("applicationName").get<std::string>();
  c.applicationLabel = j.value("applicationLabel", std::string{});
  c.master = j.at("master").get<Address>();
  c.timeoutMs = j.value("timeoutMs", d.timeoutMs);
  c.placementTimeoutMs = j.value("placementTimeoutMs", d.placementTimeoutMs);
  c.registerRetryMs = j.value("registerRetryMs", d.registerRetryMs);
  c.gameOfLifeTasks = j.value("gameOfLifeTasks", d.gameOfLifeTasks);
  c.deregisterWhenDone = j.value("deregisterWhenDone", d.deregisterWhenDone);
  c.remoteLogger.reset();
  if (j.contains("remoteLogger")) c.remoteLogger = j.at("remoteLogger").get<Address>();
}

struct Submission {
  std::string dataID;
  DataRecord input;
  DataRecord aggregate = DataRecord::object();
  bool done = false;
  bool ok = false;
  std::string error;
  std::vector<std::string> missing;
  double sentAt = 0.0;
  std::size_t results = 0;
};

inline void to_json(Json& j, const Submission& s) {
  j = Json{{"dataID", s.dataID}, {"input", s.input}, {"aggregate", s.aggregate}, {"done", s.done},
           {"ok", s.ok},         {"error", s.error}, {"missing", s.missing},     {"results", s.results}};
}

class User final : public Component {
 public:
  enum class Phase { Idle, Registering, Placing, Ready, Finished, Failed };

  User(Environment& env, const std::string& ip, std::optional<int> port, std::string hostID, UserConfig cfg)
      : Component(env, Role::User, ip, port, std::move(hostID)), cfg_(std::move(cfg)), master_(cfg_.master) {}

  /// Queues an input; it is sent once the service is ready and earlier inputs completed.
  void submit(DataRecord input) {
    Submission s;
    s.dataID = self_.addr.str() + "#" + std::to_string(submissions_.size());
    s.input = std::move(input);
    submissions_.push_back(std::move(s));
    if (phase_ == Phase::Ready) send_next();
  }

  void start() override {
    if (!find_application(cfg_.applicationName, cfg_.gameOfLifeTasks)) {
      fail("unknownApplication", cfg_.applicationName);
      return;
    }
    placementTimer_ = after(cfg_.placementTimeoutMs, [this] {
      placementTimer_.reset();
      if (phase_ == Phase::Registering || phase_ == Phase::Placing) fail("placementTimeout", master_.str());
    });
    request_placement();
  }

  void on_finished(std::function<void(const User&)> fn) { onFinished_ = std::move(fn); }

  [[nodiscard]] Phase phase() const { return phase_; }
  [[nodiscard]] const std::string& error() const { return error_; }
  [[nodiscard]] const ResponseTimeStats& stats() const { return stats_; }
  [[nodiscard]] const std::vector<Submission>& submissions() const { return submissions_; }
  [[nodiscard]] int redirects() const { return redirects_; }
  [[nodiscard]] const Address& master() const { return master_; }
  [[nodiscard]] const UserConfig& config() const { return cfg_; }
  [[nodiscard]] bool all_complete() const {
    return std::all_of(submissions_.begin(), submissions_.end(), [](const Submission& s) { return s.done && s.ok; });
  }

 protected:
  void on_message(const MessageEnvelope& e) override {
    if (answer_probe(e)) return;
    const auto k = e.kind();
    if (k == kind::registered) {
      on_registered(e);
    } else if (k == kind::redirect) {
      on_redirect(e);
    } else if (k == kind::serviceReady) {
      on_service_ready();
    } else if (k == kind::finalResult) {
      on_result(e);
    } else if (k == kind::error) {
      on_error(e);
    } else {
      spdlog::debug("{} ignores {}", self_.name, k.str());
    }
  }

 private:
  void request_placement() {
    phase_ = Phase::Registering;
    auto r = send(Role::Master, master_, kind::registerComponent,
                  {{"applicationName", cfg_.applicationName}, {"applicationLabel", cfg_.applicationLabel}});
    if (!r) {
      retryTimer_ = after(cfg_.registerRetryMs, [this] {
        retryTimer_.reset();
        if (phase_ == Phase::Registering) request_placement();
      });
    }
  }

  void on_registered(const MessageEnvelope& e) {
    if (phase_ != Phase::Registering) return;
    cancel(retryTimer_);
    self_.componentID = e.data.at("identity").at("componentID").get<std::string>();
    rename(&e.source);
    phase_ = Phase::Placing;
  }

  void on_redirect(const MessageEnvelope& e) {
    if (phase_ != Phase::Registering && phase_ != Phase::Placing) return;
    if (++redirects_ > 1) {
      fail("redirectLoop", "second redirect");
      return;
    }
    master_ = e.data.at("master").get<ComponentIdentity>().addr;
    self_.componentID = std::string(kUnassignedID);
    rename();
    request_placement();
  }

  void on_service_ready() {
    if (phase_ != Phase::Placing) return;
    cancel(placementTimer_);
    phase_ = Phase::Ready;
    send_next();
  }

  Submission* current() {
    for (auto& s : submissions_) {
      if (!s.done) return &s;
    }
    return nullptr;
  }

  void send_next() {
    Submission* s = current();
    if (s == nullptr) {
      finish();
      return;
    }
    if (s->sentAt != 0.0) return;  // in flight
    s->sentAt = env_.now_ms();
    lastDataSentTime_ = s->sentAt;
    send(Role::Master, master_, kind::sensoryData, {{"dataID", s->dataID}, {"record", s->input}});
    submissionTimer_ = after(cfg_.timeoutMs, [this] {
      submissionTimer_.reset();
      if (auto* cur = current()) close_submission(*cur, "timeout");
    });
  }

  void on_result(const MessageEnvelope& e) {
    Submission* s = current();
    if (s == nullptr || e.data.value("dataID", std::string{}) != s->dataID) return;
    double ms = env_.now_ms() - lastDataSentTime_;
    stats_.update(ms);
    ++s->results;
    if (cfg_.remoteLogger) {
      send(Role::RemoteLogger, *cfg_.remoteLogger, kind::responseTime,
           {{"userID", self_.componentID}, {"applicationName", cfg_.applicationName}, {"responseTime", ms}});
    }
    try {
      merge_records(s->aggregate, e.data.value("result", DataRecord::object()));
    } catch (const std::exception& ex) {
      close_submission(*s, std::string("conflictingResults: ") + ex.what());
      return;
    }
    if (completion_predicate(cfg_.applicationName, s->aggregate, cfg_.gameOfLifeTasks)) close_submission(*s, {});
  }

  void on_error(const MessageEnvelope& e) {
    const std::string reason = e.data.value("reason", std::string{"error"});
    if (phase_ == Phase::Registering || phase_ == Phase::Placing) {
      fail(reason, e.data.value("detail", std::string{}));
      return;
    }
    Submission* s = current();
    if (s == nullptr) return;
    auto dataID = e.data.value("dataID", std::string{});
    if (!dataID.empty() && dataID != s->dataID) return;
    close_submission(*s, reason + ": " + e.data.value("detail", std::string{}));
  }

  /// Finishes the current submission; an empty `error` means success.
  void close_submission(Submission& s, const std::string& error) {
    cancel(submissionTimer_);
    s.done = true;
    s.missing = missing_result_keys(cfg_.applicationName, s.aggregate, cfg_.gameOfLifeTasks);
    s.ok = error.empty() && s.missing.empty();
    if (!s.ok) {
      s.error = "partialResults";
      if (!error.empty()) s.error += " (" + error + ")";
      spdlog::warn("{} submission {} incomplete, missing {}", self_.name, s.dataID, Json(s.missing).dump());
    }
    send_next();
  }

  void finish() {
    if (phase_ == Phase::Finished || !cfg_.deregisterWhenDone) return;
    phase_ = Phase::Finished;
    send(Role::Master, master_, kind::deregister, {});
    if (onFinished_) onFinished_(*this);
  }

  void fail(const std::string& reason, const std::string& detail) {
    phase_ = Phase::Failed;
    error_ = detail.empty() ? reason : reason + ": " + detail;
    for (auto* t : {&placementTimer_, &retryTimer_, &submissionTimer_}) cancel(*t);
    spdlog::warn("{} failed: {}", self_.name, error_);
    if (onFinished_) onFinished_(*this);
  }

  UserConfig cfg_;
  Address master_;
  Phase phase_ = Phase::Idle;
  std::string error_;
  int redirects_ = 0;
  double lastDataSentTime_ = 0.0;
  ResponseTimeStats stats_;
  std::vector<Submission> submissions_;
  std::function<void(const User&)> onFinished_;
  std::optional<TimerId> placementTimer_, retryTimer_, submissionTimer_;
};

inline std::string_view to_string(User::Phase p) {
  switch (p) {
    case User::Phase::Idle: return "Idle";
    case User::Phase::Registering: return "Registering";
    case User::Phase::Placing: return "Placing";
    case User::Phase::Ready: return "Ready";
    case User::Phase::Finished: return "Finished";
    case User::Phase::Failed: return "Failed";
  }
  return "?";
}

}  // namespace fogbus
