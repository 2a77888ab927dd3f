#pragma once

#include <map>
#include <memory>
#include <string>

#include <spdlog/spdlog.h>

#include "fogbus/component.hpp"
#include "fogbus/log_store.hpp"

namespace fogbus {

class RemoteLogger final : public Component {
 public:
  RemoteLogger(Environment& env, const std::string& ip, std::optional<int> port,
               std::unique_ptr<LogStore> store = std::make_unique<MemoryLogStore>(), std::string hostID = {})
      : Component(env, Role::RemoteLogger, ip, port, std::move(hostID)), store_(std::move(store)) {}

  [[nodiscard]] const LogStore& store() const { return *store_; }
  [[nodiscard]] std::size_t rejected() const { return rejected_; }

  /// Latest hostResources profile per hostID.
  [[nodiscard]] std::map<std::string, Json> latest_profiles() const {
    std::map<std::string, Json> out;
    for (const auto& r : store_->query("hostResources")) out[r.source.hostID] = r.payload.at("resources");
    return out;
  }

  /// Appends one log envelope; returns false when the payload is rejected.
  bool ingest(const MessageEnvelope& e) {
    if (e.type != "log") return false;
    LogRecord r{e.subType, e.source, e.sentAtSourceTimestamp, e.data};
    if (e.subType == "hostResources") {
      try {
        if (!e.data.contains("resources")) throw ProfileError("missing resources");
        validate_profile(e.data.at("resources").get<HostProfile>());
      } catch (const std::exception& ex) {
        ++rejected_;
        spdlog::error("{} rejected hostResources from {}: {}", self_.name, e.source.name, ex.what());
        return false;
      }
    }
    store_->append(r);
    return true;
  }

 protected:
  void on_message(const MessageEnvelope& e) override {
    if (answer_probe(e)) return;
    if (e.kind() == kind::requestProfiles) {
      if (e.source.role != Role::Master) {
        reply_error(e, "refused", "profiles are served to masters only");
        return;
      }
      Json profiles = Json::object();
      for (auto& [host, p] : latest_profiles()) profiles[host] = p;
      send(e.source, kind::allResourcesProfiles, Json{{"profiles", profiles}});
      return;
    }
    if (e.type == "log") {
      if (!ingest(e)) reply_error(e, "malformedPayload", e.subType);
      return;
    }
    spdlog::debug("{} ignores {}", self_.name, e.kind().str());
  }

 private:
  std::unique_ptr<LogStore> store_;
  std::size_t rejected_ = 0;
};

}  // namespace fogbus
