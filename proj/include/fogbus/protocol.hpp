#pragma once

// Wire envelope, message-kind catalog, component identity and codec.

#include <algorithm>
#include <array>
#include <cstdint>
#include <initializer_list>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

namespace fogbus {

using Json = nlohmann::json;

// ============================================================================
// Errors
// ============================================================================

struct ProtocolError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// Raised when the wire text is not a JSON document.
struct ParseError : ProtocolError {
  using ProtocolError::ProtocolError;
};

/// Raised when the document is JSON but not shaped like an envelope.
struct SchemaError : ProtocolError {
  SchemaError(std::string what, std::vector<std::string> missing = {})
      : ProtocolError(std::move(what)), missingElements(std::move(missing)) {}
  std::vector<std::string> missingElements;
};

/// Raised when (type, subType, subSubType) is not in the catalog.
struct CatalogError : ProtocolError {
  using ProtocolError::ProtocolError;
};

struct UnstampedEnvelopeError : ProtocolError {
  using ProtocolError::ProtocolError;
};

// ============================================================================
// Roles
// ============================================================================

enum class Role : std::uint8_t { User, Master, Actor, TaskExecutor, RemoteLogger };

inline constexpr std::array<Role, 5> kAllRoles{Role::User, Role::Master, Role::Actor,
                                               Role::TaskExecutor, Role::RemoteLogger};

inline std::string_view to_string(Role r) {
  switch (r) {
    case Role::User: return "User";
    case Role::Master: return "Master";
    case Role::Actor: return "Actor";
    case Role::TaskExecutor: return "TaskExecutor";
    case Role::RemoteLogger: return "RemoteLogger";
  }
  return "?";
}

inline std::optional<Role> role_from_string(std::string_view s) {
  for (Role r : kAllRoles) {
    if (to_string(r) == s) return r;
  }
  return std::nullopt;
}

/// Small bitset over roles; used by catalog routes.
class RoleSet {
 public:
  constexpr RoleSet() = default;
  constexpr RoleSet(std::initializer_list<Role> roles) {
    for (Role r : roles) bits_ |= bit(r);
  }
  static constexpr RoleSet any() {
    RoleSet s;
    s.bits_ = 0x1F;
    return s;
  }
  [[nodiscard]] constexpr bool contains(Role r) const { return (bits_ & bit(r)) != 0; }
  [[nodiscard]] constexpr bool is_any() const { return bits_ == 0x1F; }
  friend constexpr bool operator==(RoleSet, RoleSet) = default;

 private:
  static constexpr std::uint8_t bit(Role r) { return std::uint8_t(1U << static_cast<unsigned>(r)); }
  std::uint8_t bits_ = 0;
};

// ============================================================================
// Identity
// ============================================================================

struct Address {
  std::string ip;
  int port = 0;

  friend bool operator==(const Address&, const Address&) = default;
  friend auto operator<=>(const Address&, const Address&) = default;

  [[nodiscard]] std::string str() const { return ip + ":" + std::to_string(port); }
};

inline void to_json(Json& j, const Address& a) { j = Json::array({a.ip, a.port}); }
inline void from_json(const Json& j, Address& a) {
  if (!j.is_array() || j.size() != 2 || !j[0].is_string() || !j[1].is_number_integer()) {
    throw SchemaError("addr must be [ip, port]");
  }
  a.ip = j[0].get<std::string>();
  a.port = j[1].get<int>();
}

inline constexpr std::string_view kUnassignedID = "?";

struct ComponentIdentity {
  Role role = Role::User;
  std::string componentID{kUnassignedID};
  std::string hostID;
  Address addr;
  std::string name;
  std::string nameConsistent;
  std::string nameLogPrinting;

  friend bool operator==(const ComponentIdentity&, const ComponentIdentity&) = default;

  [[nodiscard]] bool registered() const { return componentID != kUnassignedID; }
};

inline std::string make_name(Role role, std::string_view componentID, const Address& addr) {
  std::string out{to_string(role)};
  out += '-';
  out += componentID;
  out += '_';
  out += addr.ip;
  out += '-';
  out += std::to_string(addr.port);
  return out;
}

/// Recomputes the three naming forms from role, id, host and address.
/// `master` is appended to the log-printing name when the component is bound to one.
inline void refresh_names(ComponentIdentity& id, const ComponentIdentity* master = nullptr) {
  id.name = make_name(id.role, id.componentID, id.addr);
  id.nameConsistent = std::string{to_string(id.role)} + "_" + id.hostID;
  id.nameLogPrinting = id.name;
  if (master != nullptr) id.nameLogPrinting += "_" + master->name;
}

inline ComponentIdentity make_identity(Role role, Address addr, std::string hostID) {
  ComponentIdentity id;
  id.role = role;
  id.hostID = std::move(hostID);
  id.addr = std::move(addr);
  refresh_names(id);
  return id;
}

/// Identity for a peer known only by role and address.
inline ComponentIdentity peer_identity(Role role, const Address& addr) {
  return make_identity(role, addr, addr.ip);
}

inline void to_json(Json& j, const ComponentIdentity& id) {
  j = Json{{"role", to_string(id.role)},
           {"componentID", id.componentID},
           {"hostID", id.hostID},
           {"addr", id.addr},
           {"name", id.name},
           {"nameConsistent", id.nameConsistent},
           {"nameLogPrinting", id.nameLogPrinting}};
}

inline void from_json(const Json& j, ComponentIdentity& id) {
  if (!j.is_object()) throw SchemaError("identity must be an object");
  static constexpr std::array<const char*, 7> keys{
      "role", "componentID", "hostID", "addr", "name", "nameConsistent", "nameLogPrinting"};
  std::vector<std::string> missing;
  for (const char* k : keys) {
    if (!j.contains(k)) missing.emplace_back(k);
  }
  if (!missing.empty()) throw SchemaError("identity missing fields", missing);
  auto role = role_from_string(j.at("role").get<std::string>());
  if (!role) throw SchemaError("unknown role '" + j.at("role").get<std::string>() + "'");
  id.role = *role;
  id.componentID = j.at("componentID").get<std::string>();
  id.hostID = j.at("hostID").get<std::string>();
  id.addr = j.at("addr").get<Address>();
  id.name = j.at("name").get<std::string>();
  id.nameConsistent = j.at("nameConsistent").get<std::string>();
  id.nameLogPrinting = j.at("nameLogPrinting").get<std::string>();
}

// ============================================================================
// Message kinds
// ============================================================================

struct MessageKind {
  std::string type;
  std::string subType;
  std::string subSubType;

  friend bool operator==(const MessageKind&, const MessageKind&) = default;
  friend auto operator<=>(const MessageKind&, const MessageKind&) = default;

  [[nodiscard]] std::string str() const {
    std::string s = type + "/" + subType;
    if (!subSubType.empty()) s += "/" + subSubType;
    return s;
  }
};

struct Route {
  RoleSet senders;
  RoleSet receivers;
  std::string description;
};

struct CatalogEntry {
  MessageKind kind;
  std::vector<Route> routes;

  [[nodiscard]] bool permits(Role sender, Role receiver) const {
    return std::any_of(routes.begin(), routes.end(), [&](const Route& r) {
      return r.senders.contains(sender) && r.receivers.contains(receiver);
    });
  }
};

namespace kind {
// placement
inline const MessageKind runTaskExecutor{"placement", "runTaskExecutor", ""};
inline const MessageKind lookup{"placement", "lookup", ""};
inline const MessageKind reuse{"placement", "reuse", ""};
// acknowledgement
inline const MessageKind ready{"acknowledgement", "ready", ""};
inline const MessageKind serviceReady{"acknowledgement", "serviceReady", ""};
inline const MessageKind waiting{"acknowledgement", "waiting", ""};
inline const MessageKind wait{"acknowledgement", "wait", ""};
inline const MessageKind error{"acknowledgement", "error", ""};
inline const MessageKind terminated{"acknowledgement", "terminated", ""};
// data
inline const MessageKind sensoryData{"data", "sensoryData", ""};
inline const MessageKind intermediateData{"data", "intermediateData", ""};
inline const MessageKind finalResult{"data", "finalResult", ""};
// scaling
inline const MessageKind getProfiles{"scaling", "getProfiles", ""};
inline const MessageKind profilesInfo{"scaling", "profilesInfo", ""};
inline const MessageKind initNewMaster{"scaling", "initNewMaster", ""};
inline const MessageKind redirect{"scaling", "redirect", ""};
// log
inline const MessageKind hostResources{"log", "hostResources", ""};
inline const MessageKind allResourcesProfiles{"log", "allResourcesProfiles", ""};
inline const MessageKind requestProfiles{"log", "requestProfiles", ""};
inline const MessageKind responseTime{"log", "responseTime", ""};
inline const MessageKind executionDuration{"log", "executionDuration", ""};
inline const MessageKind event{"log", "event", ""};
// resourcesDiscovery
inline const MessageKind requestActorsInfo{"resourcesDiscovery", "requestActorsInfo", ""};
inline const MessageKind actorsInfo{"resourcesDiscovery", "actorsInfo", ""};
inline const MessageKind advertiseMaster{"resourcesDiscovery", "advertiseMaster", ""};
inline const MessageKind probeTry{"resourcesDiscovery", "probe", "try"};
inline const MessageKind probeResult{"resourcesDiscovery", "probe", "result"};
// registration
inline const MessageKind registerComponent{"registration", "register", ""};
inline const MessageKind registered{"registration", "registered", ""};
inline const MessageKind deregister{"registration", "deregister", ""};
}  // namespace kind

/// Data-driven catalog; every subType belongs to exactly one type.
class MessageCatalog {
 public:
  explicit MessageCatalog(std::vector<CatalogEntry> entries) : entries_(std::move(entries)) {
    std::sort(entries_.begin(), entries_.end(),
              [](const CatalogEntry& a, const CatalogEntry& b) { return a.kind < b.kind; });
    for (std::size_t i = 0; i + 1 < entries_.size(); ++i) {
      if (entries_[i].kind == entries_[i + 1].kind) {
        throw std::logic_error("duplicate catalog kind " + entries_[i].kind.str());
      }
    }
    for (const auto& a : entries_) {
      for (const auto& b : entries_) {
        if (a.kind.subType == b.kind.subType && a.kind.type != b.kind.type) {
          throw std::logic_error("subType '" + a.kind.subType + "' under two types");
        }
      }
    }
  }

  [[nodiscard]] const CatalogEntry* classify(const MessageKind& k) const {
    auto it = std::lower_bound(entries_.begin(), entries_.end(), k,
                               [](const CatalogEntry& e, const MessageKind& key) { return e.kind < key; });
    if (it == entries_.end() || it->kind != k) return nullptr;
    return &*it;
  }

  [[nodiscard]] bool contains(const MessageKind& k) const { return classify(k) != nullptr; }
  [[nodiscard]] const std::vector<CatalogEntry>& entries() const { return entries_; }

 private:
  std::vector<CatalogEntry> entries_;
};

inline const MessageCatalog& catalog() {
  using R = Role;
  static const MessageCatalog instance{{
      {kind::runTaskExecutor,
       {{{R::Master}, {R::Actor}, "Master has finished the scheduling and sends this message in a no-reuse scenario"}}},
      {kind::lookup,
       {{{R::TaskExecutor}, {R::Master}, "Task Executor requests the address of its children"},
        {{R::Master}, {R::TaskExecutor}, "Master responds to the lookup message of Task Executors"}}},
      {kind::reuse,
       {{{R::Master}, {R::TaskExecutor}, "Master has finished the scheduling and sends this message in reuse scenario"}}},
      {kind::ready,
       {{{R::TaskExecutor}, {R::Master}, "Task Executor has received its children's information and is ready"}}},
      {kind::serviceReady,
       {{{R::Master}, {R::User}, "The service is ready and User can start sending sensory data"}}},
      {kind::waiting,
       {{{R::TaskExecutor}, {R::Master}, "Task Executor asks Master whether it can go into the cool off period"}}},
      {kind::wait,
       {{{R::Master}, {R::TaskExecutor}, "Master asks Task Executor to start its cool off period immediately"}}},
      {kind::error, {{RoleSet::any(), RoleSet::any(), "A request could not be served; data carries the reason"}}},
      {kind::terminated,
       {{{R::TaskExecutor}, {R::Master, R::Actor}, "Task Executor left the cooling-off period and stopped"}}},
      {kind::sensoryData, {{{R::User}, {R::Master}, "sensoryData forwarded from the User"}}},
      {kind::intermediateData,
       {{{R::Master}, {R::TaskExecutor}, "Master sends sensory data to Task Executor(s) for processing"},
        {{R::TaskExecutor}, {R::TaskExecutor}, "Task Executor sends intermediate data to other Task Executor(s)"}}},
      {kind::finalResult,
       {{{R::TaskExecutor}, {R::Master}, "Task Executor sends final results to Master"},
        {{R::Master}, {R::User}, "Master sends final results to User"}}},
      {kind::getProfiles, {{{R::Master}, {R::Master}, "Master A requests profiles from Master B"}}},
      {kind::profilesInfo, {{{R::Master}, {R::Master}, "Master B sends profiles to Master A"}}},
      {kind::initNewMaster, {{{R::Master}, {R::Actor}, "Master asks Actor to initiate a new Master"}}},
      {kind::redirect, {{{R::Master}, {R::User}, "Master asks User to request placement at another Master"}}},
      {kind::hostResources,
       {{{R::Actor, R::Master}, {R::RemoteLogger}, "Host resources profile of the sender's server"}}},
      {kind::allResourcesProfiles,
       {{{R::RemoteLogger}, {R::Master}, "Sent in response to requestProfiles message of the Master"}}},
      {kind::requestProfiles, {{{R::Master}, {R::RemoteLogger}, "Master asks for the latest profile of every host"}}},
      {kind::responseTime, {{{R::Master, R::User}, {R::RemoteLogger}, "Response time of one application result"}}},
      {kind::executionDuration,
       {{{R::TaskExecutor}, {R::RemoteLogger}, "Buffered execution durations of one Task Executor"}}},
      {kind::event, {{RoleSet::any(), {R::RemoteLogger}, "Free-form component event"}}},
      {kind::requestActorsInfo,
       {{{R::Master}, {R::Master}, "Master A asks Master B for the Actors registered at Master B"}}},
      {kind::actorsInfo, {{{R::Master}, {R::Master}, "Master B sends its registered Actors' information to Master A"}}},
      {kind::advertiseMaster, {{{R::Master}, {R::Actor}, "Master advertises itself to Actor"}}},
      {kind::probeTry,
       {{RoleSet::any(), RoleSet::any(), "Any component receiving probe message should provide its component role"}}},
      {kind::probeResult,
       {{RoleSet::any(), RoleSet::any(), "The response to the probe message received from one component"}}},
      {kind::registerComponent,
       {{{R::User, R::Actor, R::TaskExecutor}, {R::Master}, "Component asks a Master to register it"}}},
      {kind::registered,
       {{{R::Master}, {R::User, R::Actor, R::TaskExecutor}, "Master replies with the assigned componentID"}}},
      {kind::deregister, {{{R::User}, {R::Master}, "User leaves the Master"}}},
  }};
  return instance;
}

inline const CatalogEntry* classify(const MessageKind& k) { return catalog().classify(k); }

// ============================================================================
// Envelope
// ============================================================================

struct MessageEnvelope {
  ComponentIdentity source;
  ComponentIdentity destination;
  std::string type;
  std::string subType;
  std::string subSubType;
  Json data = Json::object();
  double sentAtSourceTimestamp = 0.0;
  double receivedAtLocalTimestamp = 0.0;

  [[nodiscard]] MessageKind kind() const { return {type, subType, subSubType}; }
  void set_kind(const MessageKind& k) {
    type = k.type;
    subType = k.subType;
    subSubType = k.subSubType;
  }

  friend bool operator==(const MessageEnvelope&, const MessageEnvelope&) = default;
};

inline constexpr std::array<const char*, 8> kEnvelopeElements{
    "source", "destination", "type", "subType", "subSubType", "data", "sentAtSourceTimestamp",
    "receivedAtLocalTimestamp"};

inline MessageEnvelope make_envelope(ComponentIdentity source, ComponentIdentity destination,
                                     const MessageKind& k, Json data = Json::object()) {
  MessageEnvelope e;
  e.source = std::move(source);
  e.destination = std::move(destination);
  e.set_kind(k);
  e.data = std::move(data);
  return e;
}

inline Json envelope_to_json(const MessageEnvelope& e) {
  if (!catalog().contains(e.kind())) throw CatalogError("unknown message kind " + e.kind().str());
  Json j;
  j["source"] = e.source;
  j["destination"] = e.destination;
  j["type"] = e.type;
  j["subType"] = e.subType;
  j["subSubType"] = e.subSubType;
  j["data"] = e.data;
  j["sentAtSourceTimestamp"] = e.sentAtSourceTimestamp;
  j["receivedAtLocalTimestamp"] = e.receivedAtLocalTimestamp;
  return j;
}

/// Canonical encoding: strict JSON, sorted keys, UTF-8.
inline std::string encode_message(const MessageEnvelope& e) { return envelope_to_json(e).dump(); }

inline MessageEnvelope envelope_from_json(const Json& j) {
  if (!j.is_object()) throw SchemaError("envelope must be a JSON object");
  std::vector<std::string> missing;
  for (const char* k : kEnvelopeElements) {
    if (!j.contains(k)) missing.emplace_back(k);
  }
  if (!missing.empty()) {
    std::string what = "envelope missing elements:";
    for (const auto& m : missing) what += " " + m;
    throw SchemaError(what, missing);
  }
  if (j.size() != kEnvelopeElements.size()) throw SchemaError("envelope carries extra top-level elements");

  MessageEnvelope e;
  try {
    e.source = j.at("source").get<ComponentIdentity>();
    e.destination = j.at("destination").get<ComponentIdentity>();
    e.type = j.at("type").get<std::string>();
    e.subType = j.at("subType").get<std::string>();
    e.subSubType = j.at("subSubType").get<std::string>();
    e.sentAtSourceTimestamp = j.at("sentAtSourceTimestamp").get<double>();
    e.receivedAtLocalTimestamp = j.at("receivedAtLocalTimestamp").get<double>();
  } catch (const Json::exception& ex) {
    throw SchemaError(std::string("envelope element has wrong type: ") + ex.what());
  }
  e.data = j.at("data");
  if (!e.data.is_object()) throw SchemaError("data must be an object");
  if (!catalog().contains(e.kind())) throw CatalogError("unknown message kind " + e.kind().str());
  return e;
}

inline MessageEnvelope decode_message(std::string_view raw) {
  Json j;
  try {
    j = Json::parse(raw);
  } catch (const Json::parse_error& ex) {
    throw ParseError(ex.what());
  }
  return envelope_from_json(j);
}

struct NetworkDelay {
  double milliseconds = 0.0;
  bool skewed = false;  // negative delay: clocks disagree
};

inline NetworkDelay measure_network_delay(const MessageEnvelope& e) {
  if (e.receivedAtLocalTimestamp == 0.0) throw UnstampedEnvelopeError("envelope has no receive stamp");
  double d = e.receivedAtLocalTimestamp - e.sentAtSourceTimestamp;
  return {d, d < 0.0};
}

}  // namespace fogbus
