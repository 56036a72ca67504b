#include "crucible/audit.hpp"

#include <istream>
#include <stdexcept>

#include "crucible/servers.hpp"

namespace crucible::audit {

namespace {

constexpr std::pair<EventKind, std::string_view> kNames[] = {
    {EventKind::message_out, "message_out"},       {EventKind::message_in, "message_in"},
    {EventKind::discovery, "discovery"},           {EventKind::policy_verdict, "policy_verdict"},
    {EventKind::consent_decision, "consent_decision"}, {EventKind::sink_capture, "sink_capture"},
    {EventKind::plan_outcome, "plan_outcome"},
};

}  // namespace

std::string_view to_string(EventKind kind) {
  for (auto [k, name] : kNames)
    if (k == kind) return name;
  return "?";
}

EventKind event_kind_from(std::string_view name) {
  for (auto [k, n] : kNames)
    if (n == name) return k;
  throw std::invalid_argument("unknown event kind '" + std::string(name) + "'");
}

Json to_json(const AuditEvent& e) {
  return {{"seq", e.seq}, {"at", e.at}, {"kind", to_string(e.kind)}, {"payload", e.payload}};
}

AuditEvent event_from_json(const Json& j) {
  AuditEvent e;
  e.seq = j.at("seq").get<std::int64_t>();
  e.at = j.value("at", std::string());
  e.kind = event_kind_from(j.at("kind").get<std::string>());
  e.payload = j.value("payload", Json::object());
  return e;
}

void AuditLog::record(EventKind kind, Json payload) {
  std::lock_guard lock(mu_);
  if (kind == EventKind::message_in) {
    if (auto it = pending_.find(payload.value("server_id", std::string())); it != pending_.end()) {
      payload.update(it->second);
      pending_.erase(it);
    }
  }
  AuditEvent e;
  e.seq = static_cast<std::int64_t>(events_.size()) + 1;
  e.at = servers::utc_now_iso8601();
  e.kind = kind;
  e.payload = std::move(payload);
  events_.push_back(std::move(e));
}

void AuditLog::annotate_next_in(const std::string& server_id, Json fields) {
  std::lock_guard lock(mu_);
  pending_[server_id] = std::move(fields);
}

void AuditLog::discard_annotation(const std::string& server_id) {
  std::lock_guard lock(mu_);
  pending_.erase(server_id);
}

transport::MessageObserver AuditLog::observer() {
  return [this](transport::Direction dir, std::string_view server_id, std::string_view line) {
    record(dir == transport::Direction::out ? EventKind::message_out : EventKind::message_in,
           {{"server_id", server_id}, {"line", line}});
  };
}

std::vector<AuditEvent> AuditLog::events() const {
  std::lock_guard lock(mu_);
  return events_;
}

void write_jsonl(std::ostream& out, const std::vector<AuditEvent>& events) {
  for (const auto& e : events) out << to_json(e).dump() << '\n';
}

std::vector<AuditEvent> read_jsonl(std::istream& in) {
  std::vector<AuditEvent> out;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    out.push_back(event_from_json(Json::parse(line)));
  }
  return out;
}

std::vector<Json> strip_timestamps(const std::vector<AuditEvent>& events) {
  std::vector<Json> out;
  out.reserve(events.size());
  for (const auto& e : events) {
    Json j = to_json(e);
    j.erase("at");
    out.push_back(std::move(j));
  }
  return out;
}

}  // namespace crucible::audit
