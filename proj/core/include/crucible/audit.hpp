// Append-only run transcript, serialized as JSON Lines.
#pragma once

#include <cstdint>
#include <map>
#include <mutex>
#include <optional>
#include <ostream>
#include <string>
#include <string_view>
#include <vector>

#include "crucible/transport.hpp"
#include "crucible/wire.hpp"

namespace crucible::audit {

enum class EventKind {
  message_out,
  message_in,
  discovery,
  policy_verdict,
  consent_decision,
  sink_capture,
  plan_outcome,
};

std::string_view to_string(EventKind kind);
EventKind event_kind_from(std::string_view name);

struct AuditEvent {
  std::int64_t seq = 0;
  std::string at;
  EventKind kind = EventKind::message_out;
  Json payload;
};

Json to_json(const AuditEvent& event);
AuditEvent event_from_json(const Json& j);

class AuditLog {
 public:
  void record(EventKind kind, Json payload);

  /// Merges `fields` into the payload of the next message_in from
  /// `server_id`. Used to attach taints to tool results.
  void annotate_next_in(const std::string& server_id, Json fields);
  void discard_annotation(const std::string& server_id);

  /// Observer that records every line as message_out / message_in.
  transport::MessageObserver observer();

  std::vector<AuditEvent> events() const;

 private:
  mutable std::mutex mu_;
  std::vector<AuditEvent> events_;
  std::map<std::string, Json> pending_;
};

void write_jsonl(std::ostream& out, const std::vector<AuditEvent>& events);
std::vector<AuditEvent> read_jsonl(std::istream& in);

/// Events as JSON with every "at" member removed, for replay comparison.
std::vector<Json> strip_timestamps(const std::vector<AuditEvent>& events);

}  // namespace crucible::audit
