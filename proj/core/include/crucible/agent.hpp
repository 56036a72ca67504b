// Deterministic stand-in for the LLM orchestrator. It fetches a prompt,
// pulls the fenced plan out of it and runs each step through the policy
// engine, the consent gate and finally the client connection.
#pragma once

#include <functional>
#include <iosfwd>
#include <map>
#include <optional>
#include <set>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "crucible/audit.hpp"
#include "crucible/policy.hpp"
#include "crucible/transport.hpp"

namespace crucible::agent {

using policy::Taints;

struct Directive {
  int step = 0;
  std::string server_id;
  std::string tool;
  // String leaves may hold ${stepK} or ${stepK.path.to.value}.
  Json args_template;
  bool operator==(const Directive&) const = default;
};

class PlanSyntaxError : public std::runtime_error {
 public:
  PlanSyntaxError(int line, const std::string& what)
      : std::runtime_error("plan line " + std::to_string(line) + ": " + what), line_(line) {}
  /// 1-based line within the prompt text.
  int line() const { return line_; }

 private:
  int line_;
};

class UnresolvedPlaceholder : public std::runtime_error {
 public:
  explicit UnresolvedPlaceholder(std::string token)
      : std::runtime_error("unresolved placeholder " + token), token_(std::move(token)) {}
  const std::string& token() const { return token_; }

 private:
  std::string token_;
};

/// Lines between ===PLAN=== and ===END PLAN===, each of the form
///   STEP <n>: CALL <server_id>/<tool> ARGS <json-object>
/// Blank lines inside the fence are skipped. No fence yields an empty plan.
std::vector<Directive> parse_directives(std::string_view prompt_text);

struct TaintedValue {
  Json value;
  Taints taints;
  bool operator==(const TaintedValue&) const = default;
};

using StepResults = std::map<int, TaintedValue>;

/// A leaf that is exactly one placeholder takes the referenced JSON value;
/// placeholders embedded in longer strings are spliced in as text. The
/// result is tainted by every step it drew from.
TaintedValue substitute(const Json& args_template, const StepResults& results);

// ---------------------------------------------------------------- consent

enum class ConsentMode { auto_approve, auto_deny, interactive, rules };
enum class ConsentDecision { approve, deny };

std::string_view to_string(ConsentMode mode);
ConsentMode consent_mode_from(std::string_view name);
std::string_view to_string(ConsentDecision decision);

struct ConsentRule {
  std::string server_pattern;  // exact id or "*"
  std::string tool_pattern;    // exact name or "*"
  ConsentDecision decision = ConsentDecision::deny;
};

struct ConsentPolicy {
  ConsentMode mode = ConsentMode::auto_approve;
  std::vector<ConsentRule> rules;
};

ConsentPolicy consent_from_json(const Json& j);
Json to_json(const ConsentPolicy& policy);

struct ToolInvocation {
  std::string server_id;
  std::string tool;
  Json args = Json::object();
  Taints taints;
};

class InteractiveUnavailable : public std::runtime_error {
 public:
  InteractiveUnavailable() : std::runtime_error("interactive consent requested but no terminal channel is attached") {}
};

/// Text and answers for interactive mode. Answers are read one line at a
/// time: y/yes approves, anything else (including end of input) denies.
struct ConsentChannel {
  std::istream* in = nullptr;
  std::ostream* out = nullptr;
};

/// APPROVE? <server_id>/<tool> args=<canonical-json> taints=<sorted list>
std::string consent_prompt(const ToolInvocation& invocation);

ConsentDecision consent_decide(const ConsentPolicy& policy, const ToolInvocation& invocation,
                               const ConsentChannel* channel = nullptr);

// ---------------------------------------------------------------- execution

struct PlanOutcome {
  enum class Status { completed, blocked, failed };
  Status status = Status::completed;
  int step = 0;
  // blocked: "policy" or "consent"
  std::string reason;
  // blocked by policy: the rule that denied
  policy::Rule rule = policy::Rule::none;
  // failed: the error message
  std::string error;

  static PlanOutcome completed() { return {}; }
};

std::string_view to_string(PlanOutcome::Status status);
Json to_json(const PlanOutcome& outcome);

/// JSON-RPC error for a blocked outcome: -32001 for a policy deny, -32002
/// for a consent deny. Empty for completed or failed outcomes.
std::optional<wire::ErrorObject> denial_error(const PlanOutcome& outcome);

struct ExecutionContext {
  std::string origin_server;
  StepResults results;
};

using PolicyHook = std::function<policy::PolicyVerdict(const policy::Invocation&)>;

/// Drives plans over a fixed set of client connections. Discovery state is
/// kept for the agent's lifetime: each server gets one tools/list before the
/// first call into it.
class Agent {
 public:
  Agent(std::map<std::string, transport::Connection*, std::less<>> connections, ConsentPolicy consent,
        PolicyHook policy, audit::AuditLog& log, const ConsentChannel* channel = nullptr);

  /// Runs after every completed tools/call (the runner uses it to log sink
  /// captures in transcript order).
  void set_after_call(std::function<void()> hook) { after_call_ = std::move(hook); }

  /// Fetch a prompt, extract its plan and run it with that server as origin.
  PlanOutcome run_prompt(const std::string& server_id, const std::string& prompt, const Json& args);

  /// A direct user call: a one-step plan whose origin is the target.
  PlanOutcome run_tool(const std::string& server_id, const std::string& tool, const Json& args);

  PlanOutcome execute_plan(const std::vector<Directive>& directives, ExecutionContext& ctx);

 private:
  PlanOutcome record_outcome(PlanOutcome outcome, const ExecutionContext& ctx);
  transport::Connection* connection(const std::string& server_id);
  // Empty optional when discovery went ahead.
  std::optional<PlanOutcome> discover(const std::string& server_id, int step, const ExecutionContext& ctx);

  std::map<std::string, transport::Connection*, std::less<>> connections_;
  ConsentPolicy consent_;
  PolicyHook policy_;
  audit::AuditLog& log_;
  const ConsentChannel* channel_;
  std::function<void()> after_call_;
  std::map<std::string, std::set<std::string>, std::less<>> discovered_;
};

}  // namespace crucible::agent
