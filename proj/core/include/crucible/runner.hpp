// Scenario files, topology bring-up, script execution and verdicts.
#pragma once

#include <filesystem>
#include <iosfwd>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "crucible/agent.hpp"
#include "crucible/audit.hpp"
#include "crucible/policy.hpp"
#include "crucible/servers.hpp"

namespace crucible::runner {

enum class TransportKind { subprocess, loopback };
std::string_view to_string(TransportKind kind);
TransportKind transport_kind_from(std::string_view name);

struct ServerSpec {
  std::string server_id;
  // Exactly one of builtin / command.
  std::optional<std::string> builtin;
  std::vector<std::string> command;
  std::string fixture;   // absolute path or empty
  std::string manifest;  // absolute path or empty
  std::optional<std::string> publisher;
  TransportKind transport = TransportKind::subprocess;
};

struct ScriptAction {
  enum class Kind { get_prompt, call_tool };
  Kind kind = Kind::get_prompt;
  std::string server_id;
  // Prompt name or tool name.
  std::string name;
  Json args = Json::object();
};

struct SinkSpec {
  bool enabled = true;
  int port = 0;
};

struct Scenario {
  std::string name;
  std::string description;
  std::vector<ServerSpec> servers;
  policy::PolicyConfig policy;
  agent::ConsentPolicy consent;
  SinkSpec sink;
  std::vector<ScriptAction> script;
};

/// Carries the JSON path of the offending member, e.g. "script[0].server_id".
class ScenarioError : public std::runtime_error {
 public:
  ScenarioError(std::string path, const std::string& what)
      : std::runtime_error(path + ": " + what), path_(std::move(path)) {}
  const std::string& path() const { return path_; }

 private:
  std::string path_;
};

/// Relative fixture/manifest/command paths resolve against `base_dir`.
Scenario parse_scenario(const Json& j, const std::filesystem::path& base_dir);
Scenario load_scenario(const std::filesystem::path& path);

struct RunOptions {
  std::optional<agent::ConsentMode> consent;
  std::optional<policy::Mitigations> mitigations;
  std::optional<TransportKind> transport;
  // Scripted answers for interactive consent; prompts go to `prompt_out`.
  std::istream* answers = nullptr;
  std::ostream* prompt_out = nullptr;
  // Binary started with `--as-server <id>` for subprocess builtins.
  // Defaults to the running executable.
  std::filesystem::path server_executable;
};

/// Applies RunOptions overrides to a scenario.
Scenario apply_overrides(Scenario scenario, const RunOptions& options);

enum class Verdict { exfiltrated, secure };
std::string_view to_string(Verdict verdict);

struct BlockedBy {
  int step = 0;
  // capability | boundary | attestation | consent
  std::string rule;
  bool operator==(const BlockedBy&) const = default;
};

struct VerdictFields {
  Verdict verdict = Verdict::secure;
  std::optional<BlockedBy> blocked_by;
  // Capture seqs that carried tainted values.
  std::vector<std::int64_t> exfiltrating_captures;
};

namespace exit_code {
inline constexpr int secure = 0;
inline constexpr int usage = 1;
inline constexpr int runtime_failure = 2;
inline constexpr int exfiltrated = 3;
}  // namespace exit_code

struct RunReport {
  std::string scenario_name;
  std::vector<audit::AuditEvent> events;
  std::vector<servers::SinkCapture> captures;
  std::optional<Verdict> verdict;
  std::optional<BlockedBy> blocked_by;
  std::vector<agent::PlanOutcome> outcomes;
  // Set when setup or teardown failed; no verdict then.
  std::string error;

  int exit_code() const;
};

Json to_json(const RunReport& report);

/// EXFILTRATED iff some capture body holds a value equal to a tool result
/// value tainted by a sensitive server (any non-origin server when no
/// sensitive servers are configured). blocked_by comes from the earliest
/// blocked plan outcome.
VerdictFields compute_verdict(const std::vector<audit::AuditEvent>& events,
                              const std::vector<servers::SinkCapture>& captures,
                              const policy::PolicyConfig& config);

RunReport run_scenario(const Scenario& scenario, const RunOptions& options = {});

/// Scenario files shipped in `dir`, sorted by name.
std::vector<std::filesystem::path> list_scenarios(const std::filesystem::path& dir);

}  // namespace crucible::runner
