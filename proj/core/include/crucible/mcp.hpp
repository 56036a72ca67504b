// MCP method layer: manifests, discovery, tool invocation, prompt retrieval.
#pragma once

#include <functional>
#include <map>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "crucible/wire.hpp"

namespace crucible::mcp {

inline constexpr std::string_view kProtocolVersion = "crucible/1";

namespace method {
inline constexpr std::string_view initialize = "initialize";
inline constexpr std::string_view tools_list = "tools/list";
inline constexpr std::string_view tools_call = "tools/call";
inline constexpr std::string_view prompts_list = "prompts/list";
inline constexpr std::string_view prompts_get = "prompts/get";
}  // namespace method

enum class ParamType { string, number, object };

struct ParamSpec {
  ParamType type = ParamType::string;
  bool required = false;
  bool operator==(const ParamSpec&) const = default;
};

using ParamsSchema = std::map<std::string, ParamSpec>;

struct ToolDescriptor {
  std::string name;
  std::string description;
  ParamsSchema params_schema;
  // Invoking the tool transmits data outside the client/server topology.
  bool egress = false;
  bool operator==(const ToolDescriptor&) const = default;
};

struct PromptDescriptor {
  std::string name;
  std::string description;
  ParamsSchema params_schema;
  bool operator==(const PromptDescriptor&) const = default;
};

struct ServerManifest {
  std::string server_id;
  std::string publisher;
  std::string version;
  std::vector<ToolDescriptor> tools;
  std::vector<PromptDescriptor> prompts;
  // Exact server ids, or "*".
  std::vector<std::string> interacts_with;
  // Lowercase hex HMAC-SHA256 over the canonical form.
  std::optional<std::string> signature;

  const ToolDescriptor* find_tool(std::string_view name) const;
  const PromptDescriptor* find_prompt(std::string_view name) const;

  bool operator==(const ServerManifest&) const = default;
};

class ManifestError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class CanonicalizationError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Throws ManifestError on any invariant violation (id syntax, tool name
/// syntax, duplicate names, malformed interacts_with entries).
void validate(const ServerManifest& manifest);

Json to_json(const ToolDescriptor& tool);
Json to_json(const PromptDescriptor& prompt);
Json to_json(const ServerManifest& manifest);
ServerManifest manifest_from_json(const Json& j);
ServerManifest load_manifest(const std::string& path);

/// Sorted keys at every level, no whitespace. Floats are rejected.
std::string canonicalize_json(const Json& value);

/// Canonical bytes of the manifest with its signature excluded; this is
/// the attestation input.
std::string canonicalize_manifest(const ServerManifest& manifest);

using ToolHandler = std::function<Json(const Json& args)>;
using PromptHandler = std::function<std::string(const Json& args)>;

/// Name → handler maps. Frozen once handed to a Server.
class HandlerRegistry {
 public:
  HandlerRegistry& tool(std::string name, ToolHandler handler);
  HandlerRegistry& prompt(std::string name, PromptHandler handler);

  const ToolHandler* find_tool(std::string_view name) const;
  const PromptHandler* find_prompt(std::string_view name) const;

 private:
  std::map<std::string, ToolHandler, std::less<>> tools_;
  std::map<std::string, PromptHandler, std::less<>> prompts_;
};

/// -32602 unless every required param is present and every declared param
/// that is present has the declared type. Undeclared params pass through.
void validate_args(const ParamsSchema& schema, const Json& args);

std::vector<ToolDescriptor> list_tools(const ServerManifest& manifest);
std::vector<PromptDescriptor> list_prompts(const ServerManifest& manifest);

Json call_tool(const ServerManifest& manifest, const HandlerRegistry& registry,
               std::string_view name, const Json& args);

std::string get_prompt(const ServerManifest& manifest, const HandlerRegistry& registry,
                       std::string_view name, const Json& args);

/// Replaces `{key}` with the value of vars[key] (strings verbatim, other
/// JSON dumped). Unknown keys are left as written.
std::string render_template(std::string_view tmpl, const Json& vars);

/// Per-connection protocol state machine.
class Session {
 public:
  Session(const ServerManifest& manifest, const HandlerRegistry& registry);

  /// Reply for a request, nothing for a notification.
  std::optional<wire::Envelope> handle(const wire::Envelope& message);

  /// Reply for one raw line, including parse/shape failures.
  std::optional<std::string> handle_line(std::string_view line);

  Json handle_initialize(const Json& params);

  bool initialized() const { return initialized_; }

 private:
  Json dispatch(std::string_view method, const Json& params);

  const ServerManifest& manifest_;
  const HandlerRegistry& registry_;
  bool initialized_ = false;
};

/// A manifest plus its handlers; serves one connection at a time over a
/// pair of descriptors until the input reaches end of stream.
class Server {
 public:
  /// Throws ManifestError if a manifest tool or prompt has no handler.
  Server(ServerManifest manifest, HandlerRegistry registry);

  const ServerManifest& manifest() const { return manifest_; }
  const HandlerRegistry& registry() const { return registry_; }

  void serve(int in_fd, int out_fd) const;

 private:
  ServerManifest manifest_;
  HandlerRegistry registry_;
};

}  // namespace crucible::mcp
