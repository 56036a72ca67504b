#include <cerrno>
#include <system_error>

#include "crucible/mcp.hpp"

namespace crucible::mcp {

using wire::ErrorCode;
using wire::RpcError;

HandlerRegistry& HandlerRegistry::tool(std::string name, ToolHandler handler) {
  tools_[std::move(name)] = std::move(handler);
  return *this;
}

HandlerRegistry& HandlerRegistry::prompt(std::string name, PromptHandler handler) {
  prompts_[std::move(name)] = std::move(handler);
  return *this;
}

const ToolHandler* HandlerRegistry::find_tool(std::string_view name) const {
  auto it = tools_.find(name);
  return it == tools_.end() ? nullptr : &it->second;
}

const PromptHandler* HandlerRegistry::find_prompt(std::string_view name) const {
  auto it = prompts_.find(name);
  return it == prompts_.end() ? nullptr : &it->second;
}

void validate_args(const ParamsSchema& schema, const Json& args) {
  if (!args.is_object()) throw RpcError(ErrorCode::invalid_params, "arguments must be an object");
  for (const auto& [name, spec] : schema) {
    auto it = args.find(name);
    if (it == args.end()) {
      if (spec.required)
        throw RpcError(ErrorCode::invalid_params, "missing required argument '" + name + "'");
      continue;
    }
    bool ok = false;
    switch (spec.type) {
      case ParamType::string: ok = it->is_string(); break;
      case ParamType::number: ok = it->is_number(); break;
      case ParamType::object: ok = it->is_object(); break;
    }
    if (!ok) throw RpcError(ErrorCode::invalid_params, "argument '" + name + "' has the wrong type");
  }
}

std::vector<ToolDescriptor> list_tools(const ServerManifest& manifest) { return manifest.tools; }

std::vector<PromptDescriptor> list_prompts(const ServerManifest& manifest) {
  return manifest.prompts;
}

Json call_tool(const ServerManifest& manifest, const HandlerRegistry& registry,
               std::string_view name, const Json& args) {
  const ToolDescriptor* tool = manifest.find_tool(name);
  const ToolHandler* handler = registry.find_tool(name);
  if (tool == nullptr || handler == nullptr)
    throw RpcError(ErrorCode::method_not_found, "unknown tool '" + std::string(name) + "'");
  validate_args(tool->params_schema, args);
  return (*handler)(args);
}

std::string get_prompt(const ServerManifest& manifest, const HandlerRegistry& registry,
                       std::string_view name, const Json& args) {
  const PromptDescriptor* prompt = manifest.find_prompt(name);
  const PromptHandler* handler = registry.find_prompt(name);
  if (prompt == nullptr || handler == nullptr)
    throw RpcError(ErrorCode::method_not_found, "unknown prompt '" + std::string(name) + "'");
  validate_args(prompt->params_schema, args);
  return (*handler)(args);
}

std::string render_template(std::string_view tmpl, const Json& vars) {
  std::string out;
  out.reserve(tmpl.size());
  std::size_t pos = 0;
  while (pos < tmpl.size()) {
    auto open = tmpl.find('{', pos);
    if (open == std::string_view::npos) break;
    auto close = tmpl.find('}', open + 1);
    if (close == std::string_view::npos) break;
    std::string key(tmpl.substr(open + 1, close - open - 1));
    auto it = vars.is_object() ? vars.find(key) : vars.end();
    bool is_key = !key.empty() && key.find_first_of("{\" :") == std::string::npos;
    if (!is_key || it == vars.end()) {
      out.append(tmpl.substr(pos, open + 1 - pos));
      pos = open + 1;
      continue;
    }
    out.append(tmpl.substr(pos, open - pos));
    out += it->is_string() ? it->get<std::string>() : it->dump();
    pos = close + 1;
  }
  out.append(tmpl.substr(pos));
  return out;
}

Session::Session(const ServerManifest& manifest, const HandlerRegistry& registry)
    : manifest_(manifest), registry_(registry) {}

Json Session::handle_initialize(const Json& /*params*/) {
  if (initialized_) throw RpcError(ErrorCode::invalid_request, "connection already initialized");
  initialized_ = true;
  return {{"protocol_version", kProtocolVersion}, {"manifest", to_json(manifest_)}};
}

namespace {

std::pair<std::string, Json> name_and_arguments(const Json& params) {
  if (!params.is_object()) throw RpcError(ErrorCode::invalid_params, "params must be an object");
  auto name = params.find("name");
  if (name == params.end() || !name->is_string())
    throw RpcError(ErrorCode::invalid_params, "params.name must be a string");
  Json args = Json::object();
  if (auto it = params.find("arguments"); it != params.end() && !it->is_null()) args = *it;
  return {name->get<std::string>(), std::move(args)};
}

Json descriptors_json(const auto& list) {
  Json out = Json::array();
  for (const auto& d : list) out.push_back(to_json(d));
  return out;
}

}  // namespace

Json Session::dispatch(std::string_view m, const Json& params) {
  if (m == method::initialize) return handle_initialize(params);
  if (!initialized_) throw RpcError(ErrorCode::invalid_request, "initialize must come first");

  if (m == method::tools_list) return {{"tools", descriptors_json(list_tools(manifest_))}};
  if (m == method::prompts_list) return {{"prompts", descriptors_json(list_prompts(manifest_))}};
  if (m == method::tools_call) {
    auto [name, args] = name_and_arguments(params);
    return {{"content", call_tool(manifest_, registry_, name, args)}};
  }
  if (m == method::prompts_get) {
    auto [name, args] = name_and_arguments(params);
    return {{"text", get_prompt(manifest_, registry_, name, args)}};
  }
  throw RpcError(ErrorCode::method_not_found, "unknown method '" + std::string(m) + "'");
}

std::optional<wire::Envelope> Session::handle(const wire::Envelope& message) {
  if (message.kind == wire::Kind::notification) return std::nullopt;
  if (message.kind == wire::Kind::response) {
    return wire::Envelope::failure(message.id, {ErrorCode::invalid_request,
                                                "server does not accept responses"});
  }
  Json params = message.params.value_or(Json::object());
  try {
    return wire::Envelope::success(*message.id, dispatch(*message.method, params));
  } catch (const RpcError& ex) {
    return wire::Envelope::failure(message.id, ex.error());
  } catch (const std::exception& ex) {
    return wire::Envelope::failure(message.id, {ErrorCode::server_error, ex.what()});
  }
}

std::optional<std::string> Session::handle_line(std::string_view line) {
  std::optional<wire::Envelope> reply;
  try {
    reply = handle(wire::decode(line));
  } catch (const wire::DecodeError& ex) {
    reply = wire::Envelope::failure(ex.id(), {ex.code(), ex.what()});
  }
  if (!reply) return std::nullopt;
  return wire::encode(*reply);
}

Server::Server(ServerManifest manifest, HandlerRegistry registry)
    : manifest_(std::move(manifest)), registry_(std::move(registry)) {
  validate(manifest_);
  for (const auto& t : manifest_.tools)
    if (!registry_.find_tool(t.name)) throw ManifestError("no handler for tool '" + t.name + "'");
  for (const auto& p : manifest_.prompts)
    if (!registry_.find_prompt(p.name)) throw ManifestError("no handler for prompt '" + p.name + "'");
}

void Server::serve(int in_fd, int out_fd) const {
  Session session(manifest_, registry_);
  wire::FrameReader reader(in_fd);
  for (;;) {
    std::string line;
    try {
      line = reader.read_frame();
    } catch (const wire::EndOfStream&) {
      return;
    } catch (const wire::FrameTooLarge&) {
      wire::write_all(out_fd, wire::encode(wire::Envelope::failure(
                                  std::nullopt, {ErrorCode::parse_error, "frame too large"})));
      return;
    }
    auto reply = session.handle_line(line);
    if (!reply) continue;
    try {
      wire::write_all(out_fd, *reply);
    } catch (const std::system_error& ex) {
      if (ex.code().value() == EPIPE) return;
      throw;
    }
  }
}

}  // namespace crucible::mcp
