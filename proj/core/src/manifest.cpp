#include <algorithm>
#include <fstream>
#include <regex>
#include <set>

#include "crucible/mcp.hpp"

namespace crucible::mcp {

namespace {

const std::regex& server_id_pattern() {
  static const std::regex re("[a-z0-9_-]+");
  return re;
}

const std::regex& tool_name_pattern() {
  static const std::regex re("[a-z0-9_.]+");
  return re;
}

std::string_view to_string(ParamType type) {
  switch (type) {
    case ParamType::string: return "string";
    case ParamType::number: return "number";
    case ParamType::object: return "object";
  }
  return "string";
}

ParamType param_type_from(const std::string& s) {
  if (s == "string") return ParamType::string;
  if (s == "number") return ParamType::number;
  if (s == "object") return ParamType::object;
  throw ManifestError("unknown param type '" + s + "'");
}

Json schema_to_json(const ParamsSchema& schema) {
  Json j = Json::object();
  for (const auto& [name, spec] : schema)
    j[name] = {{"type", to_string(spec.type)}, {"required", spec.required}};
  return j;
}

ParamsSchema schema_from_json(const Json& j) {
  if (!j.is_object()) throw ManifestError("params_schema must be an object");
  ParamsSchema out;
  for (const auto& [name, spec] : j.items()) {
    if (!spec.is_object() || !spec.contains("type") || !spec["type"].is_string())
      throw ManifestError("params_schema." + name + " needs a string 'type'");
    ParamSpec p;
    p.type = param_type_from(spec["type"].get<std::string>());
    if (auto r = spec.find("required"); r != spec.end()) {
      if (!r->is_boolean()) throw ManifestError("params_schema." + name + ".required must be boolean");
      p.required = r->get<bool>();
    }
    out.emplace(name, p);
  }
  return out;
}

std::string require_string(const Json& j, const char* key) {
  auto it = j.find(key);
  if (it == j.end() || !it->is_string())
    throw ManifestError(std::string("manifest field '") + key + "' must be a string");
  return it->get<std::string>();
}

std::string optional_string(const Json& j, const char* key) {
  auto it = j.find(key);
  if (it == j.end()) return {};
  if (!it->is_string()) throw ManifestError(std::string("'") + key + "' must be a string");
  return it->get<std::string>();
}

void write_canonical(const Json& v, std::string& out) {
  switch (v.type()) {
    case Json::value_t::object: {
      // nlohmann's default object is a std::map, so items() is already in
      // bytewise key order.
      out += '{';
      bool first = true;
      for (const auto& [key, child] : v.items()) {
        if (!first) out += ',';
        first = false;
        out += Json(key).dump();
        out += ':';
        write_canonical(child, out);
      }
      out += '}';
      break;
    }
    case Json::value_t::array: {
      out += '[';
      bool first = true;
      for (const auto& child : v) {
        if (!first) out += ',';
        first = false;
        write_canonical(child, out);
      }
      out += ']';
      break;
    }
    case Json::value_t::number_float:
      throw CanonicalizationError("floating-point value in canonical input: " + v.dump());
    default:
      out += v.dump();
  }
}

}  // namespace

const ToolDescriptor* ServerManifest::find_tool(std::string_view name) const {
  auto it = std::find_if(tools.begin(), tools.end(), [&](const auto& t) { return t.name == name; });
  return it == tools.end() ? nullptr : &*it;
}

const PromptDescriptor* ServerManifest::find_prompt(std::string_view name) const {
  auto it = std::find_if(prompts.begin(), prompts.end(), [&](const auto& p) { return p.name == name; });
  return it == prompts.end() ? nullptr : &*it;
}

void validate(const ServerManifest& m) {
  if (!std::regex_match(m.server_id, server_id_pattern()))
    throw ManifestError("server_id '" + m.server_id + "' must match [a-z0-9_-]+");

  std::set<std::string> seen;
  for (const auto& t : m.tools) {
    if (!std::regex_match(t.name, tool_name_pattern()))
      throw ManifestError("tool name '" + t.name + "' must match [a-z0-9_.]+");
    if (!seen.insert(t.name).second) throw ManifestError("duplicate tool '" + t.name + "'");
  }
  seen.clear();
  for (const auto& p : m.prompts) {
    if (p.name.empty()) throw ManifestError("empty prompt name");
    if (!seen.insert(p.name).second) throw ManifestError("duplicate prompt '" + p.name + "'");
  }
  for (const auto& peer : m.interacts_with) {
    if (peer != "*" && !std::regex_match(peer, server_id_pattern()))
      throw ManifestError("interacts_with entry '" + peer + "' is neither a server id nor '*'");
  }
}

Json to_json(const ToolDescriptor& t) {
  return {{"name", t.name},
          {"description", t.description},
          {"params_schema", schema_to_json(t.params_schema)},
          {"egress", t.egress}};
}

Json to_json(const PromptDescriptor& p) {
  return {{"name", p.name},
          {"description", p.description},
          {"params_schema", schema_to_json(p.params_schema)}};
}

Json to_json(const ServerManifest& m) {
  Json tools = Json::array();
  for (const auto& t : m.tools) tools.push_back(to_json(t));
  Json prompts = Json::array();
  for (const auto& p : m.prompts) prompts.push_back(to_json(p));
  Json j{{"server_id", m.server_id},
         {"publisher", m.publisher},
         {"version", m.version},
         {"tools", std::move(tools)},
         {"prompts", std::move(prompts)},
         {"interacts_with", m.interacts_with}};
  if (m.signature) j["signature"] = *m.signature;
  return j;
}

ServerManifest manifest_from_json(const Json& j) {
  if (!j.is_object()) throw ManifestError("manifest must be a JSON object");
  static const std::set<std::string> known{"server_id", "publisher", "version", "tools",
                                           "prompts", "interacts_with", "signature"};
  for (const auto& [key, _] : j.items())
    if (!known.count(key)) throw ManifestError("unknown manifest field '" + key + "'");

  ServerManifest m;
  m.server_id = require_string(j, "server_id");
  m.publisher = optional_string(j, "publisher");
  m.version = optional_string(j, "version");

  if (auto it = j.find("tools"); it != j.end()) {
    if (!it->is_array()) throw ManifestError("'tools' must be an array");
    for (const auto& t : *it) {
      if (!t.is_object()) throw ManifestError("tool descriptor must be an object");
      ToolDescriptor tool;
      tool.name = require_string(t, "name");
      tool.description = optional_string(t, "description");
      if (auto s = t.find("params_schema"); s != t.end()) tool.params_schema = schema_from_json(*s);
      if (auto e = t.find("egress"); e != t.end()) {
        if (!e->is_boolean()) throw ManifestError("'egress' must be boolean");
        tool.egress = e->get<bool>();
      }
      m.tools.push_back(std::move(tool));
    }
  }
  if (auto it = j.find("prompts"); it != j.end()) {
    if (!it->is_array()) throw ManifestError("'prompts' must be an array");
    for (const auto& p : *it) {
      if (!p.is_object()) throw ManifestError("prompt descriptor must be an object");
      PromptDescriptor prompt;
      prompt.name = require_string(p, "name");
      prompt.description = optional_string(p, "description");
      if (auto s = p.find("params_schema"); s != p.end()) prompt.params_schema = schema_from_json(*s);
      m.prompts.push_back(std::move(prompt));
    }
  }
  if (auto it = j.find("interacts_with"); it != j.end()) {
    if (!it->is_array()) throw ManifestError("'interacts_with' must be an array");
    for (const auto& peer : *it) {
      if (!peer.is_string()) throw ManifestError("interacts_with entries must be strings");
      m.interacts_with.push_back(peer.get<std::string>());
    }
  }
  if (auto it = j.find("signature"); it != j.end() && !it->is_null()) {
    if (!it->is_string()) throw ManifestError("'signature' must be a hex string");
    m.signature = it->get<std::string>();
  }
  validate(m);
  return m;
}

ServerManifest load_manifest(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ManifestError("cannot open manifest " + path);
  try {
    return manifest_from_json(Json::parse(in));
  } catch (const Json::exception& ex) {
    throw ManifestError("manifest " + path + ": " + ex.what());
  }
}

std::string canonicalize_json(const Json& value) {
  std::string out;
  write_canonical(value, out);
  return out;
}

std::string canonicalize_manifest(const ServerManifest& manifest) {
  Json j = to_json(manifest);
  j.erase("signature");
  return canonicalize_json(j);
}

}  // namespace crucible::mcp
