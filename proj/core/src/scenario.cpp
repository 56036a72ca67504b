#include <algorithm>
#include <fstream>
#include <regex>
#include <set>

#include "crucible/runner.hpp"

namespace crucible::runner {

namespace fs = std::filesystem;

std::string_view to_string(TransportKind kind) {
  return kind == TransportKind::loopback ? "loopback" : "subprocess";
}

TransportKind transport_kind_from(std::string_view name) {
  if (name == "subprocess") return TransportKind::subprocess;
  if (name == "loopback") return TransportKind::loopback;
  throw std::invalid_argument("unknown transport '" + std::string(name) + "'");
}

namespace {

std::string join(const std::string& path, std::string_view key) {
  return path.empty() ? std::string(key) : path + "." + std::string(key);
}

void only_members(const Json& j, const std::string& path, std::initializer_list<std::string_view> allowed) {
  for (const auto& [key, _] : j.items()) {
    if (std::find(allowed.begin(), allowed.end(), key) == allowed.end())
      throw ScenarioError(join(path, key), "unknown member");
  }
}

const Json& member(const Json& j, const std::string& path, const char* key) {
  auto it = j.find(key);
  if (it == j.end()) throw ScenarioError(join(path, key), "required");
  return *it;
}

std::string string_member(const Json& j, const std::string& path, const char* key) {
  const Json& v = member(j, path, key);
  if (!v.is_string()) throw ScenarioError(join(path, key), "must be a string");
  return v.get<std::string>();
}

std::string resolve(const fs::path& base, const std::string& p) {
  if (p.empty()) return p;
  fs::path path(p);
  return (path.is_absolute() ? path : (base / path)).lexically_normal().string();
}

ServerSpec parse_server(const Json& j, const std::string& path, const fs::path& base) {
  if (!j.is_object()) throw ScenarioError(path, "must be an object");
  only_members(j, path, {"server_id", "builtin", "command", "fixture", "manifest", "publisher", "transport"});

  static const std::regex id_re("[a-z0-9_-]+");
  ServerSpec s;
  s.server_id = string_member(j, path, "server_id");
  if (!std::regex_match(s.server_id, id_re)) throw ScenarioError(path + ".server_id", "must match [a-z0-9_-]+");

  bool has_builtin = j.contains("builtin");
  bool has_command = j.contains("command");
  if (has_builtin == has_command) throw ScenarioError(path, "needs exactly one of builtin or command");
  if (has_builtin) {
    std::string b = string_member(j, path, "builtin");
    auto ids = servers::builtin_ids();
    if (std::find(ids.begin(), ids.end(), b) == ids.end())
      throw ScenarioError(path + ".builtin", "unknown builtin '" + b + "'");
    s.builtin = b;
  } else {
    const Json& cmd = j["command"];
    if (!cmd.is_array() || cmd.empty()) throw ScenarioError(path + ".command", "must be a non-empty array");
    for (std::size_t i = 0; i < cmd.size(); ++i) {
      if (!cmd[i].is_string()) throw ScenarioError(path + ".command[" + std::to_string(i) + "]", "must be a string");
      s.command.push_back(cmd[i].get<std::string>());
    }
    if (s.command[0].find('/') != std::string::npos) s.command[0] = resolve(base, s.command[0]);
  }
  if (j.contains("fixture")) s.fixture = resolve(base, string_member(j, path, "fixture"));
  if (j.contains("manifest")) s.manifest = resolve(base, string_member(j, path, "manifest"));
  if (j.contains("publisher")) s.publisher = string_member(j, path, "publisher");
  if (j.contains("transport")) {
    try {
      s.transport = transport_kind_from(string_member(j, path, "transport"));
    } catch (const std::invalid_argument& ex) {
      throw ScenarioError(path + ".transport", ex.what());
    }
  }
  if (!s.builtin && s.transport == TransportKind::loopback)
    throw ScenarioError(path + ".transport", "external commands can only run as subprocesses");
  return s;
}

ScriptAction parse_action(const Json& j, const std::string& path, const std::set<std::string>& declared) {
  if (!j.is_object()) throw ScenarioError(path, "must be an object");
  ScriptAction a;
  std::string action = string_member(j, path, "action");
  if (action == "get_prompt") {
    only_members(j, path, {"action", "server_id", "prompt", "args"});
    a.kind = ScriptAction::Kind::get_prompt;
    a.name = string_member(j, path, "prompt");
  } else if (action == "call_tool") {
    only_members(j, path, {"action", "server_id", "tool", "args"});
    a.kind = ScriptAction::Kind::call_tool;
    a.name = string_member(j, path, "tool");
  } else {
    throw ScenarioError(path + ".action", "must be get_prompt or call_tool");
  }
  a.server_id = string_member(j, path, "server_id");
  if (!declared.count(a.server_id))
    throw ScenarioError(path + ".server_id", "server '" + a.server_id + "' is not declared");
  if (auto it = j.find("args"); it != j.end()) {
    if (!it->is_object()) throw ScenarioError(path + ".args", "must be an object");
    a.args = *it;
  }
  return a;
}

}  // namespace

Scenario parse_scenario(const Json& j, const fs::path& base_dir) {
  if (!j.is_object()) throw ScenarioError("$", "scenario must be a JSON object");
  only_members(j, "", {"name", "description", "servers", "policy", "consent", "sink", "script"});

  Scenario s;
  s.name = string_member(j, "", "name");
  if (j.contains("description")) s.description = string_member(j, "", "description");

  const Json& servers = member(j, "", "servers");
  if (!servers.is_array() || servers.empty()) throw ScenarioError("servers", "must be a non-empty array");
  std::set<std::string> declared;
  for (std::size_t i = 0; i < servers.size(); ++i) {
    std::string path = "servers[" + std::to_string(i) + "]";
    ServerSpec spec = parse_server(servers[i], path, base_dir);
    if (!declared.insert(spec.server_id).second)
      throw ScenarioError(path + ".server_id", "duplicate server_id '" + spec.server_id + "'");
    s.servers.push_back(std::move(spec));
  }

  if (auto it = j.find("policy"); it != j.end()) {
    try {
      s.policy = policy::config_from_json(*it);
    } catch (const std::invalid_argument& ex) {
      throw ScenarioError("policy", ex.what());
    }
  }
  if (auto it = j.find("consent"); it != j.end()) {
    try {
      s.consent = agent::consent_from_json(*it);
    } catch (const std::invalid_argument& ex) {
      throw ScenarioError("consent", ex.what());
    }
  }
  if (auto it = j.find("sink"); it != j.end()) {
    if (!it->is_object()) throw ScenarioError("sink", "must be an object");
    only_members(*it, "sink", {"enabled", "port"});
    if (auto e = it->find("enabled"); e != it->end()) {
      if (!e->is_boolean()) throw ScenarioError("sink.enabled", "must be boolean");
      s.sink.enabled = e->get<bool>();
    }
    if (auto p = it->find("port"); p != it->end()) {
      if (!p->is_number_integer() || p->get<int>() < 0 || p->get<int>() > 65535)
        throw ScenarioError("sink.port", "must be an integer in 0..65535");
      s.sink.port = p->get<int>();
    }
  }

  const Json& script = member(j, "", "script");
  if (!script.is_array()) throw ScenarioError("script", "must be an array");
  for (std::size_t i = 0; i < script.size(); ++i)
    s.script.push_back(parse_action(script[i], "script[" + std::to_string(i) + "]", declared));
  return s;
}

Scenario load_scenario(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw ScenarioError("$", "cannot open scenario file " + path.string());
  Json j;
  try {
    j = Json::parse(in);
  } catch (const Json::exception& ex) {
    throw ScenarioError("$", std::string("invalid JSON: ") + ex.what());
  }
  return parse_scenario(j, fs::absolute(path).parent_path());
}

Scenario apply_overrides(Scenario s, const RunOptions& o) {
  if (o.consent) {
    s.consent.mode = *o.consent;
    if (*o.consent != agent::ConsentMode::rules) s.consent.rules.clear();
  }
  if (o.mitigations) s.policy.enabled = *o.mitigations;
  if (o.transport) {
    for (auto& server : s.servers)
      if (server.builtin) server.transport = *o.transport;
  }
  return s;
}

std::vector<fs::path> list_scenarios(const fs::path& dir) {
  std::vector<fs::path> out;
  std::error_code ec;
  for (const auto& entry : fs::directory_iterator(dir, ec)) {
    if (entry.is_regular_file() && entry.path().extension() == ".json") out.push_back(entry.path());
  }
  std::sort(out.begin(), out.end());
  return out;
}

}  // namespace crucible::runner
