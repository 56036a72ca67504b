#include <algorithm>
#include <cctype>
#include <istream>
#include <ostream>

#include "crucible/agent.hpp"

namespace crucible::agent {

std::string_view to_string(ConsentMode mode) {
  switch (mode) {
    case ConsentMode::auto_approve: return "auto_approve";
    case ConsentMode::auto_deny: return "auto_deny";
    case ConsentMode::interactive: return "interactive";
    case ConsentMode::rules: return "rules";
  }
  return "?";
}

ConsentMode consent_mode_from(std::string_view name) {
  for (auto m : {ConsentMode::auto_approve, ConsentMode::auto_deny, ConsentMode::interactive, ConsentMode::rules})
    if (to_string(m) == name) return m;
  throw std::invalid_argument("unknown consent mode '" + std::string(name) + "'");
}

std::string_view to_string(ConsentDecision d) { return d == ConsentDecision::approve ? "approve" : "deny"; }

namespace {

ConsentDecision decision_from(const Json& j, const std::string& where) {
  if (j == "approve") return ConsentDecision::approve;
  if (j == "deny") return ConsentDecision::deny;
  throw std::invalid_argument(where + " must be \"approve\" or \"deny\"");
}

bool matches(std::string_view pattern, std::string_view value) { return pattern == "*" || pattern == value; }

}  // namespace

ConsentPolicy consent_from_json(const Json& j) {
  ConsentPolicy p;
  if (j.is_string()) {
    p.mode = consent_mode_from(j.get<std::string>());
  } else if (j.is_object()) {
    for (const auto& [key, _] : j.items())
      if (key != "mode" && key != "rules") throw std::invalid_argument("consent." + key + " is not a known member");
    if (!j.contains("mode") || !j["mode"].is_string()) throw std::invalid_argument("consent.mode must be a string");
    p.mode = consent_mode_from(j["mode"].get<std::string>());
    if (auto it = j.find("rules"); it != j.end()) {
      if (!it->is_array()) throw std::invalid_argument("consent.rules must be an array");
      for (std::size_t i = 0; i < it->size(); ++i) {
        const Json& r = (*it)[i];
        std::string where = "consent.rules[" + std::to_string(i) + "]";
        if (!r.is_object() || !r.contains("server") || !r["server"].is_string() || !r.contains("decision"))
          throw std::invalid_argument(where + " needs server and decision");
        p.rules.push_back({r["server"].get<std::string>(), r.value("tool", std::string("*")),
                           decision_from(r["decision"], where + ".decision")});
      }
    }
  } else {
    throw std::invalid_argument("consent must be a mode string or an object");
  }
  bool has_rules = j.is_object() && j.contains("rules");
  if ((p.mode == ConsentMode::rules) != has_rules)
    throw std::invalid_argument("consent.rules is required for mode 'rules' and only allowed there");
  return p;
}

Json to_json(const ConsentPolicy& p) {
  Json j{{"mode", to_string(p.mode)}};
  if (p.mode == ConsentMode::rules) {
    Json rules = Json::array();
    for (const auto& r : p.rules)
      rules.push_back({{"server", r.server_pattern}, {"tool", r.tool_pattern}, {"decision", to_string(r.decision)}});
    j["rules"] = std::move(rules);
  }
  return j;
}

std::string consent_prompt(const ToolInvocation& inv) {
  Json taints = Json::array();
  for (const auto& t : inv.taints) taints.push_back(t);
  // Canonical form when possible; floats in args fall back to plain dump().
  std::string args;
  try {
    args = mcp::canonicalize_json(inv.args);
  } catch (const mcp::CanonicalizationError&) {
    args = inv.args.dump();
  }
  return "APPROVE? " + inv.server_id + "/" + inv.tool + " args=" + args + " taints=" + taints.dump();
}

ConsentDecision consent_decide(const ConsentPolicy& policy, const ToolInvocation& inv,
                               const ConsentChannel* channel) {
  switch (policy.mode) {
    case ConsentMode::auto_approve:
      return ConsentDecision::approve;
    case ConsentMode::auto_deny:
      return ConsentDecision::deny;
    case ConsentMode::rules: {
      auto it = std::find_if(policy.rules.begin(), policy.rules.end(), [&](const ConsentRule& r) {
        return matches(r.server_pattern, inv.server_id) && matches(r.tool_pattern, inv.tool);
      });
      return it == policy.rules.end() ? ConsentDecision::deny : it->decision;
    }
    case ConsentMode::interactive: {
      if (channel == nullptr || channel->in == nullptr) throw InteractiveUnavailable();
      if (channel->out) *channel->out << consent_prompt(inv) << " [y/n] " << std::flush;
      std::string answer;
      if (!std::getline(*channel->in, answer)) {
        if (channel->out) *channel->out << "(no answer)\n";
        return ConsentDecision::deny;
      }
      answer.erase(0, answer.find_first_not_of(" \t\r"));
      answer.erase(answer.find_last_not_of(" \t\r") + 1);
      std::transform(answer.begin(), answer.end(), answer.begin(),
                     [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
      return (answer == "y" || answer == "yes") ? ConsentDecision::approve : ConsentDecision::deny;
    }
  }
  return ConsentDecision::deny;
}

}  // namespace crucible::agent
