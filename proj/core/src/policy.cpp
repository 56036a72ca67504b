#include <algorithm>
#include <sstream>

#include "crucible/policy.hpp"

namespace crucible::policy {

std::string_view to_string(Rule rule) {
  switch (rule) {
    case Rule::none: return "none";
    case Rule::capability: return "capability";
    case Rule::boundary: return "boundary";
    case Rule::attestation: return "attestation";
  }
  return "none";
}

Json to_json(const PolicyVerdict& v) {
  return {{"decision", v.allowed() ? "allow" : "deny"}, {"rule", to_string(v.rule)}, {"detail", v.detail}};
}

Mitigations Mitigations::parse(std::string_view spec) {
  Mitigations m;
  std::stringstream ss{std::string(spec)};
  std::string item;
  bool any = false;
  while (std::getline(ss, item, ',')) {
    any = true;
    if (item == "none") continue;
    if (item == "all") {
      m = all();
    } else if (item == "capabilities") {
      m.capabilities = true;
    } else if (item == "boundaries") {
      m.boundaries = true;
    } else if (item == "attestation") {
      m.attestation = true;
    } else {
      throw std::invalid_argument("unknown mitigation '" + item + "'");
    }
  }
  if (!any) throw std::invalid_argument("empty mitigation list");
  return m;
}

bool Mitigations::subset_of(const Mitigations& o) const {
  return (!capabilities || o.capabilities) && (!boundaries || o.boundaries) &&
         (!attestation || o.attestation);
}

namespace {

bool bool_member(const Json& j, const char* key, bool fallback) {
  auto it = j.find(key);
  if (it == j.end()) return fallback;
  if (!it->is_boolean()) throw std::invalid_argument(std::string("policy.") + key + " must be boolean");
  return it->get<bool>();
}

bool pattern_matches(std::string_view pattern, std::string_view value) {
  return pattern == "*" || pattern == value;
}

bool allowlisted(const PolicyConfig& config, std::string_view source, std::string_view destination,
                 std::string_view tool) {
  return std::any_of(config.boundary_allowlist.begin(), config.boundary_allowlist.end(), [&](const AllowEntry& e) {
    return e.source == source && e.destination == destination && pattern_matches(e.tool, tool);
  });
}

std::string_view to_string(UnattestedDefault d) {
  return d == UnattestedDefault::deny_all ? "deny_all" : "deny_cross_server";
}

}  // namespace

PolicyConfig config_from_json(const Json& j) {
  if (!j.is_object()) throw std::invalid_argument("policy must be an object");
  static const std::set<std::string> known{"enable_capabilities", "enable_boundaries", "enable_attestation",
                                           "sensitive_servers",   "boundary_allowlist", "trusted_keys",
                                           "unattested_default"};
  for (const auto& [key, _] : j.items())
    if (!known.count(key)) throw std::invalid_argument("policy." + key + " is not a known member");

  PolicyConfig c;
  c.enabled.capabilities = bool_member(j, "enable_capabilities", false);
  c.enabled.boundaries = bool_member(j, "enable_boundaries", false);
  c.enabled.attestation = bool_member(j, "enable_attestation", false);

  if (auto it = j.find("sensitive_servers"); it != j.end()) {
    if (!it->is_array()) throw std::invalid_argument("policy.sensitive_servers must be an array");
    for (const auto& s : *it) {
      if (!s.is_string()) throw std::invalid_argument("policy.sensitive_servers entries must be strings");
      c.sensitive_servers.insert(s.get<std::string>());
    }
  }
  if (auto it = j.find("boundary_allowlist"); it != j.end()) {
    if (!it->is_array()) throw std::invalid_argument("policy.boundary_allowlist must be an array");
    for (std::size_t i = 0; i < it->size(); ++i) {
      const Json& e = (*it)[i];
      std::string where = "policy.boundary_allowlist[" + std::to_string(i) + "]";
      if (!e.is_object() || !e.contains("source") || !e.contains("destination") || !e["source"].is_string() ||
          !e["destination"].is_string())
        throw std::invalid_argument(where + " needs string source and destination");
      AllowEntry entry{e["source"].get<std::string>(), e["destination"].get<std::string>(), "*"};
      if (auto t = e.find("tool"); t != e.end()) {
        if (!t->is_string()) throw std::invalid_argument(where + ".tool must be a string");
        entry.tool = t->get<std::string>();
      }
      c.boundary_allowlist.push_back(std::move(entry));
    }
  }
  if (auto it = j.find("trusted_keys"); it != j.end()) {
    if (!it->is_object()) throw std::invalid_argument("policy.trusted_keys must be an object");
    for (const auto& [publisher, key] : it->items()) {
      if (!key.is_string()) throw std::invalid_argument("policy.trusted_keys." + publisher + " must be a hex string");
      hex_decode(key.get<std::string>());
      c.trusted_keys[publisher] = key.get<std::string>();
    }
  }
  if (auto it = j.find("unattested_default"); it != j.end()) {
    if (*it == "deny_cross_server") {
      c.unattested_default = UnattestedDefault::deny_cross_server;
    } else if (*it == "deny_all") {
      c.unattested_default = UnattestedDefault::deny_all;
    } else {
      throw std::invalid_argument("policy.unattested_default must be deny_cross_server or deny_all");
    }
  }
  return c;
}

Json to_json(const PolicyConfig& c) {
  Json allow = Json::array();
  for (const auto& e : c.boundary_allowlist)
    allow.push_back({{"source", e.source}, {"destination", e.destination}, {"tool", e.tool}});
  return {{"enable_capabilities", c.enabled.capabilities},
          {"enable_boundaries", c.enabled.boundaries},
          {"enable_attestation", c.enabled.attestation},
          {"sensitive_servers", c.sensitive_servers},
          {"boundary_allowlist", std::move(allow)},
          {"trusted_keys", c.trusted_keys},
          {"unattested_default", to_string(c.unattested_default)}};
}

PolicyVerdict check_capability(std::string_view origin, std::string_view target,
                               const mcp::ServerManifest& origin_manifest) {
  if (origin == target) return PolicyVerdict::allow();
  for (const auto& peer : origin_manifest.interacts_with) {
    if (peer == "*" || peer == target) return PolicyVerdict::allow("declared " + peer);
  }
  return PolicyVerdict::deny(Rule::capability, "'" + std::string(origin) + "' did not declare an interaction with '" +
                                                   std::string(target) + "'");
}

PolicyVerdict check_boundary(const Invocation& inv, const PolicyConfig& config) {
  // Egress: sensitive data leaving for another server.
  for (const auto& source : inv.args_taints) {
    if (source == inv.target || !config.sensitive_servers.count(source)) continue;
    if (allowlisted(config, source, inv.target, inv.tool)) continue;
    return PolicyVerdict::deny(Rule::boundary, "data from sensitive server '" + source + "' may not flow to '" +
                                                   inv.target + "/" + inv.tool + "'");
  }
  // Ingress: a foreign plan calling into a sensitive server.
  if (inv.origin != inv.target && config.sensitive_servers.count(inv.target) &&
      !allowlisted(config, inv.origin, inv.target, inv.tool)) {
    return PolicyVerdict::deny(Rule::boundary, "plan from '" + inv.origin + "' may not call sensitive server '" +
                                                   inv.target + "'");
  }
  return PolicyVerdict::allow();
}

PolicyVerdict check_attestation(const Invocation& inv, const ManifestMap& manifests, const PolicyConfig& config) {
  auto attested = [&](std::string_view id) {
    auto it = manifests.find(id);
    return it != manifests.end() && verify_attestation(it->second, config) == Attestation::attested;
  };

  if (config.unattested_default == UnattestedDefault::deny_all && !attested(inv.target))
    return PolicyVerdict::deny(Rule::attestation, "server '" + inv.target + "' is not attested");

  bool cross = inv.origin != inv.target ||
               std::any_of(inv.args_taints.begin(), inv.args_taints.end(),
                           [&](const std::string& t) { return t != inv.target; });
  if (!cross) return PolicyVerdict::allow();

  std::vector<std::string_view> parties{inv.origin, inv.target};
  for (const auto& t : inv.args_taints) parties.push_back(t);
  for (auto party : parties) {
    if (!attested(party))
      return PolicyVerdict::deny(Rule::attestation, "cross-server invocation involves unattested server '" +
                                                        std::string(party) + "'");
  }
  return PolicyVerdict::allow();
}

PolicyVerdict evaluate(const Invocation& inv, const ManifestMap& manifests, const PolicyConfig& config) {
  if (config.enabled.attestation) {
    if (auto v = check_attestation(inv, manifests, config); !v.allowed()) return v;
  }
  if (config.enabled.capabilities) {
    auto it = manifests.find(inv.origin);
    if (it == manifests.end())
      return PolicyVerdict::deny(Rule::capability, "no manifest for origin '" + inv.origin + "'");
    if (auto v = check_capability(inv.origin, inv.target, it->second); !v.allowed()) return v;
  }
  if (config.enabled.boundaries) {
    if (auto v = check_boundary(inv, config); !v.allowed()) return v;
  }
  return PolicyVerdict::allow();
}

}  // namespace crucible::policy
