// Protocol-level mitigations evaluated before every plan-driven tool call:
// declared cross-server capabilities, sensitive-server boundaries over
// taint flow, and manifest attestation.
#pragma once

#include <map>
#include <set>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "crucible/mcp.hpp"

namespace crucible::policy {

using Taints = std::set<std::string, std::less<>>;

enum class Rule { none, capability, boundary, attestation };
std::string_view to_string(Rule rule);

enum class Decision { allow, deny };

struct PolicyVerdict {
  Decision decision = Decision::allow;
  Rule rule = Rule::none;
  std::string detail;

  bool allowed() const { return decision == Decision::allow; }
  static PolicyVerdict allow(std::string detail = {}) { return {Decision::allow, Rule::none, std::move(detail)}; }
  static PolicyVerdict deny(Rule rule, std::string detail) { return {Decision::deny, rule, std::move(detail)}; }
};

Json to_json(const PolicyVerdict& verdict);

/// (source, destination, tool pattern). Tool pattern is an exact tool name
/// or "*".
struct AllowEntry {
  std::string source;
  std::string destination;
  std::string tool = "*";
  bool operator==(const AllowEntry&) const = default;
};

enum class UnattestedDefault { deny_cross_server, deny_all };

struct Mitigations {
  bool capabilities = false;
  bool boundaries = false;
  bool attestation = false;

  static Mitigations none() { return {}; }
  static Mitigations all() { return {true, true, true}; }
  /// "none", "all", or a comma-separated subset of
  /// capabilities/boundaries/attestation. Throws std::invalid_argument.
  static Mitigations parse(std::string_view spec);

  /// Each flag set here is also set in `other`.
  bool subset_of(const Mitigations& other) const;
  bool operator==(const Mitigations&) const = default;
};

struct PolicyConfig {
  Mitigations enabled;
  std::set<std::string> sensitive_servers;
  std::vector<AllowEntry> boundary_allowlist;
  // publisher → key as hex
  std::map<std::string, std::string> trusted_keys;
  UnattestedDefault unattested_default = UnattestedDefault::deny_cross_server;
};

/// Throws std::invalid_argument naming the offending member.
PolicyConfig config_from_json(const Json& j);
Json to_json(const PolicyConfig& config);

/// One tool invocation as seen by the policy: which plan it came from, where
/// it goes, and the provenance of its arguments.
struct Invocation {
  std::string origin;
  std::string target;
  std::string tool;
  Taints args_taints;
};

using ManifestMap = std::map<std::string, mcp::ServerManifest, std::less<>>;

PolicyVerdict check_capability(std::string_view origin, std::string_view target,
                               const mcp::ServerManifest& origin_manifest);

PolicyVerdict check_boundary(const Invocation& invocation, const PolicyConfig& config);

enum class Attestation { attested, unattested };

/// Lowercase hex HMAC-SHA256.
std::string hmac_sha256_hex(std::span<const unsigned char> key, std::string_view message);

/// Throws std::invalid_argument on odd length or non-hex characters.
std::vector<unsigned char> hex_decode(std::string_view hex);

/// Signature over canonicalize_manifest(manifest).
std::string sign_manifest(const mcp::ServerManifest& manifest, std::span<const unsigned char> key);

/// Checks `signature` against raw canonical bytes.
bool verify_signature(std::string_view canonical, std::string_view signature,
                      std::span<const unsigned char> key);

Attestation verify_attestation(const mcp::ServerManifest& manifest, const PolicyConfig& config);

/// The unattested_default consequence for an invocation, given which of its
/// endpoints are unattested.
PolicyVerdict check_attestation(const Invocation& invocation, const ManifestMap& manifests,
                                const PolicyConfig& config);

/// Enabled checks in the order attestation → capability → boundary; the
/// first deny is reported. With nothing enabled this always allows.
PolicyVerdict evaluate(const Invocation& invocation, const ManifestMap& manifests,
                       const PolicyConfig& config);

}  // namespace crucible::policy
