#include <openssl/crypto.h>
#include <openssl/evp.h>
#include <openssl/hmac.h>

#include <stdexcept>

#include "crucible/policy.hpp"

namespace crucible::policy {

namespace {

int hex_value(char c) {
  if (c >= '0' && c <= '9') return c - '0';
  if (c >= 'a' && c <= 'f') return c - 'a' + 10;
  if (c >= 'A' && c <= 'F') return c - 'A' + 10;
  return -1;
}

}  // namespace

std::vector<unsigned char> hex_decode(std::string_view hex) {
  if (hex.size() % 2 != 0) throw std::invalid_argument("hex string has odd length");
  std::vector<unsigned char> out;
  out.reserve(hex.size() / 2);
  for (std::size_t i = 0; i < hex.size(); i += 2) {
    int hi = hex_value(hex[i]);
    int lo = hex_value(hex[i + 1]);
    if (hi < 0 || lo < 0) throw std::invalid_argument("invalid hex digit");
    out.push_back(static_cast<unsigned char>(hi << 4 | lo));
  }
  return out;
}

std::string hmac_sha256_hex(std::span<const unsigned char> key, std::string_view message) {
  unsigned char mac[EVP_MAX_MD_SIZE];
  unsigned int mac_len = 0;
  // HMAC() rejects a null key pointer even for an empty key.
  static const unsigned char empty = 0;
  const unsigned char* key_ptr = key.empty() ? &empty : key.data();
  if (HMAC(EVP_sha256(), key_ptr, static_cast<int>(key.size()),
           reinterpret_cast<const unsigned char*>(message.data()), message.size(), mac, &mac_len) == nullptr)
    throw std::runtime_error("HMAC-SHA256 failed");

  static constexpr char digits[] = "0123456789abcdef";
  std::string out;
  out.reserve(mac_len * 2);
  for (unsigned int i = 0; i < mac_len; ++i) {
    out += digits[mac[i] >> 4];
    out += digits[mac[i] & 0x0f];
  }
  return out;
}

std::string sign_manifest(const mcp::ServerManifest& manifest, std::span<const unsigned char> key) {
  return hmac_sha256_hex(key, mcp::canonicalize_manifest(manifest));
}

bool verify_signature(std::string_view canonical, std::string_view signature,
                      std::span<const unsigned char> key) {
  std::string expected = hmac_sha256_hex(key, canonical);
  if (signature.size() != expected.size()) return false;
  return CRYPTO_memcmp(expected.data(), signature.data(), expected.size()) == 0;
}

Attestation verify_attestation(const mcp::ServerManifest& manifest, const PolicyConfig& config) {
  if (!manifest.signature) return Attestation::unattested;
  auto key = config.trusted_keys.find(manifest.publisher);
  if (key == config.trusted_keys.end()) return Attestation::unattested;

  std::vector<unsigned char> key_bytes;
  std::string canonical;
  try {
    key_bytes = hex_decode(key->second);
    canonical = mcp::canonicalize_manifest(manifest);
  } catch (const std::exception&) {
    return Attestation::unattested;
  }
  return verify_signature(canonical, *manifest.signature, key_bytes) ? Attestation::attested
                                                                     : Attestation::unattested;
}

}  // namespace crucible::policy
