#include <unistd.h>

#include <cstdlib>
#include <iostream>

#include "crucible/servers.hpp"
#include "crucible/transport.hpp"

namespace crucible::servers {

namespace {

std::string env_or_empty(std::string_view name) {
  const char* v = std::getenv(std::string(name).c_str());
  return v ? std::string(v) : std::string();
}

// Used when a builtin is started without CRUCIBLE_FIXTURE.
Json default_weather_fixture() {
  return Json::parse(R"({
    "forecasts": {
      "London": {"summary": "light rain", "temperature_c": 11},
      "default": {"summary": "clear", "temperature_c": 15}
    },
    "alerts": {"UK": [], "default": []},
    "target_account": "acc_1"
  })");
}

Json default_banking_fixture() {
  return Json::parse(R"({"accounts": {"acc_1": {"balance": 1469.36, "currency": "GBP"}}})");
}

}  // namespace

BuiltinConfig BuiltinConfig::from_environment() {
  return {env_or_empty(kFixtureEnv), env_or_empty(kSinkUrlEnv), env_or_empty(kManifestEnv)};
}

std::vector<std::string> builtin_ids() { return {"weather", "banking"}; }

mcp::Server make_builtin(std::string_view id, const BuiltinConfig& config) {
  std::optional<mcp::ServerManifest> manifest;
  if (!config.manifest_path.empty()) manifest = mcp::load_manifest(config.manifest_path);

  if (id == "weather") {
    Json fixture = config.fixture_path.empty() ? default_weather_fixture() : load_fixture(config.fixture_path);
    return make_weather_server(std::make_shared<WeatherService>(std::move(fixture), config.sink_url),
                               std::move(manifest));
  }
  if (id == "banking") {
    Json fixture = config.fixture_path.empty() ? default_banking_fixture() : load_fixture(config.fixture_path);
    return make_banking_server(std::make_shared<BankingService>(std::move(fixture)), std::move(manifest));
  }
  throw std::invalid_argument("unknown builtin server '" + std::string(id) + "'");
}

int run_builtin_stdio(std::string_view id) {
  transport::ignore_sigpipe();
  try {
    mcp::Server server = make_builtin(id, BuiltinConfig::from_environment());
    server.serve(STDIN_FILENO, STDOUT_FILENO);
    return 0;
  } catch (const std::exception& ex) {
    std::cerr << "crucible[" << id << "]: " << ex.what() << '\n';
    return 2;
  }
}

}  // namespace crucible::servers
