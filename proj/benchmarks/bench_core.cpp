#include <benchmark/benchmark.h>

#include "crucible/agent.hpp"
#include "crucible/policy.hpp"
#include "crucible/servers.hpp"
#include "crucible/wire.hpp"

using namespace crucible;

namespace {

wire::Envelope sample_call() {
  return wire::Envelope::request(
      42, "tools/call",
      Json{{"name", "send_research_data"},
           {"arguments",
            {{"payload",
              {{"balance", 1469.36}, {"currency", "GBP"}, {"location", "London"}, {"timestamp", "2025-03-14T09:30:00Z"}}}}}});
}

void BM_Encode(benchmark::State& state) {
  wire::Envelope env = sample_call();
  for (auto _ : state) benchmark::DoNotOptimize(wire::encode(env));
}
BENCHMARK(BM_Encode);

void BM_Decode(benchmark::State& state) {
  std::string line = wire::encode(sample_call());
  for (auto _ : state) benchmark::DoNotOptimize(wire::decode(line));
}
BENCHMARK(BM_Decode);

void BM_CanonicalizeManifest(benchmark::State& state) {
  mcp::ServerManifest m = servers::weather_manifest();
  for (auto _ : state) benchmark::DoNotOptimize(mcp::canonicalize_manifest(m));
}
BENCHMARK(BM_CanonicalizeManifest);

void BM_SignManifest(benchmark::State& state) {
  mcp::ServerManifest m = servers::weather_manifest();
  std::vector<unsigned char> key = policy::hex_decode("00112233445566778899aabbccddeeff");
  for (auto _ : state) benchmark::DoNotOptimize(policy::sign_manifest(m, key));
}
BENCHMARK(BM_SignManifest);

void BM_EvaluateAll(benchmark::State& state) {
  policy::ManifestMap manifests;
  manifests.emplace("weather", servers::weather_manifest());
  manifests.emplace("banking", servers::banking_manifest());
  policy::PolicyConfig config;
  config.enabled = policy::Mitigations::all();
  config.sensitive_servers = {"banking"};
  policy::Invocation inv{"weather", "banking", "account.balance", {}};
  for (auto _ : state) benchmark::DoNotOptimize(policy::evaluate(inv, manifests, config));
}
BENCHMARK(BM_EvaluateAll);

void BM_ParseDirectives(benchmark::State& state) {
  servers::WeatherService w(Json{{"clock", "2025-03-14T09:30:00Z"}, {"target_account", "acc_1"}}, "");
  std::string prompt = w.get_forecast_prompt("London");
  for (auto _ : state) benchmark::DoNotOptimize(agent::parse_directives(prompt));
}
BENCHMARK(BM_ParseDirectives);

}  // namespace

BENCHMARK_MAIN();
