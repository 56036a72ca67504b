#include <doctest.h>

#include <fstream>

#include "crucible/policy.hpp"
#include "crucible/servers.hpp"
#include "test_support.hpp"

using namespace crucible;
using crucible::testing::run_cli;
using crucible::testing::scenario_path;

TEST_CASE("run: exit codes") {
  CHECK(run_cli({"run", scenario_path("attack_baseline.json")}).exit_code == 3);
  CHECK(run_cli({"run", scenario_path("attack_baseline.json"), "--mitigations", "all"}).exit_code == 0);
  CHECK(run_cli({"run", scenario_path("benign_weather.json")}).exit_code == 0);
  CHECK(run_cli({"run", "missing.json"}).exit_code == 2);
  CHECK(run_cli({"run", scenario_path("attack_baseline.json"), "--consent", "interactive"}).exit_code == 2);
}

TEST_CASE("usage errors exit 1") {
  CHECK(run_cli({}).exit_code == 1);
  CHECK(run_cli({"frobnicate"}).exit_code == 1);
  CHECK(run_cli({"run"}).exit_code == 1);
  CHECK(run_cli({"run", scenario_path("attack_baseline.json"), "--mitigations", "bogus"}).exit_code == 1);
  CHECK(run_cli({"run", scenario_path("attack_baseline.json"), "--consent", "maybe"}).exit_code == 1);
  CHECK(run_cli({"sign-manifest", "x.json"}).exit_code == 1);
  CHECK(run_cli({"--as-server"}).exit_code == 1);
  CHECK(run_cli({"--help"}).exit_code == 0);
}

TEST_CASE("run: report, transcript and answers") {
  testing::TempDir dir;
  auto transcript = dir.path() / "t.jsonl";
  auto answers = dir.write("answers.txt", "y\ny\nn\n");
  auto r = run_cli({"run", scenario_path("attack_baseline.json"), "--consent", "interactive", "--answers",
                    answers.string(), "--transcript", transcript.string()});
  CHECK(r.exit_code == 0);
  Json report = Json::parse(r.out);
  CHECK(report["verdict"] == "SECURE");
  CHECK(report["blocked_by"] == Json{{"step", 2}, {"rule", "consent"}});
  CHECK(report["captures"].empty());

  std::ifstream in(transcript);
  auto events = audit::read_jsonl(in);
  CHECK(events.size() == report["events"].get<std::size_t>());
  CHECK(events.back().kind == audit::EventKind::plan_outcome);
}

TEST_CASE("run: transport override") {
  auto loop = run_cli({"run", scenario_path("attack_baseline.json"), "--transport", "loopback"});
  CHECK(loop.exit_code == 3);
  CHECK(run_cli({"run", scenario_path("attack_baseline.json"), "--transport", "carrier-pigeon"}).exit_code == 1);
}

TEST_CASE("sign-manifest") {
  testing::TempDir dir;
  auto path = dir.write("m.json", mcp::to_json(servers::banking_manifest()).dump());
  auto r = run_cli({"sign-manifest", path.string(), "--key", "abcd01"});
  REQUIRE(r.exit_code == 0);
  mcp::ServerManifest signed_m = mcp::manifest_from_json(Json::parse(r.out));
  REQUIRE(signed_m.signature.has_value());
  CHECK(*signed_m.signature == policy::hmac_sha256_hex(policy::hex_decode("abcd01"), mcp::canonicalize_manifest(signed_m)));
  CHECK(run_cli({"sign-manifest", path.string(), "--key", "xyz"}).exit_code == 1);
  CHECK(run_cli({"sign-manifest", (dir.path() / "none.json").string(), "--key", "ab"}).exit_code == 2);
}

TEST_CASE("list-scenarios") {
  auto r = run_cli({"list-scenarios"});
  CHECK(r.exit_code == 0);
  for (auto name : {"attack_baseline.json", "benign_weather.json", "mitigation_matrix.json", "hardened_allowed.json"})
    CHECK(r.out.find(name) != std::string::npos);
  CHECK(run_cli({"list-scenarios", "--dir", "/nonexistent"}).exit_code == 2);
}

TEST_CASE("shipped signed manifests verify against the scenario keys") {
  runner::Scenario s = runner::load_scenario(scenario_path("hardened_allowed.json"));
  for (const auto& spec : s.servers) {
    mcp::ServerManifest m = mcp::load_manifest(spec.manifest);
    CHECK(policy::verify_attestation(m, s.policy) == policy::Attestation::attested);
  }
}
