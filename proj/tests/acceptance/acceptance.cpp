// Acceptance suite: one PASS/FAIL line per criterion, nonzero exit on any FAIL.
#include <chrono>
#include <array>
#include <functional>
#include <iostream>
#include <sstream>

#include "crucible/agent.hpp"
#include "crucible/policy.hpp"
#include "crucible/runner.hpp"
#include "crucible/servers.hpp"
#include "test_support.hpp"

using namespace crucible;
using testing::coin;
using testing::pick;
using testing::Rng;

namespace {

// Collects failure reasons for one criterion.
struct Check {
  std::vector<std::string> failures;
  void expect(bool ok, const std::string& what) {
    if (!ok && failures.size() < 5) failures.push_back(what);
  }
};

int g_failed = 0;

void report(const std::string& id, const std::string& title, const std::function<void(Check&)>& body) {
  Check c;
  try {
    body(c);
  } catch (const std::exception& e) {
    c.failures.push_back(std::string("exception: ") + e.what());
  }
  bool ok = c.failures.empty();
  if (!ok) ++g_failed;
  std::cout << (ok ? "PASS " : "FAIL ") << id << " " << title << "\n";
  for (const auto& f : c.failures) std::cout << "    " << f << "\n";
  std::cout.flush();
}

runner::RunReport run(const std::string& file, runner::RunOptions o = testing::options_for_tests()) {
  if (o.server_executable.empty()) o.server_executable = testing::cli_path();
  return runner::run_scenario(testing::shipped(file), o);
}

std::string describe(const runner::RunReport& r) { return runner::to_json(r).dump(); }

bool secure_blocked(const runner::RunReport& r, int step, const std::string& rule) {
  return r.verdict == runner::Verdict::secure && r.blocked_by == runner::BlockedBy{step, rule} && r.captures.empty();
}

// Index of the first event matching `pred`, or -1.
long find_event(const std::vector<audit::AuditEvent>& events, const std::function<bool(const audit::AuditEvent&)>& pred) {
  for (std::size_t i = 0; i < events.size(); ++i)
    if (pred(events[i])) return static_cast<long>(i);
  return -1;
}

std::function<bool(const audit::AuditEvent&)> tool_call_to(const std::string& server, const std::string& tool) {
  return [=](const audit::AuditEvent& e) {
    if (e.kind != audit::EventKind::message_out || e.payload["server_id"] != server) return false;
    wire::Envelope env = wire::decode(e.payload["line"].get<std::string>());
    return env.method == "tools/call" && env.params && (*env.params)["name"] == tool;
  };
}

void ac1(Check& c) {
  auto start = std::chrono::steady_clock::now();
  runner::RunReport r = run("attack_baseline.json");
  double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  c.expect(r.error.empty(), "run error: " + r.error);
  c.expect(r.verdict == runner::Verdict::exfiltrated, "verdict: " + describe(r));
  c.expect(r.exit_code() == 3, "exit code");
  c.expect(r.captures.size() == 1, "capture count " + std::to_string(r.captures.size()));
  if (r.captures.size() == 1 && r.captures[0].body_json) {
    const Json& body = *r.captures[0].body_json;
    c.expect(body.value("balance", Json()) == 1469.36, "balance: " + body.dump());
    c.expect(body.contains("location") && body["location"].is_string() && !body["location"].get<std::string>().empty(),
             "location");
    c.expect(body.contains("timestamp") && body["timestamp"].is_string() &&
                 servers::is_iso8601_utc(body["timestamp"].get<std::string>()),
             "timestamp");
  } else {
    c.expect(false, "capture is not JSON");
  }
  long disc = find_event(r.events, [](const audit::AuditEvent& e) {
    return e.kind == audit::EventKind::discovery && e.payload["server_id"] == "banking";
  });
  long bal = find_event(r.events, tool_call_to("banking", "account.balance"));
  long send = find_event(r.events, tool_call_to("weather", "send_research_data"));
  c.expect(disc >= 0 && bal > disc && send > bal,
           "order discovery/balance/send: " + std::to_string(disc) + "," + std::to_string(bal) + "," + std::to_string(send));
  c.expect(secs < 5.0, "took " + std::to_string(secs) + " s");
}

void ac2(Check& c) {
  runner::RunOptions deny = testing::options_for_tests();
  deny.consent = agent::ConsentMode::auto_deny;
  runner::RunReport a = run("attack_baseline.json", deny);
  c.expect(secure_blocked(a, 1, "consent"), "auto_deny: " + describe(a));
  c.expect(a.exit_code() == 0, "auto_deny exit code");

  std::istringstream answers("y\ny\nn\n");
  std::ostringstream prompts;
  runner::RunOptions inter = testing::options_for_tests();
  inter.consent = agent::ConsentMode::interactive;
  inter.answers = &answers;
  inter.prompt_out = &prompts;
  runner::RunReport b = run("attack_baseline.json", inter);
  c.expect(b.verdict == runner::Verdict::secure && b.captures.empty(), "interactive y,y,n: " + describe(b));
  c.expect(b.blocked_by && b.blocked_by->rule == "consent", "interactive blocked_by");
  c.expect(prompts.str().find("APPROVE? weather/send_research_data") != std::string::npos,
           "the denied prompt names the egress tool");
}

void ac3(Check& c) {
  struct Row {
    const char* mitigations;
    int step;
    const char* rule;
  };
  for (const Row& row : {Row{"capabilities", 1, "capability"}, Row{"boundaries", 1, "boundary"},
                         Row{"attestation", 1, "attestation"}, Row{"all", 1, "attestation"}}) {
    runner::RunOptions o = testing::options_for_tests();
    o.mitigations = policy::Mitigations::parse(row.mitigations);
    runner::RunReport r = run("attack_baseline.json", o);
    c.expect(secure_blocked(r, row.step, row.rule), std::string(row.mitigations) + ": " + describe(r));
  }
  runner::RunReport egress = run("mitigation_matrix.json");
  c.expect(secure_blocked(egress, 2, "boundary"), "allowlisted ingress, egress denied: " + describe(egress));
  runner::RunReport hardened = run("hardened_allowed.json");
  c.expect(hardened.verdict == runner::Verdict::exfiltrated, "hardened_allowed: " + describe(hardened));
}

// Random policy inputs over a small universe of servers.
struct PolicyCase {
  policy::Invocation inv;
  policy::ManifestMap manifests;
  policy::PolicyConfig config;
};

PolicyCase random_policy_case(Rng& rng) {
  static const std::vector<std::string> ids = {"weather", "banking", "notes", "mail"};
  static const std::vector<std::string> tools = {"get", "send", "account.balance"};
  auto any = [&](const std::vector<std::string>& v) { return v[static_cast<std::size_t>(pick(rng, 0, int(v.size()) - 1))]; };
  PolicyCase pc;
  for (const auto& id : ids) {
    if (pick(rng, 0, 4) == 0) continue;
    mcp::ServerManifest m;
    m.server_id = id;
    m.publisher = "pub-" + id;
    m.version = "1.0.0";
    for (int i = pick(rng, 0, 2); i > 0; --i) m.interacts_with.push_back(coin(rng) ? "*" : any(ids));
    std::string key = "a" + std::to_string(pick(rng, 0, 9));
    if (coin(rng)) m.signature = policy::sign_manifest(m, policy::hex_decode(coin(rng) ? key : "ff"));
    if (coin(rng)) pc.config.trusted_keys[m.publisher] = key;
    pc.manifests.emplace(id, std::move(m));
  }
  for (const auto& id : ids)
    if (coin(rng)) pc.config.sensitive_servers.insert(id);
  for (int i = pick(rng, 0, 3); i > 0; --i) pc.config.boundary_allowlist.push_back({any(ids), any(ids), coin(rng) ? "*" : any(tools)});
  pc.config.unattested_default =
      coin(rng) ? policy::UnattestedDefault::deny_all : policy::UnattestedDefault::deny_cross_server;
  pc.inv.origin = any(ids);
  pc.inv.target = coin(rng) ? pc.inv.origin : any(ids);
  pc.inv.tool = any(tools);
  for (int i = pick(rng, 0, 3); i > 0; --i) pc.inv.args_taints.insert(any(ids));
  return pc;
}

void ac4(Check& c) {
  Rng rng(404);
  int denials = 0;
  for (int i = 0; i < 1200; ++i) {
    PolicyCase pc = random_policy_case(rng);
    std::array<bool, 8> denied{};
    for (int bits = 0; bits < 8; ++bits) {
      pc.config.enabled = {(bits & 1) != 0, (bits & 2) != 0, (bits & 4) != 0};
      denied[static_cast<std::size_t>(bits)] = !policy::evaluate(pc.inv, pc.manifests, pc.config).allowed();
    }
    denials += denied[7];
    c.expect(!denied[0], "nothing enabled still denied at case " + std::to_string(i));
    for (int small = 0; small < 8; ++small)
      for (int big = 0; big < 8; ++big)
        if ((small & big) == small && denied[static_cast<std::size_t>(small)])
          c.expect(denied[static_cast<std::size_t>(big)],
                   "case " + std::to_string(i) + ": " + std::to_string(small) + " denies, " + std::to_string(big) + " allows");
  }
  // Guard against a vacuous pass.
  c.expect(denials > 100, "too few denials generated: " + std::to_string(denials));
}

// Echo servers over loopback, driven directly through the agent.
struct EchoTopology {
  std::vector<std::shared_ptr<mcp::Server>> servers;
  std::map<std::string, transport::Connection, std::less<>> conns;
  audit::AuditLog log;

  explicit EchoTopology(const std::vector<std::string>& ids) {
    for (const auto& id : ids) {
      auto s = std::make_shared<mcp::Server>(testing::echo_server(id));
      servers.push_back(s);
      auto conn = transport::loopback_pair([s](int in, int out) { s->serve(in, out); }, id);
      conn.set_observer(log.observer());
      conn.request(mcp::method::initialize, {{"client", "acceptance"}});
      conns.emplace(id, std::move(conn));
    }
  }
  std::map<std::string, transport::Connection*, std::less<>> ptrs() {
    std::map<std::string, transport::Connection*, std::less<>> out;
    for (auto& [id, conn] : conns) out.emplace(id, &conn);
    return out;
  }
};

Json random_args(Rng& rng, int step, std::set<int>& refs) {
  Json args = Json::object();
  for (int i = pick(rng, 0, 3); i > 0; --i) {
    std::string key = "k" + std::to_string(i);
    int kind = pick(rng, 0, 2);
    if (step > 1 && kind > 0) {
      int ref = pick(rng, 1, step - 1);
      refs.insert(ref);
      std::string token = "${step" + std::to_string(ref) + "}";
      args[key] = kind == 1 ? Json(token) : Json("text " + token + " more");
    } else {
      args[key] = testing::random_string(rng, 8);
    }
  }
  return args;
}

void ac5(Check& c) {
  static const std::vector<std::string> ids = {"s0", "s1", "s2", "s3"};
  Rng rng(505);
  for (int n = 0; n < 500; ++n) {
    EchoTopology topo(ids);
    agent::Agent agent(topo.ptrs(), {agent::ConsentMode::auto_approve, {}}, nullptr, topo.log);
    std::vector<agent::Directive> plan;
    std::vector<std::set<std::string>> expected;  // by step - 1
    int steps = pick(rng, 1, 6);
    for (int step = 1; step <= steps; ++step) {
      std::set<int> refs;
      std::string target = ids[static_cast<std::size_t>(pick(rng, 0, 3))];
      plan.push_back({step, target, "echo", random_args(rng, step, refs)});
      std::set<std::string> t = {target};
      for (int r : refs) t.insert(expected[static_cast<std::size_t>(r - 1)].begin(), expected[static_cast<std::size_t>(r - 1)].end());
      expected.push_back(t);
    }
    agent::ExecutionContext ctx;
    ctx.origin_server = ids[static_cast<std::size_t>(pick(rng, 0, 3))];
    agent::PlanOutcome outcome = agent.execute_plan(plan, ctx);
    c.expect(outcome.status == agent::PlanOutcome::Status::completed, "plan " + std::to_string(n) + " did not complete");

    // Tool-call replies in step order.
    std::vector<std::set<std::string>> observed;
    for (const auto& e : topo.log.events()) {
      if (e.kind != audit::EventKind::message_in) continue;
      wire::Envelope env = wire::decode(e.payload["line"].get<std::string>());
      if (!env.result || !env.result->contains("content")) continue;
      c.expect(e.payload.contains("taints"), "reply without taints in plan " + std::to_string(n));
      observed.push_back(e.payload.value("taints", std::set<std::string>{}));
    }
    c.expect(observed == expected, "taints differ in plan " + std::to_string(n));
  }
}

int rpc_code(mcp::Session& s, const std::string& line) {
  auto reply = s.handle_line(line);
  if (!reply) return 0;
  Json j = Json::parse(*reply);
  return j.contains("error") ? j["error"]["code"].get<int>() : 0;
}

void ac6(Check& c) {
  Rng rng(606);
  for (int i = 0; i < 1000; ++i) {
    wire::Envelope env = testing::random_envelope(rng);
    std::string line = wire::encode(env);
    c.expect(!line.empty() && line.back() == '\n' && line.find('\n') == line.size() - 1, "framing of envelope " + std::to_string(i));
    c.expect(wire::decode(line) == env, "round trip of envelope " + std::to_string(i));
  }

  mcp::Server weather = servers::make_builtin("weather", {});
  mcp::Session s(weather.manifest(), weather.registry());
  c.expect(rpc_code(s, "{not json") == -32700, "-32700");
  c.expect(rpc_code(s, R"({"jsonrpc":"2.0","id":1,"method":"tools/list"})") == -32600, "-32600 before initialize");
  rpc_code(s, R"({"jsonrpc":"2.0","id":2,"method":"initialize","params":{"client":"a"}})");
  c.expect(rpc_code(s, R"({"jsonrpc":"2.0","id":3,"method":"resources/list"})") == -32601, "-32601");
  c.expect(rpc_code(s, R"({"jsonrpc":"2.0","id":4,"method":"tools/call","params":{"name":"get_forecast","arguments":{}}})") ==
               -32602,
           "-32602");

  runner::RunOptions caps = testing::options_for_tests();
  caps.mitigations = policy::Mitigations::parse("capabilities");
  runner::RunReport policy_denied = run("attack_baseline.json", caps);
  runner::RunOptions deny = testing::options_for_tests();
  deny.consent = agent::ConsentMode::auto_deny;
  runner::RunReport consent_denied = run("attack_baseline.json", deny);
  auto first_error = [](const runner::RunReport& r) {
    for (const auto& o : r.outcomes)
      if (auto e = agent::denial_error(o)) return e->code;
    return 0;
  };
  c.expect(first_error(policy_denied) == -32001, "-32001 for a policy deny");
  c.expect(first_error(consent_denied) == -32002, "-32002 for a consent deny");
}

void ac7(Check& c) {
  Rng rng(707);
  mcp::ServerManifest m = mcp::load_manifest(testing::scenario_path("manifests/weather.signed.json").string());
  std::vector<unsigned char> key = policy::hex_decode("0123456789abcdef");
  std::string sig = policy::sign_manifest(m, key);
  std::string canon = mcp::canonicalize_manifest(m);
  c.expect(policy::verify_signature(canon, sig, key), "untouched manifest fails to verify");
  for (int i = 0; i < 100; ++i) {
    std::string mutated = canon;
    auto pos = static_cast<std::size_t>(pick(rng, 0, int(canon.size()) - 1));
    mutated[pos] = static_cast<char>(mutated[pos] ^ pick(rng, 1, 255));
    c.expect(!policy::verify_signature(mutated, sig, key), "flip at byte " + std::to_string(pos) + " still verifies");
  }
}

void ac8(Check& c) {
  runner::RunOptions sub = testing::options_for_tests();
  sub.transport = runner::TransportKind::subprocess;
  runner::RunOptions loop = testing::options_for_tests();
  loop.transport = runner::TransportKind::loopback;
  runner::RunReport a = run("attack_baseline.json", sub);
  runner::RunReport b = run("attack_baseline.json", loop);
  c.expect(a.error.empty() && b.error.empty(), "run errors: " + a.error + " / " + b.error);
  c.expect(audit::strip_timestamps(a.events) == audit::strip_timestamps(b.events), "transcripts differ");
  c.expect(a.exit_code() == b.exit_code(), "exit codes differ");
}

void ac9(Check& c) {
  auto files = runner::list_scenarios(CRUCIBLE_SCENARIO_DIR);
  c.expect(files.size() >= 5, "expected every shipped scenario");
  for (const auto& f : files) {
    runner::RunReport a = runner::run_scenario(runner::load_scenario(f), testing::options_for_tests());
    runner::RunReport b = runner::run_scenario(runner::load_scenario(f), testing::options_for_tests());
    c.expect(audit::strip_timestamps(a.events) == audit::strip_timestamps(b.events), f.filename().string() + " transcripts differ");
    c.expect(a.exit_code() == b.exit_code(), f.filename().string() + " exit codes differ");
  }
}

}  // namespace

int main() {
  transport::ignore_sigpipe();
  report("AC1", "baseline attack exfiltrates the balance over subprocess servers", ac1);
  report("AC2", "consent denial blocks the plan", ac2);
  report("AC3", "each mitigation alone blocks the attack", ac3);
  report("AC4", "enabling more mitigations never turns a deny into an allow", ac4);
  report("AC5", "result taints match brute-force recomputation", ac5);
  report("AC6", "wire round trip and every protocol error code", ac6);
  report("AC7", "any single-byte change breaks the manifest signature", ac7);
  report("AC8", "subprocess and loopback transcripts are identical", ac8);
  report("AC9", "every shipped scenario replays deterministically", ac9);
  std::cout << (g_failed == 0 ? "all criteria passed" : std::to_string(g_failed) + " criteria failed") << "\n";
  return g_failed == 0 ? 0 : 1;
}
