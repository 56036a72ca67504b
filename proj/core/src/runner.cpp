#include <unistd.h>

#include <iostream>
#include <memory>

#include "crucible/runner.hpp"

namespace crucible::runner {

namespace fs = std::filesystem;
using audit::EventKind;

std::string_view to_string(Verdict v) { return v == Verdict::exfiltrated ? "EXFILTRATED" : "SECURE"; }

int RunReport::exit_code() const {
  if (!verdict) return exit_code::runtime_failure;
  return *verdict == Verdict::exfiltrated ? exit_code::exfiltrated : exit_code::secure;
}

Json to_json(const RunReport& r) {
  Json captures = Json::array();
  for (const auto& c : r.captures) captures.push_back(servers::to_json(c));
  Json outcomes = Json::array();
  for (const auto& o : r.outcomes) outcomes.push_back(agent::to_json(o));
  Json j{{"scenario", r.scenario_name},
         {"verdict", r.verdict ? Json(to_string(*r.verdict)) : Json()},
         {"blocked_by", r.blocked_by ? Json{{"step", r.blocked_by->step}, {"rule", r.blocked_by->rule}} : Json()},
         {"captures", std::move(captures)},
         {"outcomes", std::move(outcomes)},
         {"events", r.events.size()},
         {"exit_code", r.exit_code()}};
  if (!r.error.empty()) j["error"] = r.error;
  return j;
}

namespace {

fs::path default_server_executable() {
  std::error_code ec;
  fs::path self = fs::read_symlink("/proc/self/exe", ec);
  if (ec) throw std::runtime_error("cannot locate the running executable for subprocess servers");
  return self;
}

Json sink_event_payload(const servers::SinkCapture& c) {
  // Headers and arrival time vary between runs; the transcript keeps only
  // what was sent.
  Json j{{"seq", c.seq}, {"method", c.method}, {"path", c.path}};
  if (c.body_json) {
    j["body_json"] = *c.body_json;
  } else {
    j["body"] = c.body;
  }
  return j;
}

struct Topology {
  std::vector<std::shared_ptr<mcp::Server>> in_process;
  std::map<std::string, transport::Connection, std::less<>> connections;

  void close_all() {
    for (auto& [_, conn] : connections) conn.close();
  }
};

transport::Connection open_connection(const ServerSpec& spec, const std::string& sink_url,
                                      const fs::path& server_exe, Topology& topo) {
  servers::BuiltinConfig config{spec.fixture, sink_url, spec.manifest};
  if (spec.builtin && spec.transport == TransportKind::loopback) {
    auto server = std::make_shared<mcp::Server>(servers::make_builtin(*spec.builtin, config));
    topo.in_process.push_back(server);
    return transport::loopback_pair([server](int in, int out) { server->serve(in, out); }, spec.server_id);
  }
  std::vector<std::string> command = spec.command;
  if (spec.builtin) command = {server_exe.string(), "--as-server", *spec.builtin};
  transport::Environment env{{std::string(servers::kSinkUrlEnv), sink_url},
                             {std::string(servers::kFixtureEnv), spec.fixture},
                             {std::string(servers::kManifestEnv), spec.manifest}};
  return transport::spawn_server(command, spec.server_id, env);
}

}  // namespace

RunReport run_scenario(const Scenario& input, const RunOptions& options) {
  const Scenario scenario = apply_overrides(input, options);
  RunReport report;
  report.scenario_name = scenario.name;
  audit::AuditLog log;

  std::unique_ptr<servers::Sink> sink;
  Topology topo;
  std::size_t sink_logged = 0;
  auto log_new_captures = [&] {
    if (!sink) return;
    auto captures = sink->captures();
    for (; sink_logged < captures.size(); ++sink_logged)
      log.record(EventKind::sink_capture, sink_event_payload(captures[sink_logged]));
  };

  try {
    if (scenario.sink.enabled) sink = servers::Sink::start(scenario.sink.port);
    const std::string sink_url = sink ? sink->url() : std::string();

    bool needs_exe = false;
    for (const auto& s : scenario.servers) needs_exe |= s.builtin && s.transport == TransportKind::subprocess;
    fs::path server_exe = options.server_executable;
    if (needs_exe && server_exe.empty()) server_exe = default_server_executable();

    for (const auto& spec : scenario.servers) {
      auto conn = open_connection(spec, sink_url, server_exe, topo);
      conn.set_observer(log.observer());
      topo.connections.emplace(spec.server_id, std::move(conn));
    }

    policy::ManifestMap manifests;
    for (const auto& spec : scenario.servers) {
      Json reply = topo.connections.at(spec.server_id)
                       .request(mcp::method::initialize,
                                {{"client", "crucible"}, {"protocol_version", mcp::kProtocolVersion}});
      mcp::ServerManifest manifest = mcp::manifest_from_json(reply.at("manifest"));
      if (manifest.server_id != spec.server_id)
        throw std::runtime_error("server '" + spec.server_id + "' announced itself as '" + manifest.server_id + "'");
      if (spec.publisher && manifest.publisher != *spec.publisher)
        throw std::runtime_error("server '" + spec.server_id + "' is published by '" + manifest.publisher +
                                 "', scenario expects '" + *spec.publisher + "'");
      manifests.emplace(spec.server_id, std::move(manifest));
    }

    agent::ConsentChannel channel;
    const agent::ConsentChannel* channel_ptr = nullptr;
    if (scenario.consent.mode == agent::ConsentMode::interactive) {
      if (options.answers) {
        channel = {options.answers, options.prompt_out};
      } else if (::isatty(STDIN_FILENO)) {
        channel = {&std::cin, &std::cerr};
      } else {
        throw agent::InteractiveUnavailable();
      }
      channel_ptr = &channel;
    }

    std::map<std::string, transport::Connection*, std::less<>> conn_ptrs;
    for (auto& [id, conn] : topo.connections) conn_ptrs.emplace(id, &conn);
    const policy::PolicyConfig& config = scenario.policy;
    agent::Agent agent(
        conn_ptrs, scenario.consent,
        [&](const policy::Invocation& inv) { return policy::evaluate(inv, manifests, config); }, log,
        channel_ptr);
    agent.set_after_call(log_new_captures);

    for (const auto& action : scenario.script) {
      report.outcomes.push_back(action.kind == ScriptAction::Kind::get_prompt
                                    ? agent.run_prompt(action.server_id, action.name, action.args)
                                    : agent.run_tool(action.server_id, action.name, action.args));
    }

    topo.close_all();
    log_new_captures();
    if (sink) {
      report.captures = sink->captures();
      sink->stop();
    }
    report.events = log.events();
    VerdictFields v = compute_verdict(report.events, report.captures, scenario.policy);
    report.verdict = v.verdict;
    report.blocked_by = v.blocked_by;
  } catch (const std::exception& ex) {
    topo.close_all();
    if (sink) {
      report.captures = sink->captures();
      sink->stop();
    }
    report.error = ex.what();
    report.events = log.events();
    report.verdict.reset();
  }
  return report;
}

}  // namespace crucible::runner
