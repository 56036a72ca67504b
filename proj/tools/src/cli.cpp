#include "crucible/cli.hpp"

#include <CLI11.hpp>
#include <csignal>
#include <fstream>
#include <iostream>
#include <pthread.h>

#include "crucible/policy.hpp"
#include "crucible/runner.hpp"
#include "crucible/servers.hpp"
#include "crucible/transport.hpp"

namespace crucible::cli {

namespace ec = runner::exit_code;

namespace {

struct RunArgs {
  std::string scenario;
  std::string consent;
  std::string mitigations;
  std::string transcript;
  std::string answers;
  std::string transport;
};

int do_run(const RunArgs& a, std::ostream& out, std::ostream& err) {
  runner::RunOptions options;
  try {
    if (!a.consent.empty()) options.consent = agent::consent_mode_from(a.consent);
    if (!a.mitigations.empty()) options.mitigations = policy::Mitigations::parse(a.mitigations);
    if (!a.transport.empty()) options.transport = runner::transport_kind_from(a.transport);
  } catch (const std::invalid_argument& ex) {
    err << "crucible: " << ex.what() << '\n';
    return ec::usage;
  }

  std::ifstream answers;
  if (!a.answers.empty()) {
    answers.open(a.answers);
    if (!answers) {
      err << "crucible: cannot open answers file " << a.answers << '\n';
      return ec::runtime_failure;
    }
    options.answers = &answers;
    options.prompt_out = &err;
  }

  runner::Scenario scenario;
  try {
    scenario = runner::load_scenario(a.scenario);
  } catch (const std::exception& ex) {
    err << "crucible: " << ex.what() << '\n';
    return ec::runtime_failure;
  }

  runner::RunReport report = runner::run_scenario(scenario, options);
  if (!a.transcript.empty()) {
    std::ofstream t(a.transcript, std::ios::trunc);
    if (!t) {
      err << "crucible: cannot write transcript " << a.transcript << '\n';
      return ec::runtime_failure;
    }
    audit::write_jsonl(t, report.events);
  }
  out << runner::to_json(report).dump(2) << '\n';
  if (!report.error.empty()) err << "crucible: " << report.error << '\n';
  return report.exit_code();
}

int do_sign(const std::string& path, const std::string& key_hex, std::ostream& out, std::ostream& err) {
  std::vector<unsigned char> key;
  try {
    key = policy::hex_decode(key_hex);
  } catch (const std::invalid_argument& ex) {
    err << "crucible: --key: " << ex.what() << '\n';
    return ec::usage;
  }
  if (key.empty()) {
    err << "crucible: --key must not be empty\n";
    return ec::usage;
  }
  try {
    mcp::ServerManifest m = mcp::load_manifest(path);
    m.signature = policy::sign_manifest(m, key);
    out << mcp::to_json(m).dump(2) << '\n';
  } catch (const std::exception& ex) {
    err << "crucible: " << ex.what() << '\n';
    return ec::runtime_failure;
  }
  return ec::secure;
}

int do_serve_sink(int port, std::ostream& out, std::ostream& err) {
  sigset_t stop_signals;
  sigemptyset(&stop_signals);
  sigaddset(&stop_signals, SIGINT);
  sigaddset(&stop_signals, SIGTERM);
  pthread_sigmask(SIG_BLOCK, &stop_signals, nullptr);

  std::unique_ptr<servers::Sink> sink;
  try {
    sink = servers::Sink::start(port);
  } catch (const std::exception& ex) {
    err << "crucible: " << ex.what() << '\n';
    return ec::runtime_failure;
  }
  out << "listening on " << sink->url() << std::endl;

  std::size_t shown = 0;
  timespec tick{0, 100'000'000};
  for (;;) {
    auto captures = sink->captures();
    for (; shown < captures.size(); ++shown) out << servers::to_json(captures[shown]).dump() << std::endl;
    if (sigtimedwait(&stop_signals, nullptr, &tick) >= 0) break;
  }
  sink->stop();
  return ec::secure;
}

int do_list(const std::string& dir, std::ostream& out, std::ostream& err) {
  auto files = runner::list_scenarios(dir);
  if (files.empty()) {
    err << "crucible: no scenarios in " << dir << '\n';
    return ec::runtime_failure;
  }
  for (const auto& f : files) {
    try {
      runner::Scenario s = runner::load_scenario(f);
      out << f.filename().string() << "\t" << s.description << '\n';
    } catch (const std::exception& ex) {
      out << f.filename().string() << "\tINVALID: " << ex.what() << '\n';
    }
  }
  return ec::secure;
}

}  // namespace

int run(int argc, char** argv, std::ostream& out, std::ostream& err) {
  transport::ignore_sigpipe();
  if (argc >= 2 && std::string_view(argv[1]) == "--as-server") {
    if (argc != 3) {
      err << "usage: crucible --as-server <weather|banking>\n";
      return ec::usage;
    }
    return servers::run_builtin_stdio(argv[2]);
  }

  CLI::App app{"crucible: cross-server exfiltration testbed"};
  app.require_subcommand(1);

  RunArgs run_args;
  auto* run_cmd = app.add_subcommand("run", "Run a scenario and report the verdict");
  run_cmd->add_option("scenario", run_args.scenario, "Scenario JSON file")->required();
  run_cmd->add_option("--consent", run_args.consent, "auto_approve|auto_deny|interactive|rules");
  run_cmd->add_option("--mitigations", run_args.mitigations,
                      "none|all or a comma list of capabilities,boundaries,attestation");
  run_cmd->add_option("--transcript", run_args.transcript, "Write the audit log as JSON-Lines");
  run_cmd->add_option("--answers", run_args.answers, "Scripted interactive consent answers, one per line");
  run_cmd->add_option("--transport", run_args.transport, "Force builtin servers onto subprocess|loopback");

  std::string manifest_path, key_hex;
  auto* sign_cmd = app.add_subcommand("sign-manifest", "Sign a manifest and print it");
  sign_cmd->add_option("manifest", manifest_path, "Manifest JSON file")->required();
  sign_cmd->add_option("--key", key_hex, "HMAC key as hex")->required();

  int sink_port = 0;
  auto* sink_cmd = app.add_subcommand("serve-sink", "Run the capture sink until interrupted");
  sink_cmd->add_option("--port", sink_port, "TCP port (0 picks one)")->check(CLI::Range(0, 65535));

  std::string scenario_dir = CRUCIBLE_SCENARIO_DIR;
  auto* list_cmd = app.add_subcommand("list-scenarios", "List shipped scenario files");
  list_cmd->add_option("--dir", scenario_dir, "Scenario directory");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    int code = app.exit(e, out, err);
    return code == 0 ? ec::secure : ec::usage;
  }

  if (*run_cmd) return do_run(run_args, out, err);
  if (*sign_cmd) return do_sign(manifest_path, key_hex, out, err);
  if (*sink_cmd) return do_serve_sink(sink_port, out, err);
  return do_list(scenario_dir, out, err);
}

}  // namespace crucible::cli
