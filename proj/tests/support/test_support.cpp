#include "test_support.hpp"

#include <arpa/inet.h>
#include <netinet/in.h>
#include <sys/socket.h>
#include <sys/wait.h>
#include <unistd.h>

#include <array>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <stdexcept>

namespace crucible::testing {

namespace fs = std::filesystem;

fs::path scenario_path(const std::string& file) { return fs::path(CRUCIBLE_SCENARIO_DIR) / file; }
fs::path cli_path() { return CRUCIBLE_CLI_PATH; }

runner::RunOptions options_for_tests() {
  runner::RunOptions o;
  o.server_executable = cli_path();
  return o;
}

runner::Scenario shipped(const std::string& file) { return runner::load_scenario(scenario_path(file)); }

TempDir::TempDir() {
  std::string tmpl = (fs::temp_directory_path() / "crucible-test-XXXXXX").string();
  if (::mkdtemp(tmpl.data()) == nullptr) throw std::runtime_error("mkdtemp failed");
  path_ = tmpl;
}

TempDir::~TempDir() {
  std::error_code ec;
  fs::remove_all(path_, ec);
}

fs::path TempDir::write(const std::string& name, const std::string& content) const {
  fs::path p = path_ / name;
  std::ofstream(p, std::ios::binary) << content;
  return p;
}

namespace {

std::string shell_quote(const std::string& s) {
  std::string out = "'";
  for (char c : s) {
    if (c == '\'') {
      out += "'\\''";
    } else {
      out += c;
    }
  }
  return out + "'";
}

}  // namespace

CommandResult run_cli(const std::vector<std::string>& args) {
  std::string cmd = shell_quote(cli_path().string());
  for (const auto& a : args) cmd += " " + shell_quote(a);
  cmd += " 2>/dev/null </dev/null";
  CommandResult r;
  FILE* pipe = ::popen(cmd.c_str(), "r");
  if (pipe == nullptr) throw std::runtime_error("popen failed");
  std::array<char, 4096> buf{};
  std::size_t n;
  while ((n = std::fread(buf.data(), 1, buf.size(), pipe)) > 0) r.out.append(buf.data(), n);
  int status = ::pclose(pipe);
  r.exit_code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  return r;
}

std::string http_raw(int port, const std::string& request) {
  int fd = ::socket(AF_INET, SOCK_STREAM, 0);
  if (fd < 0) throw std::runtime_error("socket failed");
  sockaddr_in addr{};
  addr.sin_family = AF_INET;
  addr.sin_port = htons(static_cast<uint16_t>(port));
  addr.sin_addr.s_addr = htonl(INADDR_LOOPBACK);
  if (::connect(fd, reinterpret_cast<sockaddr*>(&addr), sizeof addr) != 0) {
    ::close(fd);
    throw std::runtime_error("connect failed");
  }
  wire::write_all(fd, request);
  std::string out;
  char buf[4096];
  ssize_t n;
  while ((n = ::read(fd, buf, sizeof buf)) > 0) out.append(buf, static_cast<std::size_t>(n));
  ::close(fd);
  return out;
}

int http_status(const std::string& response) {
  // "HTTP/1.1 200 OK"
  auto sp = response.find(' ');
  if (sp == std::string::npos) return -1;
  return std::atoi(response.c_str() + sp + 1);
}

int pick(Rng& rng, int lo, int hi) { return std::uniform_int_distribution<int>(lo, hi)(rng); }
bool coin(Rng& rng) { return pick(rng, 0, 1) == 1; }

std::string random_string(Rng& rng, std::size_t max_len) {
  static const std::vector<std::string> alphabet = {"a", "b", "z", "0", "7", " ", "_", "-", ".", "/", "{", "}",
                                                    "\"", "\\", "\n", "\t", "\r", std::string(1, '\x01'),
                                                    "\xc3\xa9", "\xe2\x82\xac", "\xf0\x9f\x8c\xa7", "$"};
  std::string s;
  int len = pick(rng, 0, static_cast<int>(max_len));
  for (int i = 0; i < len; ++i) s += alphabet[static_cast<std::size_t>(pick(rng, 0, static_cast<int>(alphabet.size()) - 1))];
  return s;
}

Json random_json(Rng& rng, int depth) {
  int kind = pick(rng, 0, depth > 0 ? 6 : 4);
  switch (kind) {
    case 0: return nullptr;
    case 1: return coin(rng);
    case 2: {
      std::int64_t v = std::uniform_int_distribution<std::int64_t>(INT64_MIN, INT64_MAX)(rng);
      return coin(rng) ? Json(v) : Json(v % 1000);
    }
    case 3:
    case 4: return random_string(rng);
    case 5: {
      Json a = Json::array();
      for (int i = pick(rng, 0, 4); i > 0; --i) a.push_back(random_json(rng, depth - 1));
      return a;
    }
    default: {
      Json o = Json::object();
      for (int i = pick(rng, 0, 4); i > 0; --i) o[random_string(rng, 6)] = random_json(rng, depth - 1);
      return o;
    }
  }
}

namespace {

Json random_container(Rng& rng) {
  Json j = random_json(rng, 3);
  if (j.is_object() || j.is_array()) return j;
  return coin(rng) ? Json{{"v", j}} : Json::array({j});
}

}  // namespace

wire::Envelope random_envelope(Rng& rng) {
  std::int64_t id = coin(rng) ? pick(rng, 0, 100) : std::uniform_int_distribution<std::int64_t>(INT64_MIN, INT64_MAX)(rng);
  std::string method = coin(rng) ? std::string(mcp::method::tools_call) : random_string(rng, 10);
  std::optional<Json> params;
  if (coin(rng)) params = random_container(rng);
  switch (pick(rng, 0, 3)) {
    case 0: return wire::Envelope::request(id, method, params);
    case 1: return wire::Envelope::notification(method, params);
    case 2: return wire::Envelope::success(id, random_json(rng, 3));
    default: {
      static const int codes[] = {-32700, -32600, -32601, -32602, -32001, -32002, -32000};
      wire::ErrorObject err{codes[pick(rng, 0, 6)], random_string(rng, 20)};
      if (coin(rng)) err.data = random_json(rng, 2);
      std::optional<std::int64_t> eid = id;
      if (err.code == -32700 || err.code == -32600) {
        if (coin(rng)) eid.reset();
      }
      return wire::Envelope::failure(eid, err);
    }
  }
}

mcp::ServerManifest random_manifest(Rng& rng) {
  static const char* ids[] = {"weather", "banking", "notes", "mail", "s-1", "x_2"};
  static const char* tools[] = {"get", "put", "account.balance", "send", "list.all", "echo"};
  auto schema = [&] {
    mcp::ParamsSchema s;
    for (int i = pick(rng, 0, 3); i > 0; --i)
      s["p" + std::to_string(pick(rng, 0, 9))] = {static_cast<mcp::ParamType>(pick(rng, 0, 2)), coin(rng)};
    return s;
  };
  mcp::ServerManifest m;
  m.server_id = ids[pick(rng, 0, 5)];
  m.publisher = "pub-" + std::to_string(pick(rng, 0, 3));
  m.version = std::to_string(pick(rng, 0, 3)) + "." + std::to_string(pick(rng, 0, 9)) + ".0";
  std::vector<std::string> names(std::begin(tools), std::end(tools));
  std::shuffle(names.begin(), names.end(), rng);
  for (int i = pick(rng, 0, 4); i > 0; --i)
    m.tools.push_back({names[static_cast<std::size_t>(i)], random_string(rng, 20), schema(), coin(rng)});
  for (int i = pick(rng, 0, 2); i > 0; --i) m.prompts.push_back({"prompt_" + std::to_string(i), random_string(rng), schema()});
  for (int i = pick(rng, 0, 2); i > 0; --i) m.interacts_with.push_back(coin(rng) ? "*" : ids[pick(rng, 0, 5)]);
  return m;
}

mcp::Server echo_server(const std::string& server_id) {
  mcp::ServerManifest m;
  m.server_id = server_id;
  m.publisher = "test";
  m.version = "1.0.0";
  m.tools.push_back({"echo", "Returns its arguments.", {}, false});
  mcp::HandlerRegistry reg;
  reg.tool("echo", [](const Json& args) { return args; });
  return mcp::Server(std::move(m), std::move(reg));
}

}  // namespace crucible::testing
