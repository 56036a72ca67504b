#include "crucible/transport.hpp"

#include <fcntl.h>
#include <signal.h>
#include <spawn.h>
#include <sys/wait.h>
#include <unistd.h>

#include <cerrno>
#include <cstring>
#include <mutex>
#include <system_error>

extern char** environ;

namespace crucible::transport {

namespace {

void close_fd(int& fd) {
  if (fd >= 0) {
    ::close(fd);
    fd = -1;
  }
}

struct Pipe {
  int read = -1;
  int write = -1;

  Pipe() {
    int fds[2];
    if (::pipe2(fds, O_CLOEXEC) != 0) throw std::system_error(errno, std::generic_category(), "pipe2");
    read = fds[0];
    write = fds[1];
  }
  ~Pipe() {
    close_fd(read);
    close_fd(write);
  }
  Pipe(const Pipe&) = delete;
  Pipe& operator=(const Pipe&) = delete;

  int release_read() { return std::exchange(read, -1); }
  int release_write() { return std::exchange(write, -1); }
};

std::vector<std::string> merged_environment(const Environment& extra) {
  std::map<std::string, std::string> merged;
  for (char** e = environ; e && *e; ++e) {
    std::string_view entry(*e);
    auto eq = entry.find('=');
    if (eq == std::string_view::npos) continue;
    merged[std::string(entry.substr(0, eq))] = std::string(entry.substr(eq + 1));
  }
  for (const auto& [k, v] : extra) merged[k] = v;
  std::vector<std::string> out;
  out.reserve(merged.size());
  for (const auto& [k, v] : merged) out.push_back(k + "=" + v);
  return out;
}

std::vector<char*> as_argv(std::vector<std::string>& strings) {
  std::vector<char*> out;
  for (auto& s : strings) out.push_back(s.data());
  out.push_back(nullptr);
  return out;
}

}  // namespace

void ignore_sigpipe() {
  static std::once_flag once;
  std::call_once(once, [] { ::signal(SIGPIPE, SIG_IGN); });
}

Connection::Connection(std::string server_id, int write_fd, int read_fd)
    : server_id_(std::move(server_id)),
      write_fd_(write_fd),
      read_fd_(read_fd),
      reader_(std::make_unique<wire::FrameReader>(read_fd, kRequestTimeout)) {}

Connection::Connection(Connection&& other) noexcept
    : server_id_(std::move(other.server_id_)),
      write_fd_(std::exchange(other.write_fd_, -1)),
      read_fd_(std::exchange(other.read_fd_, -1)),
      reader_(std::move(other.reader_)),
      next_id_(other.next_id_),
      state_(std::exchange(other.state_, State::closed)),
      pid_(std::exchange(other.pid_, std::nullopt)),
      server_task_(std::move(other.server_task_)),
      observer_(std::move(other.observer_)) {}

Connection& Connection::operator=(Connection&& other) noexcept {
  if (this != &other) {
    close();
    server_id_ = std::move(other.server_id_);
    write_fd_ = std::exchange(other.write_fd_, -1);
    read_fd_ = std::exchange(other.read_fd_, -1);
    reader_ = std::move(other.reader_);
    next_id_ = other.next_id_;
    state_ = std::exchange(other.state_, State::closed);
    pid_ = std::exchange(other.pid_, std::nullopt);
    server_task_ = std::move(other.server_task_);
    observer_ = std::move(other.observer_);
  }
  return *this;
}

Connection::~Connection() { close(); }

void Connection::set_timeout(std::chrono::milliseconds timeout) {
  if (read_fd_ >= 0) reader_ = std::make_unique<wire::FrameReader>(read_fd_, timeout);
}

Json Connection::request(std::string_view method, Json params) {
  if (state_ == State::closed) throw TransportClosed();
  if (state_ == State::fresh && method != "initialize")
    throw ProtocolViolation("connection to '" + server_id_ + "' is not initialized");

  const std::int64_t id = next_id_++;
  std::string line = wire::encode(wire::Envelope::request(id, std::string(method), std::move(params)));
  if (observer_) observer_(Direction::out, server_id_, std::string_view(line).substr(0, line.size() - 1));
  try {
    wire::write_all(write_fd_, line);
  } catch (const std::system_error& ex) {
    throw TransportClosed(std::string("write failed: ") + ex.what());
  }

  for (;;) {
    std::string frame;
    try {
      frame = reader_->read_frame();
    } catch (const wire::EndOfStream&) {
      throw TransportClosed("server '" + server_id_ + "' closed the stream");
    } catch (const wire::ReadTimeout&) {
      throw TransportTimeout("no response from '" + server_id_ + "' within the request timeout");
    }
    if (observer_) observer_(Direction::in, server_id_, frame);

    wire::Envelope reply;
    try {
      reply = wire::decode(frame);
    } catch (const wire::DecodeError& ex) {
      throw ProtocolViolation("undecodable reply from '" + server_id_ + "': " + ex.what());
    }
    if (reply.kind == wire::Kind::notification) continue;
    if (reply.kind == wire::Kind::request)
      throw ProtocolViolation("server '" + server_id_ + "' sent a request");
    if (!reply.id) {
      // Error with an unrecoverable id; with one request in flight it can
      // only refer to ours.
      throw RemoteError(*reply.error);
    }
    if (*reply.id != id) {
      throw ProtocolViolation("response id " + std::to_string(*reply.id) + " does not match request id " +
                              std::to_string(id));
    }
    if (reply.error) throw RemoteError(*reply.error);
    if (method == "initialize") state_ = State::initialized;
    return std::move(*reply.result);
  }
}

void Connection::reap_child() {
  if (!pid_) return;
  using namespace std::chrono;
  auto deadline = steady_clock::now() + milliseconds(2000);
  int status = 0;
  for (;;) {
    pid_t r = ::waitpid(*pid_, &status, WNOHANG);
    if (r == *pid_ || (r < 0 && errno != EINTR)) break;
    if (steady_clock::now() >= deadline) {
      ::kill(*pid_, SIGKILL);
      ::waitpid(*pid_, &status, 0);
      break;
    }
    std::this_thread::sleep_for(milliseconds(5));
  }
  pid_.reset();
}

void Connection::close() {
  if (state_ == State::closed && write_fd_ < 0 && read_fd_ < 0 && !pid_ && !server_task_.joinable())
    return;
  state_ = State::closed;
  close_fd(write_fd_);
  reader_.reset();
  close_fd(read_fd_);
  reap_child();
  if (server_task_.joinable()) server_task_.join();
}

Connection spawn_server(const std::vector<std::string>& command, std::string server_id,
                        const Environment& env) {
  if (command.empty()) throw SpawnError("empty command");
  ignore_sigpipe();

  Pipe to_child;
  Pipe from_child;

  posix_spawn_file_actions_t actions;
  posix_spawn_file_actions_init(&actions);
  posix_spawn_file_actions_adddup2(&actions, to_child.read, STDIN_FILENO);
  posix_spawn_file_actions_adddup2(&actions, from_child.write, STDOUT_FILENO);

  std::vector<std::string> args = command;
  std::vector<std::string> envs = merged_environment(env);
  auto argv = as_argv(args);
  auto envp = as_argv(envs);

  pid_t pid = -1;
  int rc = ::posix_spawnp(&pid, argv[0], &actions, nullptr, argv.data(), envp.data());
  posix_spawn_file_actions_destroy(&actions);
  if (rc != 0) throw SpawnError("cannot start '" + command.front() + "': " + std::strerror(rc));

  Connection conn(std::move(server_id), to_child.release_write(), from_child.release_read());
  conn.pid_ = pid;
  return conn;
}

Connection loopback_pair(ServerLogic logic, std::string server_id) {
  ignore_sigpipe();
  Pipe to_server;
  Pipe from_server;
  int server_in = to_server.release_read();
  int server_out = from_server.release_write();

  Connection conn(std::move(server_id), to_server.release_write(), from_server.release_read());
  conn.server_task_ = std::thread([logic = std::move(logic), server_in, server_out] {
    try {
      logic(server_in, server_out);
    } catch (...) {
      // A failing server task shows up to the client as end of stream.
    }
    ::close(server_in);
    ::close(server_out);
  });
  return conn;
}

}  // namespace crucible::transport
