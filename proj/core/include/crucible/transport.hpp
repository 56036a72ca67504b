// Client ends of client↔server byte channels. There is deliberately no way
// to join two server ends: every path runs through a Connection.
#pragma once

#include <sys/types.h>

#include <chrono>
#include <cstdint>
#include <functional>
#include <map>
#include <memory>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <thread>
#include <vector>

#include "crucible/wire.hpp"

namespace crucible::transport {

enum class State { fresh, initialized, closed };
enum class Direction { out, in };

class TransportClosed : public std::runtime_error {
 public:
  TransportClosed() : std::runtime_error("transport closed") {}
  explicit TransportClosed(const std::string& what) : std::runtime_error(what) {}
};

class ProtocolViolation : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class SpawnError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class TransportTimeout : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class RemoteError : public std::runtime_error {
 public:
  explicit RemoteError(wire::ErrorObject error)
      : std::runtime_error("remote error " + std::to_string(error.code) + ": " + error.message),
        error_(std::move(error)) {}
  const wire::ErrorObject& error() const { return error_; }

 private:
  wire::ErrorObject error_;
};

/// Sees every line crossing the connection, newline excluded.
using MessageObserver =
    std::function<void(Direction, std::string_view server_id, std::string_view line)>;

/// Server side of a loopback pair: read requests from in_fd, write replies
/// to out_fd, return once in_fd reaches end of stream.
using ServerLogic = std::function<void(int in_fd, int out_fd)>;

using Environment = std::map<std::string, std::string>;

inline constexpr std::chrono::milliseconds kRequestTimeout{10'000};

class Connection {
 public:
  Connection(Connection&&) noexcept;
  Connection& operator=(Connection&&) noexcept;
  Connection(const Connection&) = delete;
  Connection& operator=(const Connection&) = delete;
  ~Connection();

  /// Sends a request with the next id and waits for its response.
  /// Server notifications received while waiting are skipped.
  Json request(std::string_view method, Json params = Json::object());

  /// Closing the client end is the shutdown signal. Idempotent.
  void close();

  const std::string& server_id() const { return server_id_; }
  State state() const { return state_; }
  std::int64_t next_id() const { return next_id_; }
  std::optional<pid_t> child_pid() const { return pid_; }

  void set_observer(MessageObserver observer) { observer_ = std::move(observer); }
  void set_timeout(std::chrono::milliseconds timeout);

 private:
  friend Connection spawn_server(const std::vector<std::string>&, std::string, const Environment&);
  friend Connection loopback_pair(ServerLogic, std::string);

  Connection(std::string server_id, int write_fd, int read_fd);
  void reap_child();

  std::string server_id_;
  int write_fd_ = -1;
  int read_fd_ = -1;
  std::unique_ptr<wire::FrameReader> reader_;
  std::int64_t next_id_ = 1;
  State state_ = State::fresh;
  std::optional<pid_t> pid_;
  std::thread server_task_;
  MessageObserver observer_;
};

/// Starts `command` with stdin/stdout carrying the wire protocol; stderr is
/// inherited. `env` entries are added to (or override) the parent's
/// environment.
Connection spawn_server(const std::vector<std::string>& command, std::string server_id,
                        const Environment& env = {});

/// In-process pair over two pipes; `logic` runs on a dedicated thread owned
/// by the returned connection and is joined by close().
Connection loopback_pair(ServerLogic logic, std::string server_id);

/// Ignore SIGPIPE process-wide so writes to a dead peer surface as EPIPE.
void ignore_sigpipe();

}  // namespace crucible::transport
