// JSON-RPC 2.0 envelopes framed as newline-delimited UTF-8 JSON.
#pragma once

#include <chrono>
#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>

#include <nlohmann/json.hpp>

namespace crucible {

using Json = nlohmann::json;

namespace wire {

/// Error codes carried in ErrorObject. The last two sit in the
/// implementation-defined server range.
enum class ErrorCode : int {
  parse_error = -32700,
  invalid_request = -32600,
  method_not_found = -32601,
  invalid_params = -32602,
  policy_denied = -32001,
  consent_denied = -32002,
  server_error = -32000,
};

/// True for the table above and for anything in -32000..-32099.
bool is_known_error_code(int code);

struct ErrorObject {
  int code = 0;
  std::string message;
  std::optional<Json> data;

  ErrorObject() = default;
  ErrorObject(int c, std::string msg, std::optional<Json> d = std::nullopt)
      : code(c), message(std::move(msg)), data(std::move(d)) {}
  ErrorObject(ErrorCode c, std::string msg, std::optional<Json> d = std::nullopt)
      : ErrorObject(static_cast<int>(c), std::move(msg), std::move(d)) {}

  bool operator==(const ErrorObject&) const = default;
};

enum class Kind { request, response, notification };

std::string_view to_string(Kind kind);

/// One JSON-RPC message. Construct through the factory functions; the
/// invariants for each kind are checked again by encode().
///
/// A response normally carries an id. The single exception is an error
/// response to a line whose id could not be recovered (parse error, or an
/// invalid request without a usable id); it is written with "id":null.
struct Envelope {
  Kind kind = Kind::request;
  std::optional<std::int64_t> id;
  std::optional<std::string> method;
  std::optional<Json> params;
  std::optional<Json> result;
  std::optional<ErrorObject> error;

  static Envelope request(std::int64_t id, std::string method,
                          std::optional<Json> params = std::nullopt);
  static Envelope notification(std::string method,
                               std::optional<Json> params = std::nullopt);
  static Envelope success(std::int64_t id, Json result);
  static Envelope failure(std::optional<std::int64_t> id, ErrorObject error);

  bool operator==(const Envelope&) const = default;
};

/// Raised by encode() when an envelope violates its kind invariants.
class InvalidEnvelope : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Base for decode failures; each maps onto a JSON-RPC error code.
class DecodeError : public std::runtime_error {
 public:
  DecodeError(ErrorCode code, const std::string& what,
              std::optional<std::int64_t> id = std::nullopt)
      : std::runtime_error(what), code_(code), id_(id) {}

  ErrorCode code() const { return code_; }
  /// Id of the offending message when it could be recovered.
  std::optional<std::int64_t> id() const { return id_; }

 private:
  ErrorCode code_;
  std::optional<std::int64_t> id_;
};

class ParseError : public DecodeError {
 public:
  explicit ParseError(const std::string& what)
      : DecodeError(ErrorCode::parse_error, what) {}
};

class InvalidRequest : public DecodeError {
 public:
  explicit InvalidRequest(const std::string& what,
                          std::optional<std::int64_t> id = std::nullopt)
      : DecodeError(ErrorCode::invalid_request, what, id) {}
};

/// Thrown by method handlers; the server turns it into an error response.
class RpcError : public std::runtime_error {
 public:
  explicit RpcError(ErrorObject error)
      : std::runtime_error(error.message), error_(std::move(error)) {}
  RpcError(ErrorCode code, const std::string& message,
           std::optional<Json> data = std::nullopt)
      : RpcError(ErrorObject{code, message, std::move(data)}) {}

  const ErrorObject& error() const { return error_; }

 private:
  ErrorObject error_;
};

/// Serializes to exactly one line ending in '\n'. Members are written in the
/// fixed order jsonrpc, id, method, params, result, error.
std::string encode(const Envelope& envelope);

/// Parses one line (with or without its trailing '\n').
Envelope decode(std::string_view line);

Json error_to_json(const ErrorObject& error);

class EndOfStream : public std::runtime_error {
 public:
  EndOfStream() : std::runtime_error("end of stream") {}
};

class ReadTimeout : public std::runtime_error {
 public:
  ReadTimeout() : std::runtime_error("timed out waiting for a frame") {}
};

class FrameTooLarge : public std::runtime_error {
 public:
  FrameTooLarge() : std::runtime_error("frame exceeds size limit") {}
};

/// Buffered newline-frame reader over a file descriptor. Single consumer.
/// Does not own the descriptor.
class FrameReader {
 public:
  static constexpr std::size_t kMaxFrame = 16u << 20;

  explicit FrameReader(int fd,
                       std::chrono::milliseconds timeout = std::chrono::milliseconds{0});

  /// Bytes up to (excluding) the next '\n'. Throws EndOfStream if the
  /// source closes before a full line, ReadTimeout when a non-zero timeout
  /// elapses with no progress.
  std::string read_frame();

  int fd() const { return fd_; }

 private:
  int fd_;
  std::chrono::milliseconds timeout_;
  std::string buffer_;
  std::size_t scanned_ = 0;
};

/// Writes every byte or throws std::system_error (EPIPE when the peer is gone).
void write_all(int fd, std::string_view bytes);

}  // namespace wire
}  // namespace crucible
