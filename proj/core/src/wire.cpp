#include "crucible/wire.hpp"

#include <poll.h>
#include <unistd.h>

#include <cerrno>
#include <system_error>

namespace crucible::wire {

namespace {

constexpr int kMaxDepth = 256;

bool id_may_be_null(const Envelope& e) {
  if (!e.error) return false;
  return e.error->code == static_cast<int>(ErrorCode::parse_error) ||
         e.error->code == static_cast<int>(ErrorCode::invalid_request);
}

void check_invariants(const Envelope& e) {
  switch (e.kind) {
    case Kind::request:
      if (!e.id) throw InvalidEnvelope("request without id");
      if (!e.method) throw InvalidEnvelope("request without method");
      if (e.result || e.error) throw InvalidEnvelope("request carries result/error");
      break;
    case Kind::response:
      if (!e.id && !id_may_be_null(e)) throw InvalidEnvelope("response without id");
      if (e.method) throw InvalidEnvelope("response carries method");
      if (e.params) throw InvalidEnvelope("response carries params");
      if (e.result.has_value() == e.error.has_value())
        throw InvalidEnvelope("response needs exactly one of result/error");
      if (e.error && !is_known_error_code(e.error->code))
        throw InvalidEnvelope("undefined error code " + std::to_string(e.error->code));
      break;
    case Kind::notification:
      if (e.id) throw InvalidEnvelope("notification with id");
      if (!e.method) throw InvalidEnvelope("notification without method");
      if (e.result || e.error) throw InvalidEnvelope("notification carries result/error");
      break;
  }
  if (e.params && !e.params->is_object() && !e.params->is_array())
    throw InvalidEnvelope("params must be an object or array");
}

std::string dump(const Json& value) {
  try {
    return value.dump();
  } catch (const Json::type_error& ex) {
    throw InvalidEnvelope(std::string("unencodable value: ") + ex.what());
  }
}

// nlohmann's parser recurses per nesting level; refuse pathological input
// before handing it over.
bool nesting_within_limit(std::string_view text) {
  int depth = 0;
  bool in_string = false;
  bool escaped = false;
  for (char c : text) {
    if (in_string) {
      if (escaped) {
        escaped = false;
      } else if (c == '\\') {
        escaped = true;
      } else if (c == '"') {
        in_string = false;
      }
      continue;
    }
    if (c == '"') {
      in_string = true;
    } else if (c == '{' || c == '[') {
      if (++depth > kMaxDepth) return false;
    } else if (c == '}' || c == ']') {
      --depth;
    }
  }
  return true;
}

ErrorObject decode_error_object(const Json& j, std::optional<std::int64_t> id) {
  if (!j.is_object()) throw InvalidRequest("error must be an object", id);
  for (const auto& [key, _] : j.items()) {
    if (key != "code" && key != "message" && key != "data")
      throw InvalidRequest("unexpected error member '" + key + "'", id);
  }
  auto code = j.find("code");
  auto message = j.find("message");
  if (code == j.end() || !code->is_number_integer())
    throw InvalidRequest("error.code must be an integer", id);
  if (message == j.end() || !message->is_string())
    throw InvalidRequest("error.message must be a string", id);
  int value = code->get<int>();
  if (!is_known_error_code(value))
    throw InvalidRequest("undefined error code " + std::to_string(value), id);
  ErrorObject out{value, message->get<std::string>()};
  if (auto data = j.find("data"); data != j.end()) out.data = *data;
  return out;
}

}  // namespace

bool is_known_error_code(int code) {
  switch (static_cast<ErrorCode>(code)) {
    case ErrorCode::parse_error:
    case ErrorCode::invalid_request:
    case ErrorCode::method_not_found:
    case ErrorCode::invalid_params:
      return true;
    default:
      return code <= -32000 && code >= -32099;
  }
}

std::string_view to_string(Kind kind) {
  switch (kind) {
    case Kind::request: return "request";
    case Kind::response: return "response";
    case Kind::notification: return "notification";
  }
  return "?";
}

Envelope Envelope::request(std::int64_t id, std::string method, std::optional<Json> params) {
  Envelope e;
  e.kind = Kind::request;
  e.id = id;
  e.method = std::move(method);
  e.params = std::move(params);
  return e;
}

Envelope Envelope::notification(std::string method, std::optional<Json> params) {
  Envelope e;
  e.kind = Kind::notification;
  e.method = std::move(method);
  e.params = std::move(params);
  return e;
}

Envelope Envelope::success(std::int64_t id, Json result) {
  Envelope e;
  e.kind = Kind::response;
  e.id = id;
  e.result = std::move(result);
  return e;
}

Envelope Envelope::failure(std::optional<std::int64_t> id, ErrorObject error) {
  Envelope e;
  e.kind = Kind::response;
  e.id = id;
  e.error = std::move(error);
  return e;
}

Json error_to_json(const ErrorObject& error) {
  Json j{{"code", error.code}, {"message", error.message}};
  if (error.data) j["data"] = *error.data;
  return j;
}

std::string encode(const Envelope& e) {
  check_invariants(e);
  std::string out = R"({"jsonrpc":"2.0")";
  if (e.id) {
    out += ",\"id\":" + std::to_string(*e.id);
  } else if (e.kind == Kind::response) {
    out += ",\"id\":null";
  }
  if (e.method) out += ",\"method\":" + dump(Json(*e.method));
  if (e.params) out += ",\"params\":" + dump(*e.params);
  if (e.result) out += ",\"result\":" + dump(*e.result);
  if (e.error) out += ",\"error\":" + dump(error_to_json(*e.error));
  out += "}\n";
  return out;
}

Envelope decode(std::string_view line) {
  if (!line.empty() && line.back() == '\n') line.remove_suffix(1);
  if (!nesting_within_limit(line)) throw ParseError("nesting too deep");

  Json j;
  try {
    j = Json::parse(line.begin(), line.end());
  } catch (const Json::exception& ex) {
    throw ParseError(ex.what());
  }
  if (!j.is_object()) throw InvalidRequest("envelope must be a JSON object");

  // Recover the id first so later errors can be attributed to it.
  std::optional<std::int64_t> id;
  bool null_id = false;
  if (auto it = j.find("id"); it != j.end()) {
    if (it->is_number_integer()) {
      id = it->get<std::int64_t>();
    } else if (it->is_null()) {
      null_id = true;
    } else {
      throw InvalidRequest("id must be an integer");
    }
  }

  for (const auto& [key, _] : j.items()) {
    if (key != "jsonrpc" && key != "id" && key != "method" && key != "params" &&
        key != "result" && key != "error")
      throw InvalidRequest("unexpected member '" + key + "'", id);
  }
  auto version = j.find("jsonrpc");
  if (version == j.end() || *version != "2.0")
    throw InvalidRequest("jsonrpc must be \"2.0\"", id);

  Envelope e;
  e.id = id;
  if (auto it = j.find("method"); it != j.end()) {
    if (!it->is_string()) throw InvalidRequest("method must be a string", id);
    e.method = it->get<std::string>();
  }
  if (auto it = j.find("params"); it != j.end()) {
    if (!it->is_object() && !it->is_array())
      throw InvalidRequest("params must be an object or array", id);
    e.params = *it;
  }
  if (auto it = j.find("result"); it != j.end()) e.result = *it;
  if (auto it = j.find("error"); it != j.end()) e.error = decode_error_object(*it, id);

  if (e.method) {
    if (e.result || e.error) throw InvalidRequest("method alongside result/error", id);
    if (null_id) throw InvalidRequest("id must be an integer");
    e.kind = id ? Kind::request : Kind::notification;
    return e;
  }
  if (e.result && e.error) throw InvalidRequest("both result and error present", id);
  if (!e.result && !e.error) throw InvalidRequest("neither method nor result/error", id);
  if (e.params) throw InvalidRequest("response carries params", id);
  e.kind = Kind::response;
  if (!id && !id_may_be_null(e)) throw InvalidRequest("response without id");
  return e;
}

FrameReader::FrameReader(int fd, std::chrono::milliseconds timeout)
    : fd_(fd), timeout_(timeout) {}

std::string FrameReader::read_frame() {
  for (;;) {
    auto nl = buffer_.find('\n', scanned_);
    if (nl != std::string::npos) {
      std::string frame = buffer_.substr(0, nl);
      buffer_.erase(0, nl + 1);
      scanned_ = 0;
      return frame;
    }
    scanned_ = buffer_.size();
    if (buffer_.size() > kMaxFrame) throw FrameTooLarge();

    if (timeout_.count() > 0) {
      pollfd pfd{fd_, POLLIN, 0};
      int rc;
      do {
        rc = ::poll(&pfd, 1, static_cast<int>(timeout_.count()));
      } while (rc < 0 && errno == EINTR);
      if (rc == 0) throw ReadTimeout();
      if (rc < 0) throw std::system_error(errno, std::generic_category(), "poll");
    }

    char chunk[8192];
    ssize_t n;
    do {
      n = ::read(fd_, chunk, sizeof chunk);
    } while (n < 0 && errno == EINTR);
    if (n < 0) {
      if (errno == EBADF || errno == ECONNRESET) throw EndOfStream();
      throw std::system_error(errno, std::generic_category(), "read");
    }
    if (n == 0) throw EndOfStream();
    buffer_.append(chunk, static_cast<std::size_t>(n));
  }
}

void write_all(int fd, std::string_view bytes) {
  while (!bytes.empty()) {
    ssize_t n = ::write(fd, bytes.data(), bytes.size());
    if (n < 0) {
      if (errno == EINTR) continue;
      throw std::system_error(errno, std::generic_category(), "write");
    }
    bytes.remove_prefix(static_cast<std::size_t>(n));
  }
}

}  // namespace crucible::wire
