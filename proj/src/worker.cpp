#include <poll.h>
#include <signal.h>
#include <spawn.h>
#include <sys/socket.h>
#include <sys/wait.h>
#include <unistd.h>

#include <cerrno>
#include <cmath>
#include <cstring>
#include <limits>
#include <thread>

#include "ges/errors.hpp"
#include "ges/sources.hpp"

extern char** environ;

namespace ges {

using nlohmann::json;
using Clock = std::chrono::steady_clock;

std::string_view to_string(Role role) {
  switch (role) {
    case Role::generator:
      return "generator";
    case Role::evaluator:
      return "evaluator";
    case Role::refiner:
      return "refiner";
    case Role::classifier:
      return "classifier";
  }
  return "unknown";
}

Role role_from_string(std::string_view name) {
  for (Role r : {Role::generator, Role::evaluator, Role::refiner, Role::classifier}) {
    if (to_string(r) == name) return r;
  }
  throw InvalidInput("unknown worker role '" + std::string(name) + "'");
}

WorkerProcess::WorkerProcess(WorkerEndpoint endpoint) : endpoint_(std::move(endpoint)) {
  if (endpoint_.command.empty()) throw InvalidInput("worker endpoint has no launch command");

  // One socket serves as the child's stdin and stdout; sockets let us write
  // with MSG_NOSIGNAL instead of fighting SIGPIPE.
  int fds[2];
  if (::socketpair(AF_UNIX, SOCK_STREAM | SOCK_CLOEXEC, 0, fds) != 0) {
    throw EndpointFailure(std::string("socketpair: ") + std::strerror(errno));
  }
  posix_spawn_file_actions_t actions;
  posix_spawn_file_actions_init(&actions);
  posix_spawn_file_actions_adddup2(&actions, fds[1], STDIN_FILENO);
  posix_spawn_file_actions_adddup2(&actions, fds[1], STDOUT_FILENO);

  std::vector<char*> argv;
  for (auto& a : endpoint_.command) argv.push_back(a.data());
  argv.push_back(nullptr);
  pid_t pid = -1;
  const int rc = ::posix_spawnp(&pid, argv[0], &actions, nullptr, argv.data(), environ);
  posix_spawn_file_actions_destroy(&actions);
  ::close(fds[1]);
  if (rc != 0) {
    ::close(fds[0]);
    throw EndpointFailure("cannot launch worker '" + endpoint_.command[0] + "': " + std::strerror(rc));
  }
  pid_ = pid;
  to_child_ = fds[0];
  from_child_ = fds[0];

  try {
    json hello = {{"type", "hello"},
                  {"role", std::string(to_string(endpoint_.role))},
                  {"version", endpoint_.protocol_version}};
    send_line(hello.dump());
    const std::string line = read_line();
    json reply;
    try {
      reply = json::parse(line);
    } catch (const json::parse_error&) {
      throw ProtocolError("handshake reply is not JSON: " + line);
    }
    if (reply.value("type", std::string{}) != "ready") {
      throw ProtocolError("worker did not answer the handshake with ready: " + line);
    }
  } catch (...) {
    shutdown();
    throw;
  }
}

WorkerProcess::~WorkerProcess() { shutdown(); }

void WorkerProcess::shutdown() noexcept {
  if (to_child_ >= 0) {
    ::shutdown(to_child_, SHUT_WR);
  }
  if (pid_ > 0) {
    int status = 0;
    bool reaped = false;
    for (int i = 0; i < 100 && !reaped; ++i) {
      reaped = ::waitpid(pid_, &status, WNOHANG) == pid_;
      if (!reaped) std::this_thread::sleep_for(std::chrono::milliseconds(10));
    }
    if (!reaped) {
      ::kill(pid_, SIGKILL);
      ::waitpid(pid_, &status, 0);
    }
    pid_ = -1;
  }
  if (to_child_ >= 0) {
    ::close(to_child_);
    to_child_ = -1;
    from_child_ = -1;
  }
}

void WorkerProcess::send_line(const std::string& line) {
  std::string data = line + "\n";
  std::size_t off = 0;
  while (off < data.size()) {
    const ssize_t n = ::send(to_child_, data.data() + off, data.size() - off, MSG_NOSIGNAL);
    if (n < 0) {
      if (errno == EINTR) continue;
      broken_ = true;
      throw EndpointFailure(std::string("worker pipe closed: ") + std::strerror(errno));
    }
    off += static_cast<std::size_t>(n);
  }
}

std::string WorkerProcess::read_line() {
  const auto deadline = Clock::now() + endpoint_.timeout;
  for (;;) {
    if (auto nl = buffer_.find('\n'); nl != std::string::npos) {
      std::string line = buffer_.substr(0, nl);
      buffer_.erase(0, nl + 1);
      return line;
    }
    const auto left =
        std::chrono::duration_cast<std::chrono::milliseconds>(deadline - Clock::now()).count();
    if (left <= 0) {
      broken_ = true;
      throw EndpointFailure("worker timed out after " + std::to_string(endpoint_.timeout.count()) + " ms");
    }
    pollfd pfd{from_child_, POLLIN, 0};
    const int ready = ::poll(&pfd, 1, static_cast<int>(left));
    if (ready < 0) {
      if (errno == EINTR) continue;
      broken_ = true;
      throw EndpointFailure(std::string("poll: ") + std::strerror(errno));
    }
    if (ready == 0) continue;
    char chunk[4096];
    const ssize_t n = ::read(from_child_, chunk, sizeof chunk);
    if (n < 0) {
      if (errno == EINTR) continue;
      broken_ = true;
      throw EndpointFailure(std::string("read: ") + std::strerror(errno));
    }
    if (n == 0) {
      broken_ = true;
      throw EndpointFailure("worker exited");
    }
    buffer_.append(chunk, static_cast<std::size_t>(n));
  }
}

json WorkerProcess::call(json request) {
  std::lock_guard lock(mutex_);
  if (broken_) throw EndpointFailure("worker endpoint is no longer usable");
  const std::int64_t id = next_id_++;
  request["id"] = id;
  send_line(request.dump());
  const std::string line = read_line();
  json reply;
  try {
    reply = json::parse(line);
  } catch (const json::parse_error&) {
    throw ProtocolError("response is not JSON: " + line.substr(0, 200));
  }
  if (!reply.is_object()) throw ProtocolError("response is not an object");
  if (reply.value("type", std::string{}) == "error") {
    throw ProtocolError("worker reported an error: " + reply.value("message", std::string{}));
  }
  if (!reply.contains("id") || !reply["id"].is_number_integer() ||
      reply["id"].get<std::int64_t>() != id) {
    throw ProtocolError("response id does not echo request id " + std::to_string(id));
  }
  return reply;
}

BitMask decode_worker_mask(const json& counts, int height, int width) {
  if (!counts.is_array()) throw ProtocolError("RLE must be an array of run lengths");
  RleMask rle{width, height, {}};
  for (const auto& v : counts) {
    if (!v.is_number_integer() || v.get<std::int64_t>() < 0 ||
        v.get<std::int64_t>() > std::numeric_limits<std::uint32_t>::max()) {
      throw ProtocolError("RLE runs must be non-negative integers");
    }
    rle.runs.push_back(static_cast<std::uint32_t>(v.get<std::int64_t>()));
  }
  if (!rle.is_canonical()) throw ProtocolError("RLE is not in canonical form");
  try {
    return rle_decode(rle);
  } catch (const InvalidInput& e) {
    throw ProtocolError(e.what());
  }
}

namespace {

json base_request(const char* type, const Scene& scene) {
  return {{"type", type}, {"image", scene.image_path}, {"size", {scene.height, scene.width}}};
}

const json& require_field(const json& reply, const char* key, const char* expected_type) {
  if (reply.value("type", std::string{}) != expected_type) {
    throw ProtocolError(std::string("expected a '") + expected_type + "' response");
  }
  auto it = reply.find(key);
  if (it == reply.end()) throw ProtocolError(std::string("response lacks '") + key + "'");
  return *it;
}

}  // namespace

Candidate WorkerGenerator::generate(const Scene& scene, const BitMask& roi, Point point, Rng&) {
  json req = base_request("generate", scene);
  req["roi_rle"] = rle_encode(roi).runs;
  req["point"] = {point.x, point.y};
  const json reply = worker_->call(std::move(req));
  Candidate c;
  c.point = point;
  c.source = "worker";
  c.mask = decode_worker_mask(require_field(reply, "rle", "mask"), scene.height, scene.width);
  c.mask &= roi;
  return c;
}

double WorkerEvaluator::score(const Scene& scene, const BitMask& mask, const BitMask* object, Rng&) {
  json req = base_request("score", scene);
  req["mask_rle"] = rle_encode(mask).runs;
  req["object_rle"] = object ? json(rle_encode(*object).runs) : json(nullptr);
  const json reply = worker_->call(std::move(req));
  const json& value = require_field(reply, "value", "score");
  if (!value.is_number()) throw ProtocolError("score value is not a number");
  const double v = value.get<double>();
  if (!std::isfinite(v) || v < 0.0 || v > 1.0) {
    throw ProtocolError("score value " + value.dump() + " outside [0,1]");
  }
  return v;
}

BitMask WorkerRefiner::refine(const Scene& scene, const BitMask& mask) {
  json req = base_request("refine", scene);
  req["mask_rle"] = rle_encode(mask).runs;
  const json reply = worker_->call(std::move(req));
  return decode_worker_mask(require_field(reply, "rle", "mask"), scene.height, scene.width);
}

int WorkerClassifier::classify(const Scene& scene, const BitMask& mask, Rng&) {
  json req = base_request("classify", scene);
  req["mask_rle"] = rle_encode(mask).runs;
  const json reply = worker_->call(std::move(req));
  const json& cat = require_field(reply, "category", "class");
  if (!cat.is_number_integer()) throw ProtocolError("category is not an integer");
  return cat.get<int>();
}

}  // namespace ges
