#include "medshap/bridge.hpp"

#include <json.hpp>

#include <cerrno>
#include <cmath>
#include <csignal>
#include <cstring>
#include <fcntl.h>
#include <poll.h>
#include <sys/wait.h>
#include <unistd.h>

namespace medshap {

using nlohmann::json;

namespace {

void close_fd(int& fd) noexcept {
  if (fd >= 0) ::close(fd);
  fd = -1;
}

std::string errno_text(int err) { return std::strerror(err); }

}  // namespace

ExternalModel ExternalModel::connect(const std::vector<std::string>& command, int timeout_ms) {
  if (command.empty()) throw SpawnError("bridge: empty command");
  if (timeout_ms <= 0) throw PreconditionError("bridge: timeout must be positive");
  // Writes to a dead child must surface as EPIPE, not kill this process.
  std::signal(SIGPIPE, SIG_IGN);

  int in_pipe[2], out_pipe[2], status_pipe[2];
  if (::pipe2(in_pipe, O_CLOEXEC) != 0) throw SpawnError("bridge: pipe: " + errno_text(errno));
  if (::pipe2(out_pipe, O_CLOEXEC) != 0) {
    ::close(in_pipe[0]);
    ::close(in_pipe[1]);
    throw SpawnError("bridge: pipe: " + errno_text(errno));
  }
  if (::pipe2(status_pipe, O_CLOEXEC) != 0) {
    for (int fd : {in_pipe[0], in_pipe[1], out_pipe[0], out_pipe[1]}) ::close(fd);
    throw SpawnError("bridge: pipe: " + errno_text(errno));
  }

  std::vector<char*> argv;
  for (const auto& arg : command) argv.push_back(const_cast<char*>(arg.c_str()));
  argv.push_back(nullptr);

  const pid_t pid = ::fork();
  if (pid < 0) {
    for (int fd : {in_pipe[0], in_pipe[1], out_pipe[0], out_pipe[1], status_pipe[0], status_pipe[1]})
      ::close(fd);
    throw SpawnError("bridge: fork: " + errno_text(errno));
  }
  if (pid == 0) {
    ::dup2(in_pipe[0], STDIN_FILENO);
    ::dup2(out_pipe[1], STDOUT_FILENO);
    ::execvp(argv[0], argv.data());
    const int err = errno;
    [[maybe_unused]] auto n = ::write(status_pipe[1], &err, sizeof err);
    ::_exit(127);
  }

  ExternalModel model;
  model.pid_ = pid;
  model.timeout_ms_ = timeout_ms;
  model.to_child_ = in_pipe[1];
  model.from_child_ = out_pipe[0];
  ::close(in_pipe[0]);
  ::close(out_pipe[1]);
  ::close(status_pipe[1]);

  int exec_errno = 0;
  ssize_t got;
  do {
    got = ::read(status_pipe[0], &exec_errno, sizeof exec_errno);
  } while (got < 0 && errno == EINTR);
  ::close(status_pipe[0]);
  if (got > 0) {
    model.terminate();
    throw SpawnError("bridge: cannot execute '" + command.front() + "': " + errno_text(exec_errno));
  }

  model.send_line(R"({"op":"info"})");
  const std::string line = model.read_line();
  json info;
  try {
    info = json::parse(line);
  } catch (const json::parse_error&) {
    model.terminate();
    throw ProtocolError("bridge: handshake response is not valid JSON", line);
  }
  if (info.is_object() && info.contains("error")) {
    model.terminate();
    throw RemoteError("bridge: handshake refused: " + info["error"].dump());
  }
  if (!info.is_object() || !info.contains("n_features") || !info["n_features"].is_number_integer() ||
      info["n_features"].get<long long>() < 1) {
    model.terminate();
    throw ProtocolError("bridge: handshake lacks a positive integer \"n_features\"", line);
  }
  model.n_features_ = info["n_features"].get<int>();
  if (info.contains("name") && info["name"].is_string()) model.name_ = info["name"].get<std::string>();
  if (info.contains("features") && info["features"].is_array()) {
    for (const auto& f : info["features"])
      if (f.is_string()) model.feature_names_.push_back(f.get<std::string>());
  }
  return model;
}

ExternalModel::ExternalModel(ExternalModel&& other) noexcept { *this = std::move(other); }

ExternalModel& ExternalModel::operator=(ExternalModel&& other) noexcept {
  if (this != &other) {
    terminate();
    pid_ = std::exchange(other.pid_, -1);
    to_child_ = std::exchange(other.to_child_, -1);
    from_child_ = std::exchange(other.from_child_, -1);
    timeout_ms_ = other.timeout_ms_;
    n_features_ = other.n_features_;
    name_ = std::move(other.name_);
    feature_names_ = std::move(other.feature_names_);
    buffer_ = std::move(other.buffer_);
    requests_sent_ = other.requests_sent_;
  }
  return *this;
}

ExternalModel::~ExternalModel() { terminate(); }

void ExternalModel::terminate() const noexcept {
  close_fd(to_child_);
  close_fd(from_child_);
  if (pid_ <= 0) return;
  // Closed stdin asks a well-behaved server to exit; give it a moment.
  for (int i = 0; i < 20; ++i) {
    if (::waitpid(pid_, nullptr, WNOHANG) == pid_) {
      pid_ = -1;
      return;
    }
    ::usleep(5000);
  }
  ::kill(pid_, SIGKILL);
  ::waitpid(pid_, nullptr, 0);
  pid_ = -1;
}

void ExternalModel::send_line(const std::string& line) const {
  if (to_child_ < 0) throw BrokenPipeError("bridge: model server is not running");
  const std::string framed = line + "\n";
  std::size_t written = 0;
  while (written < framed.size()) {
    const ssize_t n = ::write(to_child_, framed.data() + written, framed.size() - written);
    if (n < 0) {
      if (errno == EINTR) continue;
      if (errno == EPIPE) throw BrokenPipeError("bridge: model server closed its input");
      throw BridgeError("bridge: write failed: " + errno_text(errno));
    }
    written += static_cast<std::size_t>(n);
  }
  ++requests_sent_;
}

std::string ExternalModel::read_line() const {
  if (from_child_ < 0) throw BrokenPipeError("bridge: model server is not running");
  const auto deadline = std::chrono::steady_clock::now() + std::chrono::milliseconds(timeout_ms_);
  while (true) {
    const auto newline = buffer_.find('\n');
    if (newline != std::string::npos) {
      std::string line = buffer_.substr(0, newline);
      buffer_.erase(0, newline + 1);
      return line;
    }
    const auto remaining = std::chrono::duration_cast<std::chrono::milliseconds>(
                               deadline - std::chrono::steady_clock::now())
                               .count();
    pollfd pfd{from_child_, POLLIN, 0};
    const int ready = remaining > 0 ? ::poll(&pfd, 1, static_cast<int>(remaining)) : 0;
    if (ready < 0) {
      if (errno == EINTR) continue;
      throw BridgeError("bridge: poll failed: " + errno_text(errno));
    }
    if (ready == 0) {
      terminate();
      throw TimeoutError("bridge: no response within " + std::to_string(timeout_ms_) +
                         " ms; model server terminated");
    }
    char chunk[4096];
    const ssize_t n = ::read(from_child_, chunk, sizeof chunk);
    if (n < 0) {
      if (errno == EINTR) continue;
      throw BridgeError("bridge: read failed: " + errno_text(errno));
    }
    if (n == 0) throw BrokenPipeError("bridge: model server closed its output");
    buffer_.append(chunk, static_cast<std::size_t>(n));
  }
}

Vector ExternalModel::predict(const Matrix& batch) const {
  if (batch.cols() != n_features_) {
    throw PreconditionError("bridge: model '" + name_ + "' expects " +
                            std::to_string(n_features_) + " features, batch has " +
                            std::to_string(batch.cols()));
  }
  if (batch.rows() == 0) return Vector(0);
  if (!batch.array().isFinite().all()) {
    throw PreconditionError("bridge: JSON cannot carry non-finite inputs");
  }

  json rows = json::array();
  for (Index i = 0; i < batch.rows(); ++i) {
    json row = json::array();
    for (Index j = 0; j < batch.cols(); ++j) row.push_back(batch(i, j));
    rows.push_back(std::move(row));
  }
  send_line(json{{"op", "predict"}, {"x", std::move(rows)}}.dump());

  const std::string line = read_line();
  json response;
  try {
    response = json::parse(line);
  } catch (const json::parse_error&) {
    // Servers built on lenient encoders emit bare NaN / Infinity tokens.
    if (line.find("NaN") != std::string::npos || line.find("Infinity") != std::string::npos) {
      throw NonFiniteOutputError("bridge: non-finite prediction in response: " + line);
    }
    throw ProtocolError("bridge: predict response is not valid JSON", line);
  }
  if (response.is_object() && response.contains("error")) {
    throw RemoteError("bridge: model server error: " + response["error"].dump());
  }
  if (!response.is_object() || !response.contains("y") || !response["y"].is_array()) {
    throw ProtocolError("bridge: predict response lacks a \"y\" array", line);
  }
  const json& y = response["y"];
  if (static_cast<Index>(y.size()) != batch.rows()) {
    throw LengthMismatchError("bridge: sent " + std::to_string(batch.rows()) + " rows, received " +
                              std::to_string(y.size()) + " predictions");
  }
  Vector out(batch.rows());
  for (std::size_t i = 0; i < y.size(); ++i) {
    if (y[i].is_null()) throw NonFiniteOutputError("bridge: null prediction at position " + std::to_string(i));
    if (!y[i].is_number()) throw ProtocolError("bridge: prediction is not a number", line);
    const double v = y[i].get<double>();
    if (!std::isfinite(v)) {
      throw NonFiniteOutputError("bridge: non-finite prediction at position " + std::to_string(i));
    }
    out(static_cast<Index>(i)) = v;
  }
  return out;
}

Vector predict_batch(const ExternalModel& handle, const Matrix& batch) {
  return handle.predict(batch);
}

}  // namespace medshap
