#pragma once

// External black-box models over newline-delimited JSON on a child
// process's stdin/stdout.
//
//   -> {"op":"info"}
//   <- {"name":"...","n_features":M}          (optional "features":[...])
//   -> {"op":"predict","x":[[...],...]}
//   <- {"y":[...]}
//   <- {"error":"..."}                         (either request)
//
// One request is outstanding at a time and responses are consumed in order.
// No retries: a failed request surfaces as an error.

#include "medshap/core.hpp"

#include <chrono>
#include <string>
#include <vector>

namespace medshap {

class BridgeError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class SpawnError : public BridgeError {
 public:
  using BridgeError::BridgeError;
};

class TimeoutError : public BridgeError {
 public:
  using BridgeError::BridgeError;
};

/// Response line is not valid JSON or lacks the expected fields.
class ProtocolError : public BridgeError {
 public:
  ProtocolError(const std::string& what, std::string line)
      : BridgeError(what + ": " + line), line_(std::move(line)) {}
  const std::string& line() const { return line_; }

 private:
  std::string line_;
};

/// Server answered {"error": ...}.
class RemoteError : public BridgeError {
 public:
  using BridgeError::BridgeError;
};

class LengthMismatchError : public BridgeError {
 public:
  using BridgeError::BridgeError;
};

class NonFiniteOutputError : public BridgeError {
 public:
  using BridgeError::BridgeError;
};

/// The child closed its end of a pipe (or exited) mid-conversation.
class BrokenPipeError : public BridgeError {
 public:
  using BridgeError::BridgeError;
};

/// Handle to one model server process. Not thread safe; use one handle per
/// worker. The child is terminated when the handle is destroyed.
class ExternalModel final : public PredictiveModel {
 public:
  static ExternalModel connect(const std::vector<std::string>& command, int timeout_ms);

  ExternalModel(ExternalModel&& other) noexcept;
  ExternalModel& operator=(ExternalModel&& other) noexcept;
  ExternalModel(const ExternalModel&) = delete;
  ExternalModel& operator=(const ExternalModel&) = delete;
  ~ExternalModel() override;

  Vector predict(const Matrix& batch) const override;
  int n_features() const override { return n_features_; }
  bool thread_safe() const override { return false; }

  const std::string& name() const { return name_; }
  // Feature names announced by the server, if any.
  const std::vector<std::string>& feature_names() const { return feature_names_; }
  bool running() const { return pid_ > 0; }
  // Number of request lines written so far.
  std::size_t requests_sent() const { return requests_sent_; }

 private:
  ExternalModel() = default;

  void send_line(const std::string& line) const;
  std::string read_line() const;
  void terminate() const noexcept;

  // Mutable so a timed-out read can tear the child down.
  mutable int pid_ = -1;
  mutable int to_child_ = -1;
  mutable int from_child_ = -1;
  int timeout_ms_ = 0;
  int n_features_ = 0;
  std::string name_;
  std::vector<std::string> feature_names_;
  mutable std::string buffer_;
  mutable std::size_t requests_sent_ = 0;
};

/// Free-function spelling of ExternalModel::predict.
Vector predict_batch(const ExternalModel& handle, const Matrix& batch);

}  // namespace medshap
