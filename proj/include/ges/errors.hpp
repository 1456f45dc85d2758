#pragma once

#include <stdexcept>
#include <string>

namespace ges {

/// Base for every error the engine raises on purpose. `kind()` is the
/// stable machine-readable tag used in CLI error payloads.
class Error : public std::runtime_error {
 public:
  Error(std::string kind, const std::string& message)
      : std::runtime_error(message), kind_(std::move(kind)) {}

  const std::string& kind() const noexcept { return kind_; }

 private:
  std::string kind_;
};

/// Caller passed something outside an operation's precondition.
class InvalidInput : public Error {
 public:
  explicit InvalidInput(const std::string& message) : Error("invalid_input", message) {}
};

class MalformedAnnotation : public Error {
 public:
  explicit MalformedAnnotation(const std::string& message)
      : Error("malformed_annotation", message) {}
};

class IoError : public Error {
 public:
  explicit IoError(const std::string& message) : Error("io_error", message) {}
};

class GenerationError : public Error {
 public:
  explicit GenerationError(const std::string& message) : Error("generation_error", message) {}
};

/// Internal consistency check failed; indicates a bug, not bad input.
class InvariantViolation : public Error {
 public:
  explicit InvariantViolation(const std::string& message)
      : Error("invariant_violation", message) {}
};

/// A candidate source could not produce a usable answer. The pipeline's
/// failure policy decides whether this skips a candidate or aborts.
class SourceFailure : public Error {
 public:
  using Error::Error;
};

/// Worker process exited, timed out, or its pipes broke.
class EndpointFailure : public SourceFailure {
 public:
  explicit EndpointFailure(const std::string& message)
      : SourceFailure("endpoint_failure", message) {}
};

/// Worker answered with something that does not satisfy the wire protocol.
class ProtocolError : public SourceFailure {
 public:
  explicit ProtocolError(const std::string& message)
      : SourceFailure("protocol_error", message) {}
};

}  // namespace ges
