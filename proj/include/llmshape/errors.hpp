#pragma once

#include <stdexcept>
#include <string>

namespace llmshape {

/// Base for every error raised by the library. `exit_code()` is the process
/// exit status the CLI reports for this category.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
  virtual int exit_code() const noexcept { return 1; }
};

class ConfigError : public Error {
 public:
  using Error::Error;
  int exit_code() const noexcept override { return 2; }
};

class NumericFault : public Error {
 public:
  using Error::Error;
  int exit_code() const noexcept override { return 3; }
};

class ProtocolError : public Error {
 public:
  using Error::Error;
  int exit_code() const noexcept override { return 4; }
};

/// Caller broke an operation's precondition (e.g. stepping a terminal state).
class ContractViolation : public Error {
 public:
  using Error::Error;
};

class MalformedPrompt : public Error {
 public:
  using Error::Error;
};

/// Checkpoint file is truncated or fails its checksums.
class IntegrityError : public Error {
 public:
  using Error::Error;
};

/// Checkpoint does not match the network/observation schema it is loaded into.
class SchemaError : public Error {
 public:
  using Error::Error;
};

class IoError : public Error {
 public:
  using Error::Error;
};

}  // namespace llmshape
