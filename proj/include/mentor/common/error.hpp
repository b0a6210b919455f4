#pragma once

#include <stdexcept>
#include <string>

namespace mentor {

enum class ErrorKind {
  config,
  length,
  contract,
  checkpoint,
  parse,
  lookup,
  transport,
  merge,
  numeric,
  resume,
  training,
};

// Root of every error the library throws. The kind drives CLI exit codes.
class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& what)
      : std::runtime_error(what), kind_(kind) {}
  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

#define MENTOR_DEFINE_ERROR(Name, Kind)                               \
  class Name : public Error {                                         \
   public:                                                            \
    explicit Name(const std::string& what) : Error(ErrorKind::Kind, what) {} \
  };

MENTOR_DEFINE_ERROR(ConfigError, config)
MENTOR_DEFINE_ERROR(LengthError, length)
MENTOR_DEFINE_ERROR(ContractError, contract)
MENTOR_DEFINE_ERROR(CheckpointError, checkpoint)
MENTOR_DEFINE_ERROR(ParseError, parse)
MENTOR_DEFINE_ERROR(LookupError, lookup)
MENTOR_DEFINE_ERROR(MergeError, merge)
MENTOR_DEFINE_ERROR(NumericError, numeric)
MENTOR_DEFINE_ERROR(ResumeError, resume)
MENTOR_DEFINE_ERROR(TrainingError, training)

#undef MENTOR_DEFINE_ERROR

// HTTP status is 0 for connection-level failures (refused, timeout).
class TransportError : public Error {
 public:
  TransportError(const std::string& what, int status = 0, bool malformed = false)
      : Error(ErrorKind::transport, what), status_(status), malformed_(malformed) {}
  int status() const noexcept { return status_; }
  bool malformed() const noexcept { return malformed_; }
  bool retryable() const noexcept {
    return !malformed_ && (status_ == 0 || status_ == 429 || status_ >= 500);
  }

 private:
  int status_;
  bool malformed_;
};

// 0 success, 2 config, 3 data, 4 teacher transport, 5 internal invariant.
inline int exit_code(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::config:
      return 2;
    case ErrorKind::parse:
    case ErrorKind::lookup:
    case ErrorKind::merge:
    case ErrorKind::checkpoint:
    case ErrorKind::resume:
      return 3;
    case ErrorKind::transport:
      return 4;
    default:
      return 5;
  }
}

}  // namespace mentor
