#pragma once

#include <stdexcept>
#include <string>

namespace lclab {

// Root of every error the library throws. The CLI maps subclasses onto exit codes.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Operand shapes disagree (matmul inner dims, norm vector length, ...).
class DimensionError : public Error {
 public:
  using Error::Error;
};

// Invalid configuration or spec (bad ratio, odd head dim, missing calibration).
class ConfigError : public Error {
 public:
  using Error::Error;
};

// Token sequence longer than the model's max_context.
class ContextLengthError : public Error {
 public:
  using Error::Error;
};

// Checkpoint contents disagree with its ModelConfig.
class CheckpointError : public Error {
 public:
  using Error::Error;
};

enum class ParseErrorKind {
  kBadMagic,
  kVersionMismatch,
  kTruncated,
  kBounds,
  kHeader,
  kShape,
  kNonFinite,
};

const char* to_string(ParseErrorKind kind);

// Malformed checkpoint file.
class ParseError : public Error {
 public:
  ParseError(ParseErrorKind kind, const std::string& what)
      : Error(std::string(to_string(kind)) + ": " + what), kind_(kind) {}
  ParseErrorKind kind() const noexcept { return kind_; }

 private:
  ParseErrorKind kind_;
};

// Token file with out-of-vocabulary ids or garbage.
class IngestionError : public Error {
 public:
  using Error::Error;
};

// Numeric input outside the accepted domain (e.g. a non-normalized distribution).
class InputError : public Error {
 public:
  using Error::Error;
};

// Every sample was skipped at some context length.
class EmptyEvaluationError : public Error {
 public:
  using Error::Error;
};

class IoError : public Error {
 public:
  using Error::Error;
};

}  // namespace lclab
