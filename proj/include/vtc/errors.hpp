#pragma once

#include <stdexcept>
#include <string>

namespace vtc {

/// Base for every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Shapes or dimensions disagree.
class DimensionError : public Error {
 public:
  using Error::Error;
};

/// A scalar or count argument is outside its allowed range.
class ParameterError : public Error {
 public:
  using Error::Error;
};

/// Inputs violate a documented contract (e.g. non-unit embeddings).
class ContractError : public Error {
 public:
  using Error::Error;
};

/// Input is degenerate for the requested operation (e.g. zero vector).
class DegenerateInputError : public Error {
 public:
  using Error::Error;
};

/// A serialized sequence would exceed the model's context window.
class LengthError : public Error {
 public:
  using Error::Error;
};

/// Model or run configuration is invalid or mismatched.
class ConfigError : public Error {
 public:
  using Error::Error;
};

/// An object is used in a state that does not support the request.
class StateError : public Error {
 public:
  using Error::Error;
};

/// Sampling cannot produce the requested number of items.
class SamplingError : public Error {
 public:
  using Error::Error;
};

/// Evaluation inputs are inconsistent (e.g. query missing from qrels).
class EvaluationError : public Error {
 public:
  using Error::Error;
};

/// A file could not be parsed; message carries the location.
class FormatError : public Error {
 public:
  using Error::Error;
};

/// Training aborted (divergence, NaN gradients, stage ordering).
class TrainingError : public Error {
 public:
  using Error::Error;
};

/// A stored file carries a schema version this build cannot read.
class MigrationError : public FormatError {
 public:
  using FormatError::FormatError;
};

/// Too many judge failures while curating.
class CurationError : public Error {
 public:
  using Error::Error;
};

}  // namespace vtc
