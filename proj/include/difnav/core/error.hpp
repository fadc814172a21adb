#pragma once

#include <stdexcept>
#include <string>

namespace difnav {

/// Base of every error raised by the library. The CLI maps subclasses to exit codes.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class DimensionError : public Error {
 public:
  using Error::Error;
};

class ParameterError : public Error {
 public:
  using Error::Error;
};

class ContractError : public Error {
 public:
  using Error::Error;
};

class DegenerateMaskError : public Error {
 public:
  using Error::Error;
};

class NonFiniteError : public Error {
 public:
  using Error::Error;
};

class VocabularyError : public Error {
 public:
  using Error::Error;
};

class InvalidEndpointError : public Error {
 public:
  using Error::Error;
};

class EpisodeGenerationError : public Error {
 public:
  using Error::Error;
};

/// Malformed file or config contents.
class FormatError : public Error {
 public:
  using Error::Error;
};

/// Unknown key or unparsable value in a run config.
class ConfigError : public Error {
 public:
  using Error::Error;
};

class MissingInputError : public Error {
 public:
  using Error::Error;
};

/// Checkpoint written by an incompatible version or architecture.
class VersionError : public Error {
 public:
  using Error::Error;
};

}  // namespace difnav
