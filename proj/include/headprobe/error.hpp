#pragma once

#include <stdexcept>
#include <string>

namespace headprobe {

// Base of every error the library throws.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Bad user configuration: missing files, wrong sizes, malformed flags.
class ConfigError : public Error {
 public:
  using Error::Error;
};

// A file could not be parsed. The message names the file and line.
class ParseError : public ConfigError {
 public:
  using ConfigError::ConfigError;
};

// Argument outside the domain of an operation.
class DomainError : public Error {
 public:
  using Error::Error;
};

// Weight container is missing a tensor or a tensor has the wrong shape.
class LoadError : public Error {
 public:
  using Error::Error;
};

// Weights contain NaN or Inf.
class IntegrityError : public LoadError {
 public:
  using LoadError::LoadError;
};

// Stimulus file violates its schema or invariants.
class IngestionError : public Error {
 public:
  using Error::Error;
};

// An annotated span does not land on a token boundary.
class AlignmentError : public Error {
 public:
  using Error::Error;
};

// Degenerate input to a statistical routine.
class StatisticsError : public Error {
 public:
  using Error::Error;
};

}  // namespace headprobe
