#ifndef SEQATTACK_ERRORS_H_
#define SEQATTACK_ERRORS_H_

#include <cstddef>
#include <stdexcept>
#include <string>

namespace seqattack {

// Root of every error the library raises. Subclasses map onto the failure
// categories callers are expected to distinguish (CLI exit codes key off
// them).
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class ConfigError : public Error {
 public:
  using Error::Error;
};

class EncodingError : public Error {
 public:
  using Error::Error;
};

class LookupError : public Error {
 public:
  using Error::Error;
};

class MetricError : public Error {
 public:
  using Error::Error;
};

class PositionError : public Error {
 public:
  using Error::Error;
};

class ActionError : public Error {
 public:
  using Error::Error;
};

class TrainingError : public Error {
 public:
  using Error::Error;
};

class ProgramError : public Error {
 public:
  using Error::Error;
};

class PlanError : public Error {
 public:
  using Error::Error;
};

class InstrumentationError : public Error {
 public:
  using Error::Error;
};

class MissingArtifactError : public Error {
 public:
  using Error::Error;
};

// Parse failure in a line-oriented file. line() is 1-based; 0 means the
// failure is not tied to a particular line.
class ParseError : public Error {
 public:
  ParseError(const std::string& what, std::size_t line)
      : Error(line == 0 ? what : "line " + std::to_string(line) + ": " + what),
        line_(line) {}

  std::size_t line() const { return line_; }

 private:
  std::size_t line_;
};

}  // namespace seqattack

#endif  // SEQATTACK_ERRORS_H_
