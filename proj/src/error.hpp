#pragma once

#include <stdexcept>
#include <string>

namespace clusdiff {

// Error taxonomy shared by the whole library. The C API and the CLI map
// these onto status/exit codes, so every throw site picks the kind that
// describes what went wrong, not where.
enum class ErrorKind {
  Shape,         // tensor extents disagree
  Config,        // invalid configuration value
  Data,          // dataset empty / inconsistent
  Vocabulary,    // unknown label or class
  Numeric,       // NaN/Inf or numerically impossible state
  State,         // missing optimizer/handle state
  Range,         // index out of range
  Io,            // filesystem or format failure
  MissingInput,  // upstream artifact not found
};

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& msg)
      : std::runtime_error(msg), kind_(kind) {}
  ErrorKind kind() const { return kind_; }

 private:
  ErrorKind kind_;
};

[[noreturn]] inline void fail(ErrorKind kind, const std::string& msg) {
  throw Error(kind, msg);
}

inline const char* error_kind_name(ErrorKind k) {
  switch (k) {
    case ErrorKind::Shape: return "shape";
    case ErrorKind::Config: return "config";
    case ErrorKind::Data: return "data";
    case ErrorKind::Vocabulary: return "vocabulary";
    case ErrorKind::Numeric: return "numeric";
    case ErrorKind::State: return "state";
    case ErrorKind::Range: return "range";
    case ErrorKind::Io: return "io";
    case ErrorKind::MissingInput: return "missing-input";
  }
  return "unknown";
}

}  // namespace clusdiff
