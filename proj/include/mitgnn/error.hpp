#pragma once

#include <stdexcept>
#include <string>

namespace mitgnn {

enum class ErrorKind {
  config,
  data,
  format,
  integrity,
  numeric,
  io,
  usage,
  shape,
  lookup,
};

inline const char* to_string(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::config: return "config";
    case ErrorKind::data: return "data";
    case ErrorKind::format: return "format";
    case ErrorKind::integrity: return "integrity";
    case ErrorKind::numeric: return "numeric";
    case ErrorKind::io: return "io";
    case ErrorKind::usage: return "usage";
    case ErrorKind::shape: return "shape";
    case ErrorKind::lookup: return "lookup";
  }
  return "unknown";
}

// All library failures are reported through this one exception type; the
// kind drives the CLI exit code.
class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& message)
      : std::runtime_error(std::string(to_string(kind)) + " error: " + message),
        kind_(kind) {}

  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

}  // namespace mitgnn
