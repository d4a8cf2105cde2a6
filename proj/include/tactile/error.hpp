#pragma once

#include <stdexcept>
#include <string>

namespace tactile {

enum class ErrorKind {
  invalid_order,
  invalid_count,
  domain,
  config,
  alignment,
  resolution,
  parse,
  io,
};

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& what) : std::runtime_error(what), kind_(kind) {}

  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

inline const char* to_string(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::invalid_order: return "invalid-order";
    case ErrorKind::invalid_count: return "invalid-count";
    case ErrorKind::domain: return "domain";
    case ErrorKind::config: return "config";
    case ErrorKind::alignment: return "alignment";
    case ErrorKind::resolution: return "resolution";
    case ErrorKind::parse: return "parse";
    case ErrorKind::io: return "io";
  }
  return "unknown";
}

}  // namespace tactile
