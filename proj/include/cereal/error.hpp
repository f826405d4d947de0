#pragma once

#include <stdexcept>
#include <string>

namespace cereal {

enum class ErrorKind {
  invalid_argument,
  format,
  io,
  not_found,
  conflict,
};

/// Every error raised by the library. The kind drives CLI exit codes and
/// HTTP status mapping in the service.
class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& what)
      : std::runtime_error(what), kind_(kind) {}

  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

[[noreturn]] inline void fail(ErrorKind kind, const std::string& what) {
  throw Error(kind, what);
}

inline void require(bool cond, const std::string& what) {
  if (!cond) throw Error(ErrorKind::invalid_argument, what);
}

}  // namespace cereal
