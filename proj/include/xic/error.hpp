#pragma once

#include <stdexcept>
#include <string>

namespace xic {

enum class ErrorKind {
  InvalidInput,
  InvalidConfig,
  InvalidState,
  Format,
  Io,
  TrainingDiverged,
  DegenerateBatch,
};

const char* to_string(ErrorKind kind);

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

inline void require(bool cond, ErrorKind kind, const std::string& what) {
  if (!cond) fail(kind, what);
}

}  // namespace xic
