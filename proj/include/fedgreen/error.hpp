#pragma once

#include <stdexcept>
#include <string>

namespace fedgreen {

// Error categories. The CLI maps each to a process exit code.
enum class ErrorKind {
  invalid_shape,
  invalid_input,
  incompatible_submodel,
  invalid_update,
  numerical_failure,
  format,
  fit_failure,
  io,
};

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string &what)
      : std::runtime_error(what), kind_(kind) {}

  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

// 0 ok, 1 validation, 2 numerical failure, 3 I/O.
inline int exit_code_for(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::numerical_failure:
      return 2;
    case ErrorKind::io:
      return 3;
    default:
      return 1;
  }
}

[[noreturn]] inline void fail(ErrorKind kind, const std::string &what) {
  throw Error(kind, what);
}

}  // namespace fedgreen
