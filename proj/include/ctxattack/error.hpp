#pragma once

#include <stdexcept>
#include <string>

namespace ctxattack {

enum class ErrorKind {
  Usage,      // bad arguments or configuration
  Data,       // malformed or inconsistent input data
  Integrity,  // corpus/graph invariants violated
  Version,    // serialized artifact has an unsupported version
  Checksum,   // serialized artifact is corrupt or truncated
  Budget,     // query or helper budget exhausted, infeasible request
};

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& what)
      : std::runtime_error(what), kind_(kind) {}

  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

/// Process exit code for an error kind: 1 usage, 2 data, 3 budget/infeasible.
inline int exit_code(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::Usage:
      return 1;
    case ErrorKind::Budget:
      return 3;
    default:
      return 2;
  }
}

}  // namespace ctxattack
