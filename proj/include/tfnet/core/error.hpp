#pragma once

#include <stdexcept>
#include <string>

namespace tfnet {

/// Broad failure classes. The CLI maps these onto process exit codes.
enum class ErrorKind {
  kUsage,      // bad invocation
  kConfig,     // invalid configuration value
  kShape,      // tensor / sequence shape mismatch
  kFormat,     // malformed file or packet
  kState,      // stream state does not belong to this model
  kNumerical,  // NaN/Inf or non-convergence
};

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& message)
      : std::runtime_error(message), kind_(kind) {}

  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

[[noreturn]] inline void fail(ErrorKind kind, const std::string& message) {
  throw Error(kind, message);
}

inline void require(bool condition, ErrorKind kind, const std::string& message) {
  if (!condition) throw Error(kind, message);
}

}  // namespace tfnet
