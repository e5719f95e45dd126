#pragma once

#include <stdexcept>
#include <string>

namespace gtb {

/// Error categories. Each maps onto one CLI exit code.
enum class ErrorKind {
  domain,   // bad input data, failed precondition, calibration failure (exit 1)
  usage,    // malformed invocation (exit 2)
  device,   // control plane or telemetry tool failure (exit 3)
};

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& what) : std::runtime_error(what), kind_(kind) {}
  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

struct DomainError : Error {
  explicit DomainError(const std::string& what) : Error(ErrorKind::domain, what) {}
};

struct UsageError : Error {
  explicit UsageError(const std::string& what) : Error(ErrorKind::usage, what) {}
};

struct DeviceError : Error {
  explicit DeviceError(const std::string& what) : Error(ErrorKind::device, what) {}
};

inline int exit_code_for(ErrorKind kind) noexcept {
  switch (kind) {
    case ErrorKind::domain: return 1;
    case ErrorKind::usage: return 2;
    case ErrorKind::device: return 3;
  }
  return 1;
}

}  // namespace gtb
