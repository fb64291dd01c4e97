// Copyright 2026 maskse authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

#ifndef MASKSE_ERROR_H_
#define MASKSE_ERROR_H_

#include <stdexcept>
#include <string>

namespace maskse {

// Base of every error the library throws. kind() names the error class for
// CLI reporting.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
  virtual const char* kind() const noexcept { return "error"; }
};

class InvalidInput : public Error {
 public:
  using Error::Error;
  const char* kind() const noexcept override { return "invalid-input"; }
};

class ConfigError : public Error {
 public:
  using Error::Error;
  const char* kind() const noexcept override { return "configuration"; }
};

class ConflictError : public Error {
 public:
  using Error::Error;
  const char* kind() const noexcept override { return "conflict"; }
};

class NotFound : public Error {
 public:
  using Error::Error;
  const char* kind() const noexcept override { return "not-found"; }
};

class UndefinedMetric : public Error {
 public:
  using Error::Error;
  const char* kind() const noexcept override { return "undefined-metric"; }
};

class IoError : public Error {
 public:
  using Error::Error;
  const char* kind() const noexcept override { return "io"; }
};

}  // namespace maskse

#endif  // MASKSE_ERROR_H_
