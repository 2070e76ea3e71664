#pragma once

#include <stdexcept>
#include <string>

namespace judgeirt {

// Base for every error raised by the library. The CLI maps the concrete
// subclasses onto its exit codes.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Bad or inconsistent input data (malformed files, shape mismatches, ...).
class InputError : public Error {
 public:
  using Error::Error;
};

// A diagnostic gate refused to let the pipeline continue.
class GateError : public Error {
 public:
  using Error::Error;
};

// The sampler or the fit diagnostics failed.
class FitError : public Error {
 public:
  using Error::Error;
};

// The judge endpoint rejected the credentials.
class AuthError : public Error {
 public:
  using Error::Error;
};

}  // namespace judgeirt
