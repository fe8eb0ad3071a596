#pragma once

#include <stdexcept>
#include <string>

namespace epihmc {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// A precondition on user-supplied configuration or arguments was violated.
class InvalidArgument : public Error {
 public:
  using Error::Error;
};

/// Malformed or inconsistent input data (CSV rows, counts, dates).
class DataError : public Error {
 public:
  using Error::Error;
};

/// The ODE solver could not advance: step-size underflow, non-finite state
/// or an overflowing transmission rate. Carries the time of failure.
class IntegrationFailure : public Error {
 public:
  IntegrationFailure(double time, const std::string& what)
      : Error("integration failed at t=" + std::to_string(time) + ": " + what),
        time_(time) {}

  double time() const noexcept { return time_; }

 private:
  double time_;
};

}  // namespace epihmc
