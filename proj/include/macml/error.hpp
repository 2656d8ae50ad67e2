#pragma once

#include <stdexcept>
#include <string>

namespace macml {

enum class ErrorKind {
  InvalidArgument,    // malformed input, violated precondition
  DimensionTooLarge,  // K beyond what an exact/enumerating routine supports
  SingularMatrix,     // Q or a covariance block could not be factored
  NonPositiveVariance,
  DegenerateMass,     // truncation region with (numerically) zero probability
  NonPositiveProbability,
  Io,
};

const char* to_string(ErrorKind kind) noexcept;

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& what)
      : std::runtime_error(what), kind_(kind) {}

  ErrorKind kind() const noexcept { return kind_; }

  // Numerical failures are recoverable inside an optimizer (the trial point is
  // rejected); argument errors are not.
  bool numerical() const noexcept {
    return kind_ == ErrorKind::SingularMatrix || kind_ == ErrorKind::NonPositiveVariance ||
           kind_ == ErrorKind::DegenerateMass || kind_ == ErrorKind::NonPositiveProbability;
  }

 private:
  ErrorKind kind_;
};

[[noreturn]] inline void fail(ErrorKind kind, const std::string& what) { throw Error(kind, what); }

inline void require(bool cond, const std::string& what) {
  if (!cond) fail(ErrorKind::InvalidArgument, what);
}

}  // namespace macml
