#pragma once

#include <stdexcept>
#include <string>

namespace prism {

/// Base class for all prism errors.
class Error : public std::runtime_error {
public:
  explicit Error(const std::string& what) : std::runtime_error(what) {}
};

/// Shapes of two objects that must agree do not.
class DimensionMismatch : public Error {
public:
  using Error::Error;
};

/// An iterative solver hit its iteration cap before reaching tolerance.
class NonConvergence : public Error {
public:
  NonConvergence(const std::string& what, double residual)
      : Error(what), residual_(residual) {}
  double residual() const { return residual_; }

private:
  double residual_;
};

/// A state/action index is outside the declared bounds.
class BoundsError : public Error {
public:
  using Error::Error;
};

/// Text input could not be parsed; carries a 1-based line number when known.
class ParseError : public Error {
public:
  ParseError(const std::string& what, long line = -1)
      : Error(line >= 0 ? what + " (line " + std::to_string(line) + ")" : what),
        line_(line) {}
  long line() const { return line_; }

private:
  long line_;
};

/// NaN or Inf appeared during a numeric computation; carries the step index.
class NumericalFault : public Error {
public:
  NumericalFault(const std::string& what, long step = -1)
      : Error(step >= 0 ? what + " (step " + std::to_string(step) + ")" : what),
        step_(step) {}
  long step() const { return step_; }

private:
  long step_;
};

class InvalidConfig : public Error {
public:
  using Error::Error;
};

/// Brute-force verification was asked for an instance with K^n too large.
class InstanceTooLarge : public Error {
public:
  using Error::Error;
};

class TooFewPoints : public Error {
public:
  using Error::Error;
};

class IoError : public Error {
public:
  using Error::Error;
};

}  // namespace prism
