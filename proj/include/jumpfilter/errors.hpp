#ifndef JUMPFILTER_ERRORS_HPP
#define JUMPFILTER_ERRORS_HPP

#include <stdexcept>
#include <string>

namespace jumpfilter {

struct Error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Bad arguments, malformed configs, violated preconditions.
struct InvalidArgument : Error {
  using Error::Error;
};

// A user-supplied model function threw; carries the evaluation site.
struct EvaluationError : Error {
  using Error::Error;
};

// Path generation failed (majorant violated, clock cap exceeded, ...).
struct SimulationError : Error {
  using Error::Error;
};

// Filter-side failures: weight underflow, zero-likelihood observations.
struct FilterError : Error {
  double time = 0.0;
  FilterError(const std::string& what, double t) : Error(what), time(t) {}
};

// The requested filter mode cannot represent the model (a precondition
// failure, not a runtime one).
struct UnsupportedMode : InvalidArgument {
  using InvalidArgument::InvalidArgument;
};

}  // namespace jumpfilter

#endif
