#pragma once

#include <stdexcept>
#include <string>

namespace bayesdens {

/// Base class for every error raised by the library. `name()` is a stable,
/// machine-readable identifier that the CLI prints on failure.
class Error : public std::runtime_error {
 public:
  Error(std::string name, const std::string& what)
      : std::runtime_error(what), name_(std::move(name)) {}

  const std::string& name() const noexcept { return name_; }

 private:
  std::string name_;
};

#define BAYESDENS_DEFINE_ERROR(Type)                                  \
  class Type : public Error {                                         \
   public:                                                            \
    explicit Type(const std::string& what) : Error(#Type, what) {}    \
  }

BAYESDENS_DEFINE_ERROR(DomainError);
BAYESDENS_DEFINE_ERROR(DegeneratePosterior);
BAYESDENS_DEFINE_ERROR(OutOfSupport);
BAYESDENS_DEFINE_ERROR(BoundaryError);
BAYESDENS_DEFINE_ERROR(SingularStartDensity);
BAYESDENS_DEFINE_ERROR(BoundaryMode);
BAYESDENS_DEFINE_ERROR(BoundaryMle);
BAYESDENS_DEFINE_ERROR(NonConvergence);
BAYESDENS_DEFINE_ERROR(UnreliablePosterior);
BAYESDENS_DEFINE_ERROR(NoLocalData);
BAYESDENS_DEFINE_ERROR(NonInvertibleTransform);
BAYESDENS_DEFINE_ERROR(SingularSystem);
BAYESDENS_DEFINE_ERROR(ParseError);

#undef BAYESDENS_DEFINE_ERROR

/// Adaptive quadrature gave up before reaching the requested tolerance.
class QuadratureError : public Error {
 public:
  QuadratureError(const std::string& what, double estimate, double error_bound)
      : Error("QuadratureError", what), estimate_(estimate), error_bound_(error_bound) {}

  double estimate() const noexcept { return estimate_; }
  double error_bound() const noexcept { return error_bound_; }

 private:
  double estimate_;
  double error_bound_;
};

}  // namespace bayesdens
