#pragma once

#include <cmath>
#include <numbers>

#include <boost/math/special_functions/erf.hpp>

#include "bayesdens/errors.hpp"

namespace bayesdens {

inline constexpr double kInvSqrt2Pi = 0.398942280401432677939946059934;  // phi(0)
inline constexpr double kLogSqrt2Pi = 0.918938533204672741780329736406;

/// Standard normal density.
inline double phi(double z) noexcept { return kInvSqrt2Pi * std::exp(-0.5 * z * z); }

inline double log_phi(double z) noexcept { return -0.5 * z * z - kLogSqrt2Pi; }

/// Standard normal cdf.
inline double Phi(double z) noexcept { return 0.5 * std::erfc(-z / std::numbers::sqrt2); }

/// Inverse of Phi on (0,1).
inline double Phi_inverse(double p) {
  if (!(p > 0.0 && p < 1.0)) throw DomainError("Phi_inverse: p must lie in (0,1)");
  return -std::numbers::sqrt2 * boost::math::erfc_inv(2.0 * p);
}

/// N(mean, sd^2) density at x.
inline double normal_pdf(double x, double mean, double sd) noexcept { return phi((x - mean) / sd) / sd; }

inline double normal_log_pdf(double x, double mean, double sd) noexcept {
  return log_phi((x - mean) / sd) - std::log(sd);
}

}  // namespace bayesdens
