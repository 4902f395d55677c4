#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <numbers>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "bayesdens/density.hpp"
#include "bayesdens/errors.hpp"
#include "bayesdens/normal.hpp"
#include "bayesdens/quadrature.hpp"
#include "bayesdens/sample.hpp"

namespace bayesdens {

enum class KernelId { uniform, gaussian, yepanechnikov };

/// Symmetric unit-mass kernel. The compact kernels live on [-1/2, 1/2].
class KernelSpec {
 public:
  static KernelSpec uniform() { return KernelSpec(KernelId::uniform); }
  static KernelSpec gaussian() { return KernelSpec(KernelId::gaussian); }
  static KernelSpec yepanechnikov() { return KernelSpec(KernelId::yepanechnikov); }

  static KernelSpec from_name(std::string_view name) {
    if (name == "uniform") return uniform();
    if (name == "gaussian" || name == "normal") return gaussian();
    if (name == "yepanechnikov" || name == "epanechnikov") return yepanechnikov();
    throw DomainError("unknown kernel '" + std::string(name) + "'");
  }

  KernelId id() const noexcept { return id_; }

  std::string name() const {
    switch (id_) {
      case KernelId::uniform: return "uniform";
      case KernelId::gaussian: return "gaussian";
      case KernelId::yepanechnikov: return "yepanechnikov";
    }
    return {};
  }

  double operator()(double z) const noexcept {
    switch (id_) {
      case KernelId::uniform: return std::abs(z) <= 0.5 ? 1.0 : 0.0;
      case KernelId::gaussian: return phi(z);
      case KernelId::yepanechnikov: return std::abs(z) <= 0.5 ? 1.5 * (1.0 - 4.0 * z * z) : 0.0;
    }
    return 0.0;
  }

  /// K_h(u) = K(u/h)/h.
  double scaled(double u, double h) const noexcept { return (*this)(u / h) / h; }

  /// Level-normalized kernel K(z)/K(0), equal to one at the origin.
  double normalized(double z) const noexcept { return (*this)(z) / k0(); }

  double k0() const noexcept {
    switch (id_) {
      case KernelId::uniform: return 1.0;
      case KernelId::gaussian: return kInvSqrt2Pi;
      case KernelId::yepanechnikov: return 1.5;
    }
    return 0.0;
  }

  /// sigma_K^2 = int z^2 K(z) dz.
  double variance() const noexcept {
    switch (id_) {
      case KernelId::uniform: return 1.0 / 12.0;
      case KernelId::gaussian: return 1.0;
      case KernelId::yepanechnikov: return 0.05;
    }
    return 0.0;
  }

  /// R(K) = int K(z)^2 dz.
  double roughness() const noexcept {
    switch (id_) {
      case KernelId::uniform: return 1.0;
      case KernelId::gaussian: return 0.5 / std::sqrt(std::numbers::pi);
      case KernelId::yepanechnikov: return 1.2;
    }
    return 0.0;
  }

  bool compact() const noexcept { return id_ != KernelId::gaussian; }

  /// Half-width of the support; infinite for the gaussian.
  double support_radius() const noexcept { return compact() ? 0.5 : std::numeric_limits<double>::infinity(); }

  /// Half-width beyond which the kernel is negligible for quadrature.
  double effective_radius() const noexcept { return compact() ? 0.5 : 10.0; }

  double cdf(double z) const noexcept {
    switch (id_) {
      case KernelId::uniform: return std::clamp(z + 0.5, 0.0, 1.0);
      case KernelId::gaussian: return Phi(z);
      case KernelId::yepanechnikov: {
        if (z <= -0.5) return 0.0;
        if (z >= 0.5) return 1.0;
        return 0.5 + 1.5 * z - 2.0 * z * z * z;
      }
    }
    return 0.0;
  }

  /// int_a^b K_h(t - x) dt.
  double window_mass(double x, double h, double a, double b) const noexcept {
    return cdf((b - x) / h) - cdf((a - x) / h);
  }

  /// int K_h(t - x) N(t; mean, sd^2) dt in closed form.
  double convolve_normal(double x, double h, double mean, double sd) const {
    if (id_ == KernelId::gaussian) return normal_pdf(x, mean, std::hypot(sd, h));
    // t = mean + sd*u, z = (t - x)/h = A + B*u, z in [-1/2, 1/2].
    const double A = (mean - x) / h;
    const double B = sd / h;
    const double u1 = (-0.5 - A) / B;
    const double u2 = (0.5 - A) / B;
    const double i0 = u1 > 0.0 ? Phi(-u1) - Phi(-u2) : Phi(u2) - Phi(u1);
    if (id_ == KernelId::uniform) return i0 / h;
    const double p1 = phi(u1), p2 = phi(u2);
    const double i1 = p1 - p2;
    const double i2 = i0 + u1 * p1 - u2 * p2;
    const double sq = A * A * i0 + 2.0 * A * B * i1 + B * B * i2;
    return std::max(0.0, 1.5 * (i0 - 4.0 * sq) / h);
  }

 private:
  explicit KernelSpec(KernelId id) : id_(id) {}
  KernelId id_;
};

namespace detail {

inline void check_bandwidth(double h) {
  if (!(h > 0.0) || !std::isfinite(h)) throw DomainError("bandwidth h must be positive and finite");
}

/// Calls fn(x_i) for the observations inside the kernel window around x.
template <class Fn>
void for_each_in_window(const Sample& sample, const KernelSpec& kernel, double h, double x, Fn&& fn) {
  const auto v = sample.values();
  if (!kernel.compact()) {
    for (double xi : v) fn(xi);
    return;
  }
  const double r = kernel.support_radius() * h;
  auto first = std::lower_bound(v.begin(), v.end(), x - r);
  auto last = std::upper_bound(v.begin(), v.end(), x + r);
  for (auto it = first; it != last; ++it) fn(*it);
}

}  // namespace detail

/// Classical kernel estimator f_n(x) = n^-1 sum K_h(x_i - x).
inline double kde(const Sample& sample, const KernelSpec& kernel, double h, double x) {
  detail::check_bandwidth(h);
  double s = 0.0;
  detail::for_each_in_window(sample, kernel, h, x, [&](double xi) { s += kernel((xi - x) / h); });
  return s / (static_cast<double>(sample.size()) * h);
}

/// g_n(x) = n^-1 sum h^-3 (x_i - x) K((x_i - x)/h), i.e. sigma_K^2 times a
/// derivative estimate; for the gaussian kernel exactly f_n'(x).
inline double kde_deriv(const Sample& sample, const KernelSpec& kernel, double h, double x) {
  detail::check_bandwidth(h);
  double s = 0.0;
  detail::for_each_in_window(sample, kernel, h, x, [&](double xi) { s += (xi - x) * kernel((xi - x) / h); });
  return s / (static_cast<double>(sample.size()) * h * h * h);
}

/// n^-1 sum h^-1 K((x_i - x)/h)^2, which settles near R(K) f(x) as h shrinks.
inline double kde_squared(const Sample& sample, const KernelSpec& kernel, double h, double x) {
  detail::check_bandwidth(h);
  double s = 0.0;
  detail::for_each_in_window(sample, kernel, h, x, [&](double xi) {
    const double k = kernel((xi - x) / h);
    s += k * k;
  });
  return s / (static_cast<double>(sample.size()) * h);
}

/// r_n(x) = n^-1 sum K_h(x_i - x) / f0(x_i), estimating f(x)/f0(x).
template <class F0>
double correction_kde(const Sample& sample, const KernelSpec& kernel, double h, const F0& f0, double x) {
  detail::check_bandwidth(h);
  for (const auto& d : sample.distinct()) {
    if (!(f0(d.value) > 0.0)) throw SingularStartDensity("start density vanishes at a data point");
  }
  double s = 0.0;
  detail::for_each_in_window(sample, kernel, h, x, [&](double xi) { s += kernel((xi - x) / h) / f0(xi); });
  return s / (static_cast<double>(sample.size()) * h);
}

/// (f0 * K_h)(x) = int K_h(t - x) f0(t) dt. Normal mixtures take a closed
/// form; anything else is integrated over the kernel window.
inline double convolve(const UnivariateDensity& f0, const KernelSpec& kernel, double h, double x, double tol = 1e-11) {
  detail::check_bandwidth(h);
  if (f0.is_normal_mixture()) {
    double s = 0.0;
    for (const auto& c : f0.normal_components()) s += c.weight * kernel.convolve_normal(x, h, c.mean, c.sd);
    return s;
  }
  const auto [lo, hi] = f0.integration_range();
  const double r = kernel.effective_radius();
  const double z_lo = std::max(-r, (lo - x) / h);
  const double z_hi = std::min(r, (hi - x) / h);
  if (!(z_hi > z_lo)) return 0.0;
  std::vector<double> bp = {z_lo, z_hi};
  if (z_lo < 0.0 && z_hi > 0.0) bp.push_back(0.0);
  for (double f : f0.features()) {
    const double z = (f - x) / h;
    if (z > z_lo && z < z_hi) bp.push_back(z);
  }
  return integrate([&](double z) { return kernel(z) * f0.pdf(x + h * z); }, std::span<const double>(bp), {tol}).value;
}

/// Normal-kernel estimate with a bandwidth per point: n^-1 sum phi((y - e_i)/h_i)/h_i.
inline double variable_kde(std::span<const double> centers, std::span<const double> bandwidths, double y) {
  if (centers.size() != bandwidths.size() || centers.empty()) throw DomainError("variable_kde: size mismatch");
  double s = 0.0;
  for (std::size_t i = 0; i < centers.size(); ++i) {
    if (!(bandwidths[i] > 0.0)) throw DomainError("variable_kde: bandwidths must be positive");
    s += normal_pdf(y, centers[i], bandwidths[i]);
  }
  return s / static_cast<double>(centers.size());
}

}  // namespace bayesdens
