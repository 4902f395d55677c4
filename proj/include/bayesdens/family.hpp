#pragma once

#include <cmath>
#include <limits>
#include <utility>
#include <vector>

#include "bayesdens/density.hpp"
#include "bayesdens/errors.hpp"
#include "bayesdens/normal.hpp"

namespace bayesdens {

struct Theta {
  double mu;
  double sigma;
};

/// Location-scale family f0(x, theta) = g0((x - mu) / sigma) / sigma built on a
/// standardized residual density g0. Doubles as the transformation model
/// X = mu + sigma * eps.
class LocationScaleFamily {
 public:
  static constexpr std::size_t dimension = 2;

  static LocationScaleFamily normal() { return LocationScaleFamily(UnivariateDensity::normal(0.0, 1.0)); }

  explicit LocationScaleFamily(UnivariateDensity base) : base_(std::move(base)) {
    const auto comps = base_.normal_components();
    normal_ = comps.size() == 1 && comps[0].mean == 0.0 && comps[0].sd == 1.0;
  }

  const UnivariateDensity& base() const noexcept { return base_; }
  bool is_normal() const noexcept { return normal_; }

  /// Inverse transformation T_theta^{-1}(x).
  double residual(double x, Theta t) const {
    if (!(t.sigma > 0.0) || !std::isfinite(t.sigma)) throw NonInvertibleTransform("scale must be positive and finite");
    return (x - t.mu) / t.sigma;
  }

  double transform(double eps, Theta t) const { return t.mu + t.sigma * eps; }

  double pdf(double x, Theta t) const { return base_.pdf(residual(x, t)) / t.sigma; }

  double log_pdf(double x, Theta t) const {
    const double e = residual(x, t);
    if (normal_) return log_phi(e) - std::log(t.sigma);
    return std::log(base_.pdf(e)) - std::log(t.sigma);
  }

  double cdf(double x, Theta t) const { return base_.cdf(residual(x, t)); }

  double quantile(double p, Theta t) const {
    if (!(p > 0.0 && p < 1.0)) throw DomainError("quantile: p must lie in (0,1)");
    return transform(standard_quantile(p), t);
  }

  /// Quantile of the residual distribution G0.
  double standard_quantile(double p) const {
    if (!(p > 0.0 && p < 1.0)) throw DomainError("quantile: p must lie in (0,1)");
    if (normal_) return Phi_inverse(p);
    auto [lo, hi] = base_.integration_range();
    for (int it = 0; it < 200 && hi - lo > 1e-14 * (1.0 + std::abs(lo) + std::abs(hi)); ++it) {
      const double mid = 0.5 * (lo + hi);
      (base_.cdf(mid) < p ? lo : hi) = mid;
    }
    return 0.5 * (lo + hi);
  }

  /// f0(., theta) as a standalone density.
  UnivariateDensity at(Theta t) const {
    if (!(t.sigma > 0.0)) throw NonInvertibleTransform("scale must be positive");
    if (base_.is_normal_mixture()) {
      std::vector<NormalComponent> comps;
      for (const auto& c : base_.normal_components()) comps.push_back({c.weight, t.mu + t.sigma * c.mean, t.sigma * c.sd});
      return UnivariateDensity::normal_mixture(std::move(comps));
    }
    auto [lo, hi] = base_.integration_range();
    std::vector<double> features;
    for (double f : base_.features()) features.push_back(transform(f, t));
    auto base = base_;
    return UnivariateDensity::custom([base, t](double x) { return base.pdf((x - t.mu) / t.sigma) / t.sigma; },
                                     {transform(lo, t), transform(hi, t)},
                                     [base, t](double x) { return base.cdf((x - t.mu) / t.sigma); },
                                     std::move(features), base_.name());
  }

 private:
  UnivariateDensity base_;
  bool normal_ = false;
};

}  // namespace bayesdens
