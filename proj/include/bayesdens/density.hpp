#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "bayesdens/errors.hpp"
#include "bayesdens/normal.hpp"
#include "bayesdens/quadrature.hpp"

namespace bayesdens {

struct NormalComponent {
  double weight;
  double mean;
  double sd;
};

/// A fixed univariate density used as a prior guess f0, a residual base g0,
/// or a simulation truth. Normal mixtures are kept in closed form so kernel
/// convolutions and cdfs can take analytic paths.
class UnivariateDensity {
 public:
  static UnivariateDensity normal(double mean, double sd) { return normal_mixture({{1.0, mean, sd}}); }

  static UnivariateDensity normal_mixture(std::vector<NormalComponent> components) {
    if (components.empty()) throw DomainError("normal_mixture: no components");
    double total = 0.0;
    for (const auto& c : components) {
      if (!(c.sd > 0.0) || !(c.weight >= 0.0)) throw DomainError("normal_mixture: need sd > 0 and weight >= 0");
      total += c.weight;
    }
    if (!(total > 0.0)) throw DomainError("normal_mixture: weights sum to zero");
    for (auto& c : components) c.weight /= total;
    UnivariateDensity d;
    d.mixture_ = std::move(components);
    d.name_ = d.mixture_.size() == 1 ? "normal" : "normal-mixture";
    return d;
  }

  static UnivariateDensity uniform(double lo, double hi) {
    if (!(hi > lo)) throw DomainError("uniform density: need hi > lo");
    const double height = 1.0 / (hi - lo);
    UnivariateDensity d;
    d.pdf_ = [=](double x) { return (x >= lo && x <= hi) ? height : 0.0; };
    d.cdf_ = [=](double x) { return std::clamp((x - lo) * height, 0.0, 1.0); };
    d.lo_ = lo;
    d.hi_ = hi;
    d.features_ = {lo, hi};
    d.name_ = "uniform";
    return d;
  }

  /// Arbitrary density. `range` must bracket essentially all of its mass;
  /// `features` lists kinks or jumps so quadrature can split there.
  static UnivariateDensity custom(std::function<double(double)> pdf, std::pair<double, double> range,
                                  std::function<double(double)> cdf = {}, std::vector<double> features = {},
                                  std::string name = "custom") {
    if (!pdf) throw DomainError("custom density: pdf is required");
    if (!(range.second > range.first) || !std::isfinite(range.first) || !std::isfinite(range.second)) {
      throw DomainError("custom density: need a finite integration range");
    }
    UnivariateDensity d;
    d.pdf_ = std::move(pdf);
    d.cdf_ = std::move(cdf);
    d.lo_ = range.first;
    d.hi_ = range.second;
    d.features_ = std::move(features);
    d.name_ = std::move(name);
    return d;
  }

  double pdf(double x) const {
    if (!mixture_.empty()) {
      double s = 0.0;
      for (const auto& c : mixture_) s += c.weight * normal_pdf(x, c.mean, c.sd);
      return s;
    }
    return pdf_(x);
  }

  double operator()(double x) const { return pdf(x); }

  double cdf(double x) const {
    if (!mixture_.empty()) {
      double s = 0.0;
      for (const auto& c : mixture_) s += c.weight * Phi((x - c.mean) / c.sd);
      return s;
    }
    if (cdf_) return cdf_(x);
    if (x <= lo_) return 0.0;
    const double upper = std::min(x, hi_);
    auto bp = breakpoints_within(lo_, upper);
    return integrate([this](double t) { return pdf_(t); }, std::span<const double>(bp), {1e-11}).value;
  }

  /// Mass in the half-open interval (lo, hi]; infinite endpoints allowed.
  double mass(double lo, double hi) const {
    const double upper = std::isinf(hi) && hi > 0 ? 1.0 : cdf(hi);
    const double lower = std::isinf(lo) && lo < 0 ? 0.0 : cdf(lo);
    return upper - lower;
  }

  /// Finite interval outside which the density carries negligible mass
  /// (normal tails are cut at 10 standard deviations).
  std::pair<double, double> integration_range() const {
    if (!mixture_.empty()) {
      double lo = std::numeric_limits<double>::infinity(), hi = -lo;
      for (const auto& c : mixture_) {
        lo = std::min(lo, c.mean - 10.0 * c.sd);
        hi = std::max(hi, c.mean + 10.0 * c.sd);
      }
      return {lo, hi};
    }
    return {lo_, hi_};
  }

  std::span<const double> features() const noexcept { return features_; }
  std::span<const NormalComponent> normal_components() const noexcept { return mixture_; }
  bool is_normal_mixture() const noexcept { return !mixture_.empty(); }
  const std::string& name() const noexcept { return name_; }

  /// Sorted quadrature breakpoints on [lo, hi]: the endpoints plus interior features.
  std::vector<double> breakpoints_within(double lo, double hi) const {
    std::vector<double> bp = {lo, hi};
    for (double f : features_) {
      if (f > lo && f < hi) bp.push_back(f);
    }
    for (const auto& c : mixture_) {
      if (c.mean > lo && c.mean < hi) bp.push_back(c.mean);
    }
    std::sort(bp.begin(), bp.end());
    return bp;
  }

 private:
  UnivariateDensity() = default;

  std::vector<NormalComponent> mixture_;
  std::function<double(double)> pdf_;
  std::function<double(double)> cdf_;
  double lo_ = -std::numeric_limits<double>::infinity();
  double hi_ = std::numeric_limits<double>::infinity();
  std::vector<double> features_;
  std::string name_;
};

}  // namespace bayesdens
