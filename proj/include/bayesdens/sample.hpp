#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <numeric>
#include <span>
#include <vector>

#include "bayesdens/errors.hpp"

namespace bayesdens {

struct DistinctValue {
  double value;
  std::size_t multiplicity;
};

/// Immutable, sorted univariate sample with a distinct-value view.
class Sample {
 public:
  explicit Sample(std::vector<double> values) : values_(std::move(values)) {
    if (values_.empty()) throw DomainError("Sample: at least one observation is required");
    for (double v : values_) {
      if (!std::isfinite(v)) throw DomainError("Sample: observations must be finite");
    }
    std::sort(values_.begin(), values_.end());
    for (double v : values_) {
      if (!distinct_.empty() && distinct_.back().value == v) {
        ++distinct_.back().multiplicity;
      } else {
        distinct_.push_back({v, 1});
      }
    }
  }

  std::span<const double> values() const noexcept { return values_; }
  std::span<const DistinctValue> distinct() const noexcept { return distinct_; }
  std::size_t size() const noexcept { return values_.size(); }
  std::size_t distinct_count() const noexcept { return distinct_.size(); }

  double operator[](std::size_t i) const { return values_[i]; }
  double min() const noexcept { return values_.front(); }
  double max() const noexcept { return values_.back(); }

  double mean() const noexcept {
    return std::accumulate(values_.begin(), values_.end(), 0.0) / static_cast<double>(size());
  }

  /// Standard deviation with the n-1 denominator; 0 for a single observation.
  double sd() const noexcept {
    if (size() < 2) return 0.0;
    const double m = mean();
    double ss = 0.0;
    for (double v : values_) ss += (v - m) * (v - m);
    return std::sqrt(ss / static_cast<double>(size() - 1));
  }

  /// Fraction of observations in the half-open interval (lo, hi].
  double fraction_in(double lo, double hi) const noexcept {
    auto first = std::upper_bound(values_.begin(), values_.end(), lo);
    auto last = std::upper_bound(values_.begin(), values_.end(), hi);
    return static_cast<double>(last - first) / static_cast<double>(size());
  }

  /// Empirical quantile by linear interpolation between order statistics.
  double quantile(double p) const {
    if (!(p >= 0.0 && p <= 1.0)) throw DomainError("Sample::quantile: p must lie in [0,1]");
    const double pos = p * static_cast<double>(size() - 1);
    const auto lo = static_cast<std::size_t>(std::floor(pos));
    const auto hi = std::min(lo + 1, size() - 1);
    const double t = pos - static_cast<double>(lo);
    return values_[lo] + t * (values_[hi] - values_[lo]);
  }

 private:
  std::vector<double> values_;
  std::vector<DistinctValue> distinct_;
};

/// Strictly increasing evaluation abscissae.
class EvalGrid {
 public:
  explicit EvalGrid(std::vector<double> points, bool uniform = false)
      : points_(std::move(points)), uniform_(uniform) {
    if (points_.empty()) throw DomainError("EvalGrid: at least one point is required");
    for (std::size_t i = 1; i < points_.size(); ++i) {
      if (!(points_[i] > points_[i - 1])) throw DomainError("EvalGrid: points must be strictly increasing");
    }
  }

  static EvalGrid linspace(double lo, double hi, std::size_t count) {
    if (count == 1) return EvalGrid({lo}, true);
    if (count < 1 || !(hi > lo)) throw DomainError("EvalGrid::linspace: need hi > lo and count >= 1");
    std::vector<double> pts(count);
    const double step = (hi - lo) / static_cast<double>(count - 1);
    for (std::size_t i = 0; i < count; ++i) pts[i] = lo + step * static_cast<double>(i);
    pts.back() = hi;
    return EvalGrid(std::move(pts), true);
  }

  std::span<const double> points() const noexcept { return points_; }
  std::size_t size() const noexcept { return points_.size(); }
  bool uniform() const noexcept { return uniform_; }
  double operator[](std::size_t i) const { return points_[i]; }

 private:
  std::vector<double> points_;
  bool uniform_;
};

}  // namespace bayesdens
