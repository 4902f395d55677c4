#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <functional>
#include <limits>
#include <optional>
#include <span>
#include <utility>
#include <vector>

#include "bayesdens/errors.hpp"
#include "bayesdens/family.hpp"
#include "bayesdens/rng.hpp"
#include "bayesdens/sample.hpp"

namespace bayesdens {

/// Rectangular lattice over a (first, second) parameter pair. For the
/// location-scale family the axes are mu and sigma; one-parameter models
/// use a second axis of length one.
class ParamLattice {
 public:
  ParamLattice(std::vector<double> first, std::vector<double> second)
      : first_(std::move(first)), second_(std::move(second)) {
    if (first_.empty() || second_.empty()) throw DomainError("ParamLattice: axes must be nonempty");
  }

  std::size_t size() const noexcept { return first_.size() * second_.size(); }
  std::span<const double> first_axis() const noexcept { return first_; }
  std::span<const double> second_axis() const noexcept { return second_; }
  std::size_t index(std::size_t i_first, std::size_t i_second) const noexcept {
    return i_second * first_.size() + i_first;
  }
  double first(std::size_t k) const { return first_[k % first_.size()]; }
  double second(std::size_t k) const { return second_[k / first_.size()]; }
  Theta theta(std::size_t k) const { return {first(k), second(k)}; }

 private:
  std::vector<double> first_;
  std::vector<double> second_;
};

struct LatticeSpec {
  std::size_t mu_points = 101;
  std::size_t sigma_points = 101;
  double mu_sd_span = 6.0;          // mu axis covers center +- span * scale
  double sigma_lo_factor = 0.125;
  double sigma_hi_factor = 8.0;
  std::optional<double> fixed_sigma;  // location model: sigma axis of length one
  std::optional<std::pair<double, double>> mu_range;
  std::optional<std::pair<double, double>> sigma_range;
};

namespace detail {

inline std::vector<double> linspace_axis(double lo, double hi, std::size_t count) {
  if (count == 1) return {0.5 * (lo + hi)};
  std::vector<double> v(count);
  for (std::size_t i = 0; i < count; ++i) v[i] = lo + (hi - lo) * static_cast<double>(i) / static_cast<double>(count - 1);
  v.back() = hi;
  return v;
}

inline std::vector<double> logspace_axis(double lo, double hi, std::size_t count) {
  auto v = linspace_axis(std::log(lo), std::log(hi), count);
  for (double& x : v) x = std::exp(x);
  return v;
}

}  // namespace detail

/// Default (mu, sigma) lattice. Bounds come from the mean and sd of the
/// distinct values so that duplicating an observation leaves the lattice alone.
inline ParamLattice make_lattice(const Sample& sample, const LatticeSpec& spec = {}) {
  if (spec.mu_points < 1 || spec.sigma_points < 1) throw DomainError("lattice: axis sizes must be >= 1");
  const auto distinct = sample.distinct();
  double center = 0.0;
  for (const auto& d : distinct) center += d.value;
  center /= static_cast<double>(distinct.size());
  double scale = 0.0;
  if (distinct.size() > 1) {
    for (const auto& d : distinct) scale += (d.value - center) * (d.value - center);
    scale = std::sqrt(scale / static_cast<double>(distinct.size() - 1));
  }
  if (!(scale > 0.0)) scale = 1.0;

  auto [mu_lo, mu_hi] = spec.mu_range.value_or(std::pair{center - spec.mu_sd_span * scale, center + spec.mu_sd_span * scale});
  std::vector<double> mus = detail::linspace_axis(mu_lo, mu_hi, spec.mu_points);
  std::vector<double> sigmas;
  if (spec.fixed_sigma) {
    if (!(*spec.fixed_sigma > 0.0)) throw DomainError("lattice: fixed sigma must be positive");
    sigmas = {*spec.fixed_sigma};
  } else {
    auto [s_lo, s_hi] = spec.sigma_range.value_or(std::pair{scale * spec.sigma_lo_factor, scale * spec.sigma_hi_factor});
    if (!(s_lo > 0.0) || s_hi < s_lo) throw DomainError("lattice: sigma range must be positive and ordered");
    sigmas = detail::logspace_axis(s_lo, s_hi, spec.sigma_points);
  }
  return ParamLattice(std::move(mus), std::move(sigmas));
}

/// Max-shifted exponentiation of log-weights into masses summing to one.
inline std::vector<double> normalize_log_weights(std::span<const double> log_weights) {
  double top = -std::numeric_limits<double>::infinity();
  for (double w : log_weights) {
    if (std::isnan(w)) throw DomainError("posterior: NaN log-weight");
    top = std::max(top, w);
  }
  if (!std::isfinite(top)) throw DegeneratePosterior("posterior: every log-weight is -inf");
  std::vector<double> masses(log_weights.size());
  double total = 0.0;
  for (std::size_t i = 0; i < masses.size(); ++i) {
    masses[i] = std::exp(log_weights[i] - top);
    total += masses[i];
  }
  for (double& m : masses) m /= total;
  return masses;
}

class PosteriorGrid {
 public:
  PosteriorGrid(ParamLattice lattice, std::span<const double> log_weights)
      : lattice_(std::move(lattice)), masses_(normalize_log_weights(log_weights)) {
    if (log_weights.size() != lattice_.size()) throw DomainError("posterior: one log-weight per lattice point required");
  }

  const ParamLattice& lattice() const noexcept { return lattice_; }
  std::span<const double> masses() const noexcept { return masses_; }
  std::size_t size() const noexcept { return masses_.size(); }
  double mass(std::size_t k) const { return masses_[k]; }
  Theta theta(std::size_t k) const { return lattice_.theta(k); }

  /// Posterior mean of (first, second).
  Theta mean() const {
    Theta m{0.0, 0.0};
    for (std::size_t k = 0; k < size(); ++k) {
      m.mu += masses_[k] * lattice_.first(k);
      m.sigma += masses_[k] * lattice_.second(k);
    }
    return m;
  }

  /// Posterior covariance {var_first, cov, var_second}. With
  /// `resolution_correction` each axis gets a step^2/12 term so a posterior
  /// narrower than the lattice spacing still reports a usable spread.
  std::array<double, 3> covariance(bool resolution_correction = false) const {
    const Theta m = mean();
    std::array<double, 3> c{0.0, 0.0, 0.0};
    for (std::size_t k = 0; k < size(); ++k) {
      const double d1 = lattice_.first(k) - m.mu;
      const double d2 = lattice_.second(k) - m.sigma;
      c[0] += masses_[k] * d1 * d1;
      c[1] += masses_[k] * d1 * d2;
      c[2] += masses_[k] * d2 * d2;
    }
    if (resolution_correction) {
      const auto a1 = lattice_.first_axis();
      const auto a2 = lattice_.second_axis();
      if (a1.size() > 1) {
        const double step = (a1.back() - a1.front()) / static_cast<double>(a1.size() - 1);
        c[0] += step * step / 12.0;
      }
      if (a2.size() > 1 && a2.front() > 0.0) {
        const double log_step = std::log(a2.back() / a2.front()) / static_cast<double>(a2.size() - 1);
        c[2] += m.sigma * m.sigma * log_step * log_step / 12.0;
      }
    }
    return c;
  }

  /// Indices whose mass exceeds `relative` times the largest mass.
  std::vector<std::size_t> support(double relative = 1e-14) const {
    const double top = *std::max_element(masses_.begin(), masses_.end());
    std::vector<std::size_t> idx;
    for (std::size_t k = 0; k < size(); ++k) {
      if (masses_[k] > relative * top) idx.push_back(k);
    }
    return idx;
  }

  /// Lattice index drawn with probability equal to its mass.
  std::size_t draw(Rng& rng) const {
    const double u = uniform01(rng);
    double acc = 0.0;
    for (std::size_t k = 0; k < size(); ++k) {
      acc += masses_[k];
      if (u <= acc) return k;
    }
    return size() - 1;
  }

 private:
  ParamLattice lattice_;
  std::vector<double> masses_;
};

inline PosteriorGrid grid_posterior_normalize(ParamLattice lattice, std::span<const double> log_weights) {
  return PosteriorGrid(std::move(lattice), log_weights);
}

/// Log prior density on the lattice parameters; an empty function means flat
/// on the lattice, i.e. flat in (mu, log sigma) for the default lattice.
using LogPrior = std::function<double(Theta)>;

namespace detail {

/// Log-likelihood sum_i w_i log f0(x_i, theta) at every lattice point.
inline std::vector<double> family_loglik(const LocationScaleFamily& family, std::span<const double> xs,
                                         std::span<const double> weights, const ParamLattice& lattice) {
  std::vector<double> ll(lattice.size(), 0.0);
  if (family.is_normal()) {
    // Centered sufficient statistics.
    double w = 0.0, c = 0.0;
    for (std::size_t i = 0; i < xs.size(); ++i) {
      w += weights[i];
      c += weights[i] * xs[i];
    }
    c /= w;
    double s1 = 0.0, s2 = 0.0;
    for (std::size_t i = 0; i < xs.size(); ++i) {
      s1 += weights[i] * (xs[i] - c);
      s2 += weights[i] * (xs[i] - c) * (xs[i] - c);
    }
    for (std::size_t k = 0; k < lattice.size(); ++k) {
      const Theta t = lattice.theta(k);
      const double d = t.mu - c;
      const double ss = s2 - 2.0 * d * s1 + w * d * d;
      ll[k] = -0.5 * ss / (t.sigma * t.sigma) - w * (std::log(t.sigma) + kLogSqrt2Pi);
    }
    return ll;
  }
  for (std::size_t k = 0; k < lattice.size(); ++k) {
    const Theta t = lattice.theta(k);
    double s = 0.0;
    for (std::size_t i = 0; i < xs.size(); ++i) s += weights[i] * family.log_pdf(xs[i], t);
    ll[k] = std::isnan(s) ? -std::numeric_limits<double>::infinity() : s;
  }
  return ll;
}

inline void add_log_prior(std::vector<double>& lw, const ParamLattice& lattice, const LogPrior& prior) {
  if (!prior) return;
  for (std::size_t k = 0; k < lattice.size(); ++k) lw[k] += prior(lattice.theta(k));
}

}  // namespace detail

/// Classical parametric lattice posterior using every observation.
inline PosteriorGrid parametric_posterior(const LocationScaleFamily& family, const Sample& sample,
                                          const ParamLattice& lattice, const LogPrior& prior = {}) {
  std::vector<double> ones(sample.size(), 1.0);
  auto lw = detail::family_loglik(family, sample.values(), ones, lattice);
  detail::add_log_prior(lw, lattice, prior);
  return PosteriorGrid(lattice, lw);
}

}  // namespace bayesdens
