#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <span>
#include <utility>
#include <vector>

#include "bayesdens/density.hpp"
#include "bayesdens/errors.hpp"
#include "bayesdens/family.hpp"
#include "bayesdens/kernels.hpp"
#include "bayesdens/posterior_grid.hpp"
#include "bayesdens/sample.hpp"

namespace bayesdens {

/// Prior weight w_n = a/(a+n) in the posterior-mean mixtures.
inline double prior_weight(double a, std::size_t n) {
  if (!(a >= 0.0)) throw DomainError("concentration a must be nonnegative");
  if (std::isinf(a)) return 1.0;
  if (a == 0.0) return 0.0;
  return a / (a + static_cast<double>(n));
}

/// Dirichlet process prior with parameter a F0 for a fixed start density f0.
struct DirichletPrior {
  double a;
  UnivariateDensity base;
};

// ---------------------------------------------------------------- binned

/// Counts on cells C_j = [b_j, b_{j+1}) (the last cell closed) with prior guesses p0_j.
class BinnedData {
 public:
  BinnedData(std::vector<double> boundaries, std::vector<double> counts, std::vector<double> prior_guesses)
      : boundaries_(std::move(boundaries)), counts_(std::move(counts)), guesses_(std::move(prior_guesses)) {
    const std::size_t k = counts_.size();
    if (k < 1 || boundaries_.size() != k + 1 || guesses_.size() != k) {
      throw DomainError("BinnedData: need k+1 boundaries, k counts and k prior guesses");
    }
    for (std::size_t j = 0; j < k; ++j) {
      if (!(boundaries_[j + 1] > boundaries_[j])) throw DomainError("BinnedData: boundaries must increase");
      if (!(counts_[j] >= 0.0) || counts_[j] != std::floor(counts_[j])) {
        throw DomainError("BinnedData: counts must be nonnegative integers");
      }
      if (!(guesses_[j] > 0.0)) throw DomainError("BinnedData: prior guesses must be positive");
      n_ += counts_[j];
    }
    double total = 0.0;
    for (double g : guesses_) total += g;
    if (std::abs(total - 1.0) > 1e-9) throw DomainError("BinnedData: prior guesses must sum to one");
  }

  static BinnedData from_sample(const Sample& sample, std::vector<double> boundaries, std::vector<double> prior_guesses) {
    if (boundaries.size() < 2) throw DomainError("BinnedData: need at least two boundaries");
    std::vector<double> counts(boundaries.size() - 1, 0.0);
    for (double x : sample.values()) {
      if (x < boundaries.front() || x > boundaries.back()) throw OutOfSupport("observation outside the binning range");
      auto it = std::upper_bound(boundaries.begin(), boundaries.end(), x);
      std::size_t j = static_cast<std::size_t>(it - boundaries.begin());
      j = std::min(j, counts.size()) - 1;
      counts[j] += 1.0;
    }
    return BinnedData(std::move(boundaries), std::move(counts), std::move(prior_guesses));
  }

  /// Equal prior guesses proportional to the cell widths of f0 = uniform on the range.
  static std::vector<double> width_proportional(std::span<const double> boundaries) {
    std::vector<double> g(boundaries.size() - 1);
    const double span = boundaries.back() - boundaries.front();
    for (std::size_t j = 0; j < g.size(); ++j) g[j] = (boundaries[j + 1] - boundaries[j]) / span;
    return g;
  }

  std::size_t cells() const noexcept { return counts_.size(); }
  double n() const noexcept { return n_; }
  std::span<const double> boundaries() const noexcept { return boundaries_; }
  std::span<const double> counts() const noexcept { return counts_; }
  std::span<const double> prior_guesses() const noexcept { return guesses_; }
  double width(std::size_t j) const { return boundaries_[j + 1] - boundaries_[j]; }

  std::size_t cell_of(double x) const {
    if (!(x >= boundaries_.front() && x <= boundaries_.back())) throw OutOfSupport("x lies outside every cell");
    auto it = std::upper_bound(boundaries_.begin(), boundaries_.end(), x);
    return std::min(static_cast<std::size_t>(it - boundaries_.begin()), cells()) - 1;
  }

 private:
  std::vector<double> boundaries_;
  std::vector<double> counts_;
  std::vector<double> guesses_;
  double n_ = 0.0;
};

/// Dirichlet-smoothed histogram: w_n p0_j/h_j + (1-w_n) N_j/(n h_j).
inline double binned_estimate(double a, const BinnedData& data, double x) {
  const std::size_t j = data.cell_of(x);
  const double h = data.width(j);
  if (data.n() == 0.0) return data.prior_guesses()[j] / h;
  const double w = a == 0.0 ? 0.0 : a / (a + data.n());
  return w * data.prior_guesses()[j] / h + (1.0 - w) * data.counts()[j] / (data.n() * h);
}

// ---------------------------------------------------------- kernel smoothed

/// Posterior mean of int K_h(t-x) dF(t): w_n (f0 * K_h)(x) + (1 - w_n) f_n(x).
inline double dp_estimate(const DirichletPrior& prior, const Sample& sample, const KernelSpec& kernel, double h, double x) {
  const double w = prior_weight(prior.a, sample.size());
  const double fn = kde(sample, kernel, h, x);
  if (w == 0.0) return fn;
  return w * convolve(prior.base, kernel, h, x) + (1.0 - w) * fn;
}

/// Leading term of the posterior variance of int K_h(t-x) dF(t).
inline double dp_posterior_variance(double a, const Sample& sample, const KernelSpec& kernel, double h, double x) {
  if (!(a >= 0.0)) throw DomainError("concentration a must be nonnegative");
  const double n = static_cast<double>(sample.size());
  const double shrink = n * n / ((n + a) * (n + a + 1.0));
  return shrink * kde_squared(sample, kernel, h, x) / (n * h);
}

// --------------------------------------------------------- semiparametric

/// Lattice posterior using each distinct observed value once.
inline PosteriorGrid semiparam_posterior(const LocationScaleFamily& family, const Sample& sample,
                                         const ParamLattice& lattice, const LogPrior& prior = {}) {
  std::vector<double> xs;
  xs.reserve(sample.distinct_count());
  for (const auto& d : sample.distinct()) xs.push_back(d.value);
  std::vector<double> ones(xs.size(), 1.0);
  auto lw = detail::family_loglik(family, xs, ones, lattice);
  detail::add_log_prior(lw, lattice, prior);
  return PosteriorGrid(lattice, lw);
}

/// Posterior predictive density sum_theta f0(t, theta) mass(theta), with
/// negligible lattice points dropped.
inline UnivariateDensity predictive_density(const LocationScaleFamily& family, const PosteriorGrid& posterior,
                                            double relative_cutoff = 1e-14) {
  const auto keep = posterior.support(relative_cutoff);
  if (family.base().is_normal_mixture()) {
    std::vector<NormalComponent> comps;
    for (std::size_t k : keep) {
      const Theta t = posterior.theta(k);
      for (const auto& c : family.base().normal_components()) {
        comps.push_back({posterior.mass(k) * c.weight, t.mu + t.sigma * c.mean, t.sigma * c.sd});
      }
    }
    return UnivariateDensity::normal_mixture(std::move(comps));
  }
  std::vector<std::pair<Theta, double>> atoms;
  double total = 0.0, lo = std::numeric_limits<double>::infinity(), hi = -lo;
  for (std::size_t k : keep) {
    atoms.emplace_back(posterior.theta(k), posterior.mass(k));
    total += posterior.mass(k);
    auto [a, b] = family.at(posterior.theta(k)).integration_range();
    lo = std::min(lo, a);
    hi = std::max(hi, b);
  }
  for (auto& at : atoms) at.second /= total;
  auto pdf = [family, atoms](double x) {
    double s = 0.0;
    for (const auto& [t, m] : atoms) s += m * family.pdf(x, t);
    return s;
  };
  auto cdf = [family, atoms](double x) {
    double s = 0.0;
    for (const auto& [t, m] : atoms) s += m * family.cdf(x, t);
    return s;
  };
  return UnivariateDensity::custom(pdf, {lo, hi}, cdf, {}, "predictive");
}

struct SemiparamFit {
  PosteriorGrid posterior;
  UnivariateDensity predictive;
};

inline SemiparamFit semiparam_fit(const LocationScaleFamily& family, const Sample& sample, const ParamLattice& lattice,
                                  const LogPrior& prior = {}) {
  auto post = semiparam_posterior(family, sample, lattice, prior);
  auto pred = predictive_density(family, post);
  return {std::move(post), std::move(pred)};
}

/// w_n int K_h(t-x) fhat0(t) dt + (1 - w_n) f_n(x) with the predictive fhat0.
inline double semiparam_estimate(double a, const SemiparamFit& fit, const Sample& sample, const KernelSpec& kernel,
                                 double h, double x) {
  return dp_estimate(DirichletPrior{a, fit.predictive}, sample, kernel, h, x);
}

// ------------------------------------------------------- residual density

enum class BandwidthRule {
  standardized,  // h_i = {1 + eps_i^2 / 2}^{1/2} / sqrt(n); 1/sqrt(n) when sigma is fixed
  literal,       // h_i = {1 + (x_i - mu)/(2 sigma^2)}^{1/2} / sqrt(n), as printed
  delta_method,  // h_i^2 = grad' Cov(theta | data) grad from the lattice posterior
};

/// Transformation model X = mu + sigma * eps with a Dirichlet aG0 prior on
/// the residual distribution; G0 is the family's base density.
struct TransformModel {
  LocationScaleFamily family = LocationScaleFamily::normal();
  double a = 1.0;
  LogPrior prior;
  LatticeSpec lattice;
  BandwidthRule rule = BandwidthRule::standardized;
};

struct ResidualFit {
  PosteriorGrid posterior;
  Theta theta_hat;
  std::vector<double> residuals;   // sorted
  std::vector<double> bandwidths;  // aligned with residuals
  std::size_t n;
};

namespace detail {

inline ResidualFit finish_residual_fit(const TransformModel& model, const Sample& sample, PosteriorGrid posterior) {
  const Theta th = posterior.mean();
  const bool fixed_sigma = posterior.lattice().second_axis().size() == 1;
  const double n = static_cast<double>(sample.size());
  ResidualFit fit{std::move(posterior), th, {}, {}, sample.size()};
  std::array<double, 3> cov{};
  if (model.rule == BandwidthRule::delta_method) cov = fit.posterior.covariance(true);
  for (double x : sample.values()) {
    const double e = model.family.residual(x, th);
    double h = 0.0;
    switch (model.rule) {
      case BandwidthRule::standardized:
        h = (fixed_sigma ? 1.0 : std::sqrt(1.0 + 0.5 * e * e)) / std::sqrt(n);
        break;
      case BandwidthRule::literal: {
        const double v2 = fixed_sigma ? 1.0 : 1.0 + 0.5 * (x - th.mu) / (th.sigma * th.sigma);
        if (!(v2 > 0.0)) throw DomainError("literal bandwidth rule gives a negative variance at x = " + std::to_string(x));
        h = std::sqrt(v2) / std::sqrt(n);
        break;
      }
      case BandwidthRule::delta_method: {
        // eps = (x - mu)/sigma: d eps/d mu = -1/sigma, d eps/d sigma = -eps/sigma.
        const double g1 = -1.0 / th.sigma;
        const double g2 = fixed_sigma ? 0.0 : -e / th.sigma;
        h = std::sqrt(g1 * g1 * cov[0] + 2.0 * g1 * g2 * cov[1] + g2 * g2 * cov[2]);
        break;
      }
    }
    if (!(h > 0.0)) throw DomainError("residual bandwidth is not positive");
    fit.residuals.push_back(e);
    fit.bandwidths.push_back(h);
  }
  return fit;
}

}  // namespace detail

inline ResidualFit fit_residuals(const TransformModel& model, const Sample& sample) {
  const auto lattice = make_lattice(sample, model.lattice);
  return detail::finish_residual_fit(model, sample, semiparam_posterior(model.family, sample, lattice, model.prior));
}

/// w_n g0(y) + (1 - w_n) n^-1 sum phi((y - e_i)/h_i)/h_i.
inline double residual_density(double a, const UnivariateDensity& g0, std::span<const double> residuals,
                               std::span<const double> bandwidths, double y) {
  const double w = prior_weight(a, residuals.size());
  const double gn = variable_kde(residuals, bandwidths, y);
  if (w == 0.0) return gn;
  return w * g0.pdf(y) + (1.0 - w) * gn;
}

inline double residual_density(const TransformModel& model, const ResidualFit& fit, double y) {
  return residual_density(model.a, model.family.base(), fit.residuals, fit.bandwidths, y);
}

inline double residual_density(const TransformModel& model, const Sample& sample, double y) {
  return residual_density(model, fit_residuals(model, sample), y);
}

// ------------------------------------------------------------ pinned down

/// Partition (-inf, b_1], (b_1, b_2], ..., (b_{m-1}, inf) with pinned masses z_j.
class ControlSets {
 public:
  ControlSets(std::vector<double> cuts, std::vector<double> masses) : cuts_(std::move(cuts)), z_(std::move(masses)) {
    if (z_.size() != cuts_.size() + 1) throw DomainError("ControlSets: need m-1 cut points for m masses");
    for (std::size_t i = 1; i < cuts_.size(); ++i) {
      if (!(cuts_[i] > cuts_[i - 1])) throw DomainError("ControlSets: cut points must increase");
    }
    double total = 0.0;
    for (double z : z_) {
      if (!(z > 0.0)) throw DomainError("ControlSets: masses must be positive");
      total += z;
    }
    if (std::abs(total - 1.0) > 1e-12) throw DomainError("ControlSets: masses must sum to one");
  }

  static ControlSets whole_line() { return ControlSets({}, {1.0}); }

  std::size_t size() const noexcept { return z_.size(); }
  std::span<const double> cuts() const noexcept { return cuts_; }
  std::span<const double> masses() const noexcept { return z_; }
  double mass(std::size_t j) const { return z_[j]; }

  std::pair<double, double> bounds(std::size_t j) const {
    const double inf = std::numeric_limits<double>::infinity();
    return {j == 0 ? -inf : cuts_[j - 1], j + 1 == size() ? inf : cuts_[j]};
  }

  /// Set containing x under the half-open convention.
  std::size_t set_of(double x) const {
    return static_cast<std::size_t>(std::lower_bound(cuts_.begin(), cuts_.end(), x) - cuts_.begin());
  }

  /// Set having x as an inner point; a cut point is rejected.
  std::size_t interior_set_of(double x) const {
    for (double c : cuts_) {
      if (x == c) throw BoundaryError("point lies on a control-set boundary");
    }
    return set_of(x);
  }

 private:
  std::vector<double> cuts_;
  std::vector<double> z_;
};

namespace detail {

/// Count of sorted values in (lo, hi].
inline double count_in(std::span<const double> sorted, double lo, double hi) {
  auto first = std::upper_bound(sorted.begin(), sorted.end(), lo);
  auto last = std::upper_bound(sorted.begin(), sorted.end(), hi);
  return static_cast<double>(last - first);
}

}  // namespace detail

/// Density estimate under a Dirichlet a F0 pinned to F(B_j) = z_j. The
/// prior part on B_j is F0 rescaled to carry mass z_j; when F0(B_j) = z_j
/// this is the unscaled start density.
inline double pinned_estimate(const DirichletPrior& prior, const ControlSets& control, const Sample& sample,
                              const KernelSpec& kernel, double h, double x) {
  if (!(prior.a >= 0.0)) throw DomainError("concentration a must be nonnegative");
  const std::size_t j = control.interior_set_of(x);
  const auto [lo, hi] = control.bounds(j);
  const double z = control.mass(j);
  const double n = static_cast<double>(sample.size());
  const double fn = kde(sample, kernel, h, x);
  const double in_set = detail::count_in(sample.values(), lo, hi);
  if (prior.a == 0.0) {
    if (in_set == 0.0) throw DegeneratePosterior("no observations in the control set and a = 0");
    return z * n * fn / in_set;
  }
  const double f0_mass = prior.base.mass(lo, hi);
  if (!(f0_mass > 0.0)) throw SingularStartDensity("start distribution gives a control set zero mass");
  const double conv = convolve(prior.base, kernel, h, x);
  return z * (prior.a * (z / f0_mass) * conv + n * fn) / (prior.a * z + in_set);
}

namespace detail {

/// log M_n(theta) up to a theta-free constant, for the residual counts of
/// `sample` under theta. Sets whose G0 mass differs from z_j get the rescaled
/// base measure, which adds (z_j/G0(B_j))^{D_j} for D_j distinct residuals.
inline double log_pin_factor(double a, const ControlSets& control, std::span<const double> base_masses,
                             const Sample& sample, std::span<const double> distinct_values, Theta t) {
  double s = 0.0;
  for (std::size_t j = 0; j < control.size(); ++j) {
    const auto [lo, hi] = control.bounds(j);
    const double x_lo = std::isinf(lo) ? lo : t.mu + t.sigma * lo;
    const double x_hi = std::isinf(hi) ? hi : t.mu + t.sigma * hi;
    const double c = count_in(sample.values(), x_lo, x_hi);
    const double d = count_in(distinct_values, x_lo, x_hi);
    const double z = control.mass(j);
    s += c * std::log(z) + d * std::log(z / base_masses[j]);
    if (a == 0.0) {
      if (c == 0.0) return -std::numeric_limits<double>::infinity();
      s -= std::lgamma(c);
    } else {
      // Gamma(a z + c) / Gamma(a z) as a finite product.
      const double az = a * z;
      for (double k = 0.0; k < c; k += 1.0) s -= std::log(az + k);
    }
  }
  return s;
}

inline std::vector<double> control_base_masses(const LocationScaleFamily& family, const ControlSets& control) {
  std::vector<double> m(control.size());
  for (std::size_t j = 0; j < control.size(); ++j) {
    const auto [lo, hi] = control.bounds(j);
    m[j] = family.base().mass(lo, hi);
    if (!(m[j] > 0.0)) throw SingularStartDensity("residual base gives a control set zero mass");
  }
  return m;
}

}  // namespace detail

/// Lattice posterior pi(theta) L_n(theta) M_n(theta) for the pinned-down
/// residual model; control sets are on the residual scale.
inline PosteriorGrid pinned_posterior(const TransformModel& model, const ControlSets& control, const Sample& sample,
                                      const ParamLattice& lattice) {
  if (!(model.a >= 0.0)) throw DomainError("concentration a must be nonnegative");
  std::vector<double> xs;
  for (const auto& d : sample.distinct()) xs.push_back(d.value);
  std::vector<double> ones(xs.size(), 1.0);
  auto lw = detail::family_loglik(model.family, xs, ones, lattice);
  detail::add_log_prior(lw, lattice, model.prior);
  const auto base_masses = detail::control_base_masses(model.family, control);
  for (std::size_t k = 0; k < lattice.size(); ++k) {
    if (lw[k] == -std::numeric_limits<double>::infinity()) continue;
    lw[k] += detail::log_pin_factor(model.a, control, base_masses, sample, xs, lattice.theta(k));
  }
  return PosteriorGrid(lattice, lw);
}

inline PosteriorGrid pinned_posterior(const TransformModel& model, const ControlSets& control, const Sample& sample) {
  return pinned_posterior(model, control, sample, make_lattice(sample, model.lattice));
}

/// Residuals and bandwidths for the pinned model. Bandwidths default to the
/// delta method on the pinned posterior.
inline ResidualFit fit_pinned_residuals(const TransformModel& model, const ControlSets& control, const Sample& sample) {
  return detail::finish_residual_fit(model, sample, pinned_posterior(model, control, sample));
}

/// z_j {a z_j/G0(B_j) g0(y) + n g_n(y)} / {a z_j + n G_n(B_j)} for y inside B_j.
inline double pinned_residual_density(const TransformModel& model, const ControlSets& control, const ResidualFit& fit,
                                      double y) {
  const std::size_t j = control.interior_set_of(y);
  const auto [lo, hi] = control.bounds(j);
  const double z = control.mass(j);
  const double n = static_cast<double>(fit.residuals.size());
  const double gn = variable_kde(fit.residuals, fit.bandwidths, y);
  const double in_set = detail::count_in(fit.residuals, lo, hi);
  if (model.a == 0.0) {
    if (in_set == 0.0) throw DegeneratePosterior("no residuals in the control set and a = 0");
    return z * n * gn / in_set;
  }
  const double g0_mass = model.family.base().mass(lo, hi);
  return z * (model.a * (z / g0_mass) * model.family.base().pdf(y) + n * gn) / (model.a * z + in_set);
}

inline double pinned_residual_density(const TransformModel& model, const ControlSets& control, const Sample& sample,
                                      double y) {
  return pinned_residual_density(model, control, fit_pinned_residuals(model, control, sample), y);
}

/// Bayes quantile estimate mu_hat + sigma_hat c_p under control sets
/// (-inf, c_p], (c_p, inf) with masses (p, 1-p).
inline double pinned_quantile_estimate(const TransformModel& model, const Sample& sample, double p) {
  if (!(p > 0.0 && p < 1.0)) throw DomainError("quantile level p must lie in (0,1)");
  const double cp = model.family.standard_quantile(p);
  const ControlSets control({cp}, {p, 1.0 - p});
  const Theta th = pinned_posterior(model, control, sample).mean();
  return th.mu + th.sigma * cp;
}

}  // namespace bayesdens
