#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "bayesdens/density.hpp"
#include "bayesdens/errors.hpp"
#include "bayesdens/family.hpp"
#include "bayesdens/kernels.hpp"
#include "bayesdens/normal.hpp"
#include "bayesdens/posterior_grid.hpp"
#include "bayesdens/quadrature.hpp"
#include "bayesdens/rng.hpp"
#include "bayesdens/sample.hpp"

namespace bayesdens {

// ------------------------------------------------------------ local likelihood

/// sum_i Kbar((x_i - x)/h) log f(x_i) - n * window_integral, with
/// Kbar = K/K(0) and window_integral = int Kbar((t - x)/h) f(t) dt.
template <class Pdf>
double local_loglik(const Sample& sample, const KernelSpec& kernel, double h, double x, const Pdf& f_at,
                    double window_integral) {
  detail::check_bandwidth(h);
  double s = 0.0;
  bool dead = false;
  detail::for_each_in_window(sample, kernel, h, x, [&](double xi) {
    const double w = kernel.normalized((xi - x) / h);
    if (w == 0.0 || dead) return;
    const double f = f_at(xi);
    if (!(f > 0.0)) {
      dead = true;
      return;
    }
    s += w * std::log(f);
  });
  if (dead) return -std::numeric_limits<double>::infinity();
  return s - static_cast<double>(sample.size()) * window_integral;
}

/// Local constant f(t, theta) = theta on [lo, hi] (the whole line by default).
struct ConstantVehicle {
  double lo = -std::numeric_limits<double>::infinity();
  double hi = std::numeric_limits<double>::infinity();

  double pdf(double t, double theta) const { return (t >= lo && t <= hi) ? theta : 0.0; }

  /// int Kbar((t - x)/h) dt over [lo, hi].
  double window(const KernelSpec& kernel, double h, double x) const {
    return h / kernel.k0() * (kernel.cdf((hi - x) / h) - kernel.cdf((lo - x) / h));
  }
};

inline double local_loglik(const ConstantVehicle& vehicle, const Sample& sample, const KernelSpec& kernel, double h,
                           double x, double theta) {
  if (!(theta > 0.0)) return -std::numeric_limits<double>::infinity();
  return local_loglik(sample, kernel, h, x, [&](double t) { return vehicle.pdf(t, theta); },
                      theta * vehicle.window(kernel, h, x));
}

/// Location-scale vehicle f(t, theta) = sigma^-1 g0((t - mu)/sigma).
inline double local_loglik(const LocationScaleFamily& family, const Sample& sample, const KernelSpec& kernel, double h,
                           double x, Theta theta) {
  detail::check_bandwidth(h);
  double window;
  if (family.is_normal()) {
    window = h / kernel.k0() * kernel.convolve_normal(x, h, theta.mu, theta.sigma);
  } else {
    window = h / kernel.k0() * convolve(family.at(theta), kernel, h, x);
  }
  return local_loglik(sample, kernel, h, x, [&](double t) { return family.pdf(t, theta); }, window);
}

/// Local posterior on a (mu, sigma) lattice: prior times the local likelihood.
inline PosteriorGrid local_posterior(const LocationScaleFamily& family, const Sample& sample, const KernelSpec& kernel,
                                     double h, double x, const ParamLattice& lattice, const LogPrior& prior = {}) {
  std::vector<double> lw(lattice.size());
  for (std::size_t k = 0; k < lattice.size(); ++k) lw[k] = local_loglik(family, sample, kernel, h, x, lattice.theta(k));
  detail::add_log_prior(lw, lattice, prior);
  return PosteriorGrid(lattice, lw);
}

/// Local posterior of the constant level on a grid of theta values; the
/// lattice's first axis holds theta and its second axis is a single dummy.
inline PosteriorGrid local_posterior(const ConstantVehicle& vehicle, const Sample& sample, const KernelSpec& kernel,
                                     double h, double x, std::vector<double> thetas,
                                     const std::function<double(double)>& log_prior = {}) {
  ParamLattice lattice(std::move(thetas), {1.0});
  std::vector<double> lw(lattice.size());
  for (std::size_t k = 0; k < lattice.size(); ++k) {
    const double th = lattice.first(k);
    lw[k] = local_loglik(vehicle, sample, kernel, h, x, th) + (log_prior ? log_prior(th) : 0.0);
  }
  return PosteriorGrid(lattice, lw);
}

/// Full Poisson-form likelihood of the constant model, prod theta * exp(-n theta |[lo, hi]|),
/// on the same kind of theta grid.
inline PosteriorGrid constant_full_posterior(const ConstantVehicle& vehicle, const Sample& sample,
                                             std::vector<double> thetas,
                                             const std::function<double(double)>& log_prior = {}) {
  if (!std::isfinite(vehicle.hi - vehicle.lo)) throw DomainError("full constant likelihood needs a bounded support");
  ParamLattice lattice(std::move(thetas), {1.0});
  const double n = static_cast<double>(sample.size());
  const bool inside = sample.min() >= vehicle.lo && sample.max() <= vehicle.hi;
  std::vector<double> lw(lattice.size());
  for (std::size_t k = 0; k < lattice.size(); ++k) {
    const double th = lattice.first(k);
    lw[k] = inside && th > 0.0 ? n * std::log(th) - n * th * (vehicle.hi - vehicle.lo)
                               : -std::numeric_limits<double>::infinity();
    if (log_prior) lw[k] += log_prior(th);
  }
  return PosteriorGrid(lattice, lw);
}

// ------------------------------------------------------------- level variants

namespace detail {

inline void check_strength(double c) {
  if (!(c >= 0.0)) throw DomainError("local prior strength c must be nonnegative");
}

/// nh/k0, the local sample size in the Gamma posteriors.
inline double local_size(const Sample& sample, const KernelSpec& kernel, double h) {
  return static_cast<double>(sample.size()) * h / kernel.k0();
}

}  // namespace detail

struct GammaPosterior {
  double shape;
  double rate;
  double mean() const { return shape / rate; }
  double variance() const { return shape / (rate * rate); }
};

/// Gamma{c f0(x) + nh f_n(x)/k0, c + nh/k0} for the local level.
inline GammaPosterior local_const_posterior(double c, double f0x, const Sample& sample, const KernelSpec& kernel,
                                            double h, double x) {
  detail::check_strength(c);
  const double m = detail::local_size(sample, kernel, h);
  return {c * f0x + m * kde(sample, kernel, h, x), c + m};
}

/// {c f0(x) + nh f_n(x)/k0}/{c + nh/k0}, computed as a convex combination so
/// that c = 0 returns f_n(x) exactly.
inline double local_const_estimate(double c, double f0x, const Sample& sample, const KernelSpec& kernel, double h,
                                   double x) {
  detail::check_strength(c);
  const double m = detail::local_size(sample, kernel, h);
  const double w = c / (c + m);
  const double fn = kde(sample, kernel, h, x);
  return w == 0.0 ? fn : w * f0x + (1.0 - w) * fn;
}

inline double local_const_estimate(double c, const UnivariateDensity& f0, const Sample& sample, const KernelSpec& kernel,
                                   double h, double x) {
  return local_const_estimate(c, f0.pdf(x), sample, kernel, h, x);
}

/// Predictive density of the background model at x, sum_k pi_k f0(x, xi_k).
inline double background_predictive(const LocationScaleFamily& family, const PosteriorGrid& background, double x) {
  double s = 0.0;
  for (std::size_t k = 0; k < background.size(); ++k) {
    if (background.mass(k) > 0.0) s += background.mass(k) * family.pdf(x, background.theta(k));
  }
  return s;
}

/// c/(c + nh/k0) E{f0(x, xi) | data} + (nh/k0)/(c + nh/k0) f_n(x).
inline double local_two_stage_estimate(double c, const LocationScaleFamily& family, const PosteriorGrid& background,
                                       const Sample& sample, const KernelSpec& kernel, double h, double x) {
  return local_const_estimate(c, background_predictive(family, background, x), sample, kernel, h, x);
}

// ------------------------------------------------------------------ local slope

struct NormalPosterior {
  double mean;
  double variance;
};

/// Approximate normal posterior of the local log-slope beta with prior
/// N(beta0, 1/w0^2); w0 = 0 is the flat prior and w0 = inf a point mass.
inline NormalPosterior local_slope_posterior(const Sample& sample, const KernelSpec& kernel, double h, double x,
                                             double beta0, double w0) {
  if (kernel.id() != KernelId::gaussian) throw DomainError("the local slope posterior requires the gaussian kernel");
  if (!(w0 >= 0.0)) throw DomainError("slope prior precision root w0 must be nonnegative");
  if (std::isinf(w0)) return {beta0, 0.0};
  const double fn = kde(sample, kernel, h, x);
  if (!(fn > 0.0)) throw NoLocalData("no observations carry weight near x = " + std::to_string(x));
  const double gn = kde_deriv(sample, kernel, h, x);
  const double n = static_cast<double>(sample.size());
  const double info = n * h * h * h * fn / kernel.k0();
  const double prec = w0 * w0 + info;
  return {(w0 * w0 * beta0 + n * h * h * h * gn / kernel.k0()) / prec, 1.0 / prec};
}

/// f_n(x) exp{-h^2 mu^2 / (2(1 + h^2 s2))} / sqrt(1 + h^2 s2).
inline double local_slope_adjust(double fn, double h, const NormalPosterior& post) {
  const double q = 1.0 + h * h * post.variance;
  return fn * std::exp(-0.5 * h * h * post.mean * post.mean / q) / std::sqrt(q);
}

inline double local_slope_estimate(const Sample& sample, const KernelSpec& kernel, double h, double x, double beta0,
                                   double w0) {
  const auto post = local_slope_posterior(sample, kernel, h, x, beta0, w0);
  return local_slope_adjust(kde(sample, kernel, h, x), h, post);
}

// --------------------------------------------------------- correction factors

/// f0(x) {c + nh f_n(x)/k0} / {c + nh (K * f0)(x)/k0}, Gamma(c, c) prior on the multiplier.
inline double guess_times_const_estimate(double c, const UnivariateDensity& f0, const Sample& sample,
                                         const KernelSpec& kernel, double h, double x) {
  detail::check_strength(c);
  const double f0x = f0.pdf(x);
  if (!(f0x > 0.0)) throw SingularStartDensity("start density vanishes at x = " + std::to_string(x));
  const double m = detail::local_size(sample, kernel, h);
  return f0x * (c + m * kde(sample, kernel, h, x)) / (c + m * convolve(f0, kernel, h, x));
}

/// f0(x) {c + nh f0(x) r_n(x)/k0}/{c + nh f0(x)/k0}; c = 0 gives f0(x) r_n(x).
template <class F0>
double altkernel_estimate(double c, const F0& f0, const Sample& sample, const KernelSpec& kernel, double h, double x) {
  detail::check_strength(c);
  const double f0x = f0(x);
  if (!(f0x > 0.0)) throw SingularStartDensity("start density vanishes at x = " + std::to_string(x));
  const double rn = correction_kde(sample, kernel, h, f0, x);
  const double a = detail::local_size(sample, kernel, h) * f0x;
  const double w = c / (c + a);
  return w == 0.0 ? f0x * rn : w * f0x + (1.0 - w) * f0x * rn;
}

inline double altkernel_estimate(double c, const UnivariateDensity& f0, const Sample& sample, const KernelSpec& kernel,
                                 double h, double x) {
  return altkernel_estimate(c, [&](double t) { return f0.pdf(t); }, sample, kernel, h, x);
}

/// Background-averaged correction estimator: sum_k pi_k f(x, xi_k) {c + nh f r_n/k0}/{c + nh f/k0}.
/// With c = 0 this is n^-1 sum_i K_h(x_i - x) E{f(x, xi)/f(x_i, xi) | data}. Lattice
/// points whose mass is below `prune` times the largest are skipped.
inline double altkernel_estimate(double c, const LocationScaleFamily& family, const PosteriorGrid& background,
                                 const Sample& sample, const KernelSpec& kernel, double h, double x,
                                 double prune = 1e-14) {
  detail::check_strength(c);
  detail::check_bandwidth(h);
  const double m = detail::local_size(sample, kernel, h);
  const double n = static_cast<double>(sample.size());
  double s = 0.0, used = 0.0;
  for (std::size_t k : background.support(prune)) {
    const Theta t = background.theta(k);
    const double fx = family.pdf(x, t);
    double rn = 0.0;
    detail::for_each_in_window(sample, kernel, h, x, [&](double xi) {
      const double k_h = kernel((xi - x) / h);
      if (k_h == 0.0) return;
      const double fi = family.pdf(xi, t);
      if (!(fi > 0.0)) throw SingularStartDensity("background density vanishes at a data point");
      rn += k_h / fi;
    });
    rn /= n * h;
    const double a = m * fx;
    const double w = (c == 0.0 || a == std::numeric_limits<double>::infinity()) ? 0.0 : c / (c + a);
    s += background.mass(k) * (w * fx + (1.0 - w) * fx * rn);
    used += background.mass(k);
  }
  return s / used;
}

// --------------------------------------------------------------- running normal

struct RunningNormalResult {
  double estimate;
  double delta_mean;  // posterior mean of delta = mu - x
  double error;       // quadrature error bound on the estimate
};

/// Local normal(mu, sigma^2) with sigma known and mu ~ N(mu0, tau^2), gaussian
/// kernel; the posterior of delta = mu - x is integrated numerically.
inline RunningNormalResult running_normal(const Sample& sample, double h, double x, double sigma, double mu0,
                                          double tau) {
  detail::check_bandwidth(h);
  if (!(sigma > 0.0)) throw DomainError("running normal needs sigma > 0");
  if (!(tau >= 0.0)) throw DomainError("running normal needs tau >= 0");
  if (tau == 0.0) return {normal_pdf(x, mu0, sigma), mu0 - x, 0.0};
  const auto kernel = KernelSpec::gaussian();
  const double fn = kde(sample, kernel, h, x);
  if (!(fn > 0.0)) throw NoLocalData("no observations carry weight near x = " + std::to_string(x));
  const double gn = kde_deriv(sample, kernel, h, x);
  const double n = static_cast<double>(sample.size());
  const double A = n * h * fn / kInvSqrt2Pi / (sigma * sigma);
  const double b = h * h * gn / fn;
  const double s2 = sigma * sigma + h * h;
  const double B = n * h / std::sqrt(s2);
  const double d0 = mu0 - x;
  const double prior_prec = std::isinf(tau) ? 0.0 : 1.0 / (tau * tau);
  auto log_post = [&](double d) {
    return -0.5 * prior_prec * (d - d0) * (d - d0) - 0.5 * A * (d - b) * (d - b) - B * std::exp(-0.5 * d * d / s2);
  };

  // Bracket the posterior: the Gaussian part fixes the scale, the window term
  // can shift the mode by up to a few sqrt(s2).
  const double prec = prior_prec + A;
  const double center = (prior_prec * d0 + A * b) / prec;
  const double width = 1.0 / std::sqrt(prec);
  const double lo0 = std::min(center, 0.0) - 40.0 * width - 10.0 * std::sqrt(s2);
  const double hi0 = std::max(center, 0.0) + 40.0 * width + 10.0 * std::sqrt(s2);
  double top = -std::numeric_limits<double>::infinity(), mode = center;
  const int scan = 4000;
  for (int i = 0; i <= scan; ++i) {
    const double d = lo0 + (hi0 - lo0) * i / scan;
    const double v = log_post(d);
    if (v > top) {
      top = v;
      mode = d;
    }
  }
  // Trim to where the log-posterior is within 60 nats of the top.
  const double step = (hi0 - lo0) / scan;
  double lo = mode, hi = mode;
  while (lo > lo0 && log_post(lo) > top - 60.0) lo -= step;
  while (hi < hi0 && log_post(hi) > top - 60.0) hi += step;
  const std::vector<double> bp = {lo, mode, hi};
  // The weight peaks at 1, so each integrand is bounded by its factor's
  // maximum times (hi - lo); tolerances are relative to those bounds.
  const double tol = 1e-12 * (hi - lo);
  auto weight = [&](double d) { return std::exp(log_post(d) - top); };
  const auto z = integrate(weight, std::span<const double>(bp), {tol, 8000});
  const auto num = integrate([&](double d) { return weight(d) * normal_pdf(d, 0.0, sigma); }, std::span<const double>(bp),
                             {tol * normal_pdf(0.0, 0.0, sigma), 8000});
  const auto dm = integrate([&](double d) { return weight(d) * d; }, std::span<const double>(bp),
                            {tol * std::max(std::abs(lo), std::abs(hi)), 8000});
  const double est = num.value / z.value;
  const double err = (num.error + est * z.error) / z.value;
  return {est, dm.value / z.value, err};
}

inline double running_normal_estimate(const Sample& sample, double h, double x, double sigma, double mu0, double tau) {
  return running_normal(sample, h, x, sigma, mu0, tau).estimate;
}

// --------------------------------------------------------------- empirical Bayes

/// Deciles of the sample with duplicates removed.
inline std::vector<double> default_checking_positions(const Sample& sample) {
  std::vector<double> pos;
  for (int k = 1; k <= 9; ++k) {
    const double q = sample.quantile(k / 10.0);
    if (pos.empty() || q > pos.back()) pos.push_back(q);
  }
  return pos;
}

/// Q = m^-1 sum_j {f_n(x'_j) - f0(x'_j)}^2 / f0(x'_j), a rough estimate of 1/c.
template <class F0>
double q_statistic(const Sample& sample, const KernelSpec& kernel, double h, const F0& f0,
                   std::span<const double> positions) {
  if (positions.empty()) throw DomainError("at least one checking position is required");
  std::vector<double> sorted(positions.begin(), positions.end());
  std::sort(sorted.begin(), sorted.end());
  if (std::adjacent_find(sorted.begin(), sorted.end()) != sorted.end()) {
    throw DomainError("checking positions must be distinct");
  }
  double s = 0.0;
  for (double p : positions) {
    const double f0p = f0(p);
    if (!(f0p > 0.0)) throw SingularStartDensity("start density vanishes at checking position " + std::to_string(p));
    const double d = kde(sample, kernel, h, p) - f0p;
    s += d * d / f0p;
  }
  return s / static_cast<double>(positions.size());
}

/// {1 + (nh/k0)Q}^-1 f0(x) + (nh/k0)Q {1 + (nh/k0)Q}^-1 f_n(x).
inline double eb_mixture(double q, double local_size, double f0x, double fnx) {
  if (!(q >= 0.0)) throw DomainError("Q must be nonnegative");
  const double t = local_size * q;
  if (t == 0.0) return f0x;
  if (std::isinf(t)) return fnx;
  return f0x / (1.0 + t) + t / (1.0 + t) * fnx;
}

inline double empirical_bayes_estimate(const UnivariateDensity& f0, const Sample& sample, const KernelSpec& kernel,
                                       double h, std::span<const double> positions, double x) {
  const double q = q_statistic(sample, kernel, h, [&](double t) { return f0.pdf(t); }, positions);
  return eb_mixture(q, detail::local_size(sample, kernel, h), f0.pdf(x), kde(sample, kernel, h, x));
}

/// Hierarchical version: B start densities f(., xi_b) drawn from the
/// background posterior, each with its own Q, averaged at the end.
class EmpiricalBayesFit {
 public:
  EmpiricalBayesFit(const LocationScaleFamily& family, const PosteriorGrid& background, const Sample& sample,
                    const KernelSpec& kernel, double h, std::span<const double> positions, std::size_t draws,
                    std::uint64_t seed)
      : family_(family), sample_(sample), kernel_(kernel), h_(h) {
    if (draws < 1) throw DomainError("hierarchical empirical Bayes needs B >= 1");
    Rng rng = make_rng(seed, 0x4542);
    for (std::size_t b = 0; b < draws; ++b) {
      const Theta t = background.theta(background.draw(rng));
      thetas_.push_back(t);
      qs_.push_back(q_statistic(sample, kernel, h, [&](double u) { return family.pdf(u, t); }, positions));
    }
  }

  double operator()(double x) const {
    const double fn = kde(sample_, kernel_, h_, x);
    const double m = detail::local_size(sample_, kernel_, h_);
    double s = 0.0;
    for (std::size_t b = 0; b < thetas_.size(); ++b) s += eb_mixture(qs_[b], m, family_.pdf(x, thetas_[b]), fn);
    return s / static_cast<double>(thetas_.size());
  }

  std::span<const Theta> draws() const noexcept { return thetas_; }
  std::span<const double> q_values() const noexcept { return qs_; }

 private:
  LocationScaleFamily family_;
  const Sample& sample_;
  KernelSpec kernel_;
  double h_;
  std::vector<Theta> thetas_;
  std::vector<double> qs_;
};

// ------------------------------------------------------------------ dispatcher

enum class LocalVariant { const_gamma, const_two_stage, level_slope, guess_times_const, altkernel, running_normal };

inline LocalVariant local_variant_from_name(const std::string& name) {
  if (name == "const" || name == "const-gamma") return LocalVariant::const_gamma;
  if (name == "two-stage" || name == "const-two-stage") return LocalVariant::const_two_stage;
  if (name == "slope" || name == "level-slope") return LocalVariant::level_slope;
  if (name == "guess-times-const") return LocalVariant::guess_times_const;
  if (name == "altkernel") return LocalVariant::altkernel;
  if (name == "running-normal") return LocalVariant::running_normal;
  throw DomainError("unknown local variant '" + name + "'");
}

/// Bandwidth, kernel and local prior parameters for one local estimator.
struct LocalSpec {
  LocalVariant variant = LocalVariant::const_gamma;
  double h = 0.5;
  KernelSpec kernel = KernelSpec::gaussian();
  double c = 0.0;       // Gamma strength
  double beta0 = 0.0;   // slope prior mean
  double w0 = 0.0;      // slope prior precision root
  double mu0 = 0.0;     // running-normal prior mean
  double tau = 1.0;     // running-normal prior sd
  double sigma = 1.0;   // running-normal known sd

  void validate() const {
    detail::check_bandwidth(h);
    detail::check_strength(c);
    if (!(w0 >= 0.0) || !(tau >= 0.0) || !(sigma > 0.0)) throw DomainError("invalid local prior parameters");
  }
};

/// Start information for the local estimators: a fixed f0 and/or a
/// background family with its posterior.
struct LocalContext {
  const Sample& sample;
  std::optional<UnivariateDensity> f0;
  std::optional<LocationScaleFamily> family;
  std::optional<PosteriorGrid> background;
};

inline double local_estimate(const LocalSpec& spec, const LocalContext& ctx, double x) {
  spec.validate();
  auto need_f0 = [&]() -> const UnivariateDensity& {
    if (!ctx.f0) throw DomainError("this local variant needs a start density f0");
    return *ctx.f0;
  };
  switch (spec.variant) {
    case LocalVariant::const_gamma:
      return local_const_estimate(spec.c, need_f0(), ctx.sample, spec.kernel, spec.h, x);
    case LocalVariant::const_two_stage:
      if (!ctx.family || !ctx.background) throw DomainError("two-stage variant needs a background posterior");
      return local_two_stage_estimate(spec.c, *ctx.family, *ctx.background, ctx.sample, spec.kernel, spec.h, x);
    case LocalVariant::level_slope:
      return local_slope_estimate(ctx.sample, spec.kernel, spec.h, x, spec.beta0, spec.w0);
    case LocalVariant::guess_times_const:
      return guess_times_const_estimate(spec.c, need_f0(), ctx.sample, spec.kernel, spec.h, x);
    case LocalVariant::altkernel:
      if (ctx.family && ctx.background) {
        return altkernel_estimate(spec.c, *ctx.family, *ctx.background, ctx.sample, spec.kernel, spec.h, x);
      }
      return altkernel_estimate(spec.c, need_f0(), ctx.sample, spec.kernel, spec.h, x);
    case LocalVariant::running_normal:
      return running_normal_estimate(ctx.sample, spec.h, x, spec.sigma, spec.mu0, spec.tau);
  }
  throw DomainError("unknown local variant");
}

}  // namespace bayesdens
