#pragma once

#include <cmath>
#include <cstdint>
#include <limits>
#include <numbers>
#include <span>
#include <sstream>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "bayesdens/errors.hpp"
#include "bayesdens/normal.hpp"
#include "bayesdens/rng.hpp"
#include "bayesdens/sample.hpp"

namespace bayesdens {

/// Probabilists' Hermite polynomial H_j(x) by the three-term recurrence.
inline double hermite_poly(int j, double x) {
  if (j < 0) throw DomainError("hermite_poly: order must be nonnegative");
  if (j == 0) return 1.0;
  double prev = 1.0, cur = x;
  for (int k = 1; k < j; ++k) {
    const double next = x * cur - k * prev;
    prev = cur;
    cur = next;
  }
  return cur;
}

/// H_0(x), ..., H_m(x).
inline std::vector<double> hermite_polys(int m, double x) {
  std::vector<double> h(static_cast<std::size_t>(m) + 1);
  h[0] = 1.0;
  if (m >= 1) h[1] = x;
  for (int k = 1; k < m; ++k) h[k + 1] = x * h[k] - k * h[k - 1];
  return h;
}

inline double factorial(int j) { return std::tgamma(j + 1.0); }

enum class HermiteVariant { straight, robust };

/// Hermite-corrected normal density. Straight: coefficients hold gamma_3..gamma_m
/// (gamma_0 = 1, gamma_1 = gamma_2 = 0 are implicit). Robust: delta_0..delta_m.
struct HermiteModel {
  HermiteVariant variant;
  double mu;
  double sigma;
  std::vector<double> coefficients;

  static HermiteModel straight(double mu, double sigma, std::vector<double> gammas_from_3) {
    return {HermiteVariant::straight, mu, sigma, std::move(gammas_from_3)};
  }
  static HermiteModel robust(double mu, double sigma, std::vector<double> deltas) {
    if (deltas.empty()) throw DomainError("robust Hermite model needs delta_0");
    return {HermiteVariant::robust, mu, sigma, std::move(deltas)};
  }

  int order() const {
    const int c = static_cast<int>(coefficients.size());
    return variant == HermiteVariant::straight ? (c == 0 ? 2 : c + 2) : c - 1;
  }
};

/// Value of the expansion at x; may be negative away from the normal.
inline double eval_density(const HermiteModel& model, double x) {
  if (!(model.sigma > 0.0)) throw DomainError("Hermite model needs sigma > 0");
  const double u = (x - model.mu) / model.sigma;
  const double base = phi(u) / model.sigma;
  if (model.variant == HermiteVariant::straight) {
    const int m = model.order();
    const auto h = hermite_polys(m, u);
    double s = 1.0;
    for (int j = 3; j <= m; ++j) s += model.coefficients[j - 3] / factorial(j) * h[j];
    return base * s;
  }
  const int m = model.order();
  const auto h = hermite_polys(m, std::numbers::sqrt2 * u);
  double s = 0.0;
  for (int j = 0; j <= m; ++j) s += model.coefficients[j] * h[j] / std::sqrt(factorial(j));
  return base * s;
}

/// int phi(u) H_j(sqrt(2) u) du: (j-1)!! for even j, zero for odd j.
inline double robust_basis_mass(int j) {
  if (j % 2 == 1) return 0.0;
  double s = 1.0;
  for (int k = j - 1; k > 1; k -= 2) s *= k;
  return s;
}

/// Total mass of a robust expansion, sum_j delta_j (j-1)!!/sqrt(j!) over even j.
inline double robust_total_mass(std::span<const double> deltas) {
  double s = 0.0;
  for (std::size_t j = 0; j < deltas.size(); j += 2) s += deltas[j] * robust_basis_mass(static_cast<int>(j)) / std::sqrt(factorial(static_cast<int>(j)));
  return s;
}

/// gamma_j = mean of H_j((x_i - mu)/sigma) for j = 3..m.
inline std::vector<double> straight_coeffs(const Sample& sample, double mu, double sigma, int m) {
  if (!(sigma > 0.0)) throw DomainError("straight_coeffs: sigma must be positive");
  std::vector<double> g(m >= 3 ? static_cast<std::size_t>(m - 2) : 0u, 0.0);
  for (double x : sample.values()) {
    const auto h = hermite_polys(m, (x - mu) / sigma);
    for (int j = 3; j <= m; ++j) g[j - 3] += h[j];
  }
  for (double& v : g) v /= static_cast<double>(sample.size());
  return g;
}

/// delta_j = sqrt(2) mean of H_j(sqrt(2) y_i) exp(-y_i^2/2) / sqrt(j!), y_i = (x_i - mu)/sigma.
inline std::vector<double> robust_coeffs(const Sample& sample, double mu, double sigma, int m) {
  if (!(sigma > 0.0)) throw DomainError("robust_coeffs: sigma must be positive");
  if (m < 0) throw DomainError("robust_coeffs: order must be nonnegative");
  std::vector<double> d(static_cast<std::size_t>(m) + 1, 0.0);
  for (double x : sample.values()) {
    const double y = (x - mu) / sigma;
    const double damp = std::exp(-0.5 * y * y);
    if (damp == 0.0) continue;  // the polynomial factor cannot overcome the underflow
    const auto h = hermite_polys(m, std::numbers::sqrt2 * y);
    for (int j = 0; j <= m; ++j) d[j] += h[j] * damp;
  }
  for (int j = 0; j <= m; ++j) d[j] *= std::numbers::sqrt2 / (static_cast<double>(sample.size()) * std::sqrt(factorial(j)));
  return d;
}

// ------------------------------------------------------- (mu, sigma) posterior

/// Approximate binormal posterior for (mu/sigma*, log sigma) built from the
/// sample mean, sd, skewness and excess kurtosis.
struct MuSigmaPosterior {
  double mean_star;
  double sd_star;
  double skewness;
  double kurtosis;
  Eigen::Vector2d center;  // (mu*/sigma*, log sigma*)
  Eigen::Matrix2d covariance;
  bool regularized = false;
};

/// Posterior from summary statistics: mean, sd, skewness, excess kurtosis and n.
inline MuSigmaPosterior musigma_posterior(double mean, double sd, double skewness, double kurtosis, std::size_t n) {
  if (n < 8) throw DomainError("the (mu, sigma) posterior approximation needs n >= 8");
  if (!(sd > 0.0)) throw DomainError("the (mu, sigma) posterior approximation needs a positive sd");
  MuSigmaPosterior p{};
  p.mean_star = mean;
  p.sd_star = sd;
  p.skewness = skewness;
  p.kurtosis = kurtosis;
  double g4 = kurtosis;
  // Positive definiteness needs 1/2 + g4/4 > g3^2/4.
  if (!(g4 > skewness * skewness - 2.0 + 0.04)) {
    p.regularized = true;
    g4 = skewness * skewness - 2.0 + 0.04;
  }
  p.center << mean / sd, std::log(sd);
  p.covariance << 1.0, 0.5 * skewness, 0.5 * skewness, 0.5 + 0.25 * g4;
  p.covariance /= static_cast<double>(n);
  return p;
}

inline MuSigmaPosterior musigma_posterior(const Sample& sample) {
  const std::size_t n = sample.size();
  if (n < 8) throw DomainError("the (mu, sigma) posterior approximation needs n >= 8");
  const double mean = sample.mean();
  double m2 = 0.0, m3 = 0.0, m4 = 0.0;
  for (double x : sample.values()) {
    const double d = x - mean;
    m2 += d * d;
    m3 += d * d * d;
    m4 += d * d * d * d;
  }
  m2 /= static_cast<double>(n);
  m3 /= static_cast<double>(n);
  m4 /= static_cast<double>(n);
  if (!(m2 > 0.0)) throw DomainError("the (mu, sigma) posterior approximation needs a positive sd");
  return musigma_posterior(mean, sample.sd(), m3 / std::pow(m2, 1.5), m4 / (m2 * m2) - 3.0, n);
}

struct MuSigmaDraw {
  double mu;
  double sigma;
};

inline std::vector<MuSigmaDraw> musigma_posterior_draws(const MuSigmaPosterior& post, std::size_t count, std::uint64_t seed) {
  const Eigen::Matrix2d L = post.covariance.llt().matrixL();
  Rng rng = make_rng(seed, 0x4d55);
  std::vector<MuSigmaDraw> draws(count);
  for (auto& d : draws) {
    Eigen::Vector2d z;
    z[0] = standard_normal(rng);
    z[1] = standard_normal(rng);
    const Eigen::Vector2d u = post.center + L * z;
    d = {u[0] * post.sd_star, std::exp(u[1])};
  }
  return draws;
}

inline std::vector<MuSigmaDraw> musigma_posterior_draws(const Sample& sample, std::size_t count, std::uint64_t seed) {
  return musigma_posterior_draws(musigma_posterior(sample), count, seed);
}

// ------------------------------------------------------------- Bayes estimate

/// Independent normal priors on delta_0..delta_m.
struct CoefficientPrior {
  std::vector<double> means;
  std::vector<double> sds;

  /// delta_0 ~ N(1, 0.05^2), delta_j ~ N(0, (0.2/j)^2).
  static CoefficientPrior robust_default(int m) {
    CoefficientPrior p;
    for (int j = 0; j <= m; ++j) {
      p.means.push_back(j == 0 ? 1.0 : 0.0);
      p.sds.push_back(j == 0 ? 0.05 : 0.2 / j);
    }
    return p;
  }

  static CoefficientPrior point_mass_normal(int m) {
    CoefficientPrior p;
    for (int j = 0; j <= m; ++j) {
      p.means.push_back(j == 0 ? 1.0 : 0.0);
      p.sds.push_back(0.0);
    }
    return p;
  }
};

enum class HermiteProposal { laplace, prior };

struct HermiteBayesOptions {
  HermiteProposal proposal = HermiteProposal::laplace;
  double inflation = 1.25;  // scale on the Laplace proposal sd
  double min_ess = 10.0;
};

/// Per-(mu, sigma) posterior mean coefficients with their Monte Carlo covariance.
struct HermiteBayesFit {
  std::vector<MuSigmaDraw> draws;
  std::vector<std::vector<double>> delta_hat;
  std::vector<Eigen::MatrixXd> delta_mc_cov;
  double min_ess = std::numeric_limits<double>::infinity();
  int m = 0;

  struct Value {
    double value;
    double mc_se;
  };

  /// Average of the fitted curves at x and its Monte Carlo standard error
  /// from the coefficient importance sampling.
  Value at(double x) const {
    double s = 0.0, v = 0.0;
    for (std::size_t b = 0; b < draws.size(); ++b) {
      const double u = (x - draws[b].mu) / draws[b].sigma;
      const auto h = hermite_polys(m, std::numbers::sqrt2 * u);
      Eigen::VectorXd basis(m + 1);
      for (int j = 0; j <= m; ++j) basis[j] = phi(u) / draws[b].sigma * h[j] / std::sqrt(factorial(j));
      for (int j = 0; j <= m; ++j) s += basis[j] * delta_hat[b][j];
      v += basis.dot(delta_mc_cov[b] * basis);
    }
    const double B = static_cast<double>(draws.size());
    return {s / B, std::sqrt(std::max(0.0, v)) / B};
  }
};

namespace detail {

/// Basis matrix rows phi(u_i)/sigma H_j(sqrt2 u_i)/sqrt(j!).
inline Eigen::MatrixXd robust_basis(std::span<const double> xs, int m, double mu, double sigma) {
  Eigen::MatrixXd B(static_cast<Eigen::Index>(xs.size()), m + 1);
  for (std::size_t i = 0; i < xs.size(); ++i) {
    const double u = (xs[i] - mu) / sigma;
    const auto h = hermite_polys(m, std::numbers::sqrt2 * u);
    for (int j = 0; j <= m; ++j) B(static_cast<Eigen::Index>(i), j) = phi(u) / sigma * h[j] / std::sqrt(factorial(j));
  }
  return B;
}

/// Log prior plus log likelihood of the normalized expansion f_m / M(delta)
/// over the free coefficients; -inf when the expansion is not positive at
/// every observation or its total mass is not positive.
struct CoefficientPosterior {
  const Eigen::MatrixXd& basis;
  Eigen::VectorXd fixed;         // full delta with free slots ignored
  std::vector<int> free;         // indices of coefficients with sd > 0
  Eigen::VectorXd prior_mean;    // over free slots
  Eigen::VectorXd prior_prec;    // diagonal precision over free slots
  Eigen::VectorXd mass_weights;  // M(delta) = mass_weights . delta

  Eigen::VectorXd full(const Eigen::VectorXd& theta) const {
    Eigen::VectorXd d = fixed;
    for (std::size_t k = 0; k < free.size(); ++k) d[free[k]] = theta[static_cast<Eigen::Index>(k)];
    return d;
  }

  double log_lik(const Eigen::VectorXd& delta) const {
    const double mass = mass_weights.dot(delta);
    if (!(mass > 0.0)) return -std::numeric_limits<double>::infinity();
    const Eigen::VectorXd f = basis * delta;
    double s = 0.0;
    for (Eigen::Index i = 0; i < f.size(); ++i) {
      if (!(f[i] > 0.0)) return -std::numeric_limits<double>::infinity();
      s += std::log(f[i]);
    }
    return s - static_cast<double>(f.size()) * std::log(mass);
  }

  double log_prior(const Eigen::VectorXd& theta) const {
    const Eigen::VectorXd d = theta - prior_mean;
    return -0.5 * d.dot(prior_prec.cwiseProduct(d));
  }

  /// Damped Newton ascent from the prior mean; neg_hessian is the (possibly
  /// shifted) curvature at the returned point.
  bool mode(Eigen::VectorXd& theta, Eigen::MatrixXd& neg_hessian) const {
    theta = prior_mean;
    double value = log_prior(theta) + log_lik(full(theta));
    if (!std::isfinite(value)) return false;
    const auto dim = static_cast<Eigen::Index>(free.size());
    const double n = static_cast<double>(basis.rows());
    Eigen::VectorXd g(dim);
    for (Eigen::Index k = 0; k < dim; ++k) g[k] = mass_weights[free[k]];
    for (int it = 0; it < 200; ++it) {
      const Eigen::VectorXd delta = full(theta);
      const Eigen::VectorXd f = basis * delta;
      const double mass = mass_weights.dot(delta);
      Eigen::VectorXd grad = -prior_prec.cwiseProduct(theta - prior_mean) - n * g / mass;
      neg_hessian = prior_prec.asDiagonal();
      neg_hessian -= n * g * g.transpose() / (mass * mass);
      for (Eigen::Index i = 0; i < f.size(); ++i) {
        Eigen::VectorXd row(dim);
        for (Eigen::Index k = 0; k < dim; ++k) row[k] = basis(i, free[k]);
        grad += row / f[i];
        neg_hessian += row * row.transpose() / (f[i] * f[i]);
      }
      double shift = 0.0;
      Eigen::LLT<Eigen::MatrixXd> llt(neg_hessian);
      while (llt.info() != Eigen::Success) {
        shift = shift == 0.0 ? 1e-8 * (1.0 + neg_hessian.diagonal().cwiseAbs().maxCoeff()) : 10.0 * shift;
        llt.compute(neg_hessian + shift * Eigen::MatrixXd::Identity(dim, dim));
      }
      if (shift > 0.0) neg_hessian += shift * Eigen::MatrixXd::Identity(dim, dim);
      const Eigen::VectorXd step = llt.solve(grad);
      if (step.norm() <= 1e-10 * (1.0 + theta.norm())) return true;
      double t = 1.0;
      bool moved = false;
      for (int h = 0; h < 60; ++h, t *= 0.5) {
        const Eigen::VectorXd trial = theta + t * step;
        const double v = log_prior(trial) + log_lik(full(trial));
        if (v >= value) {
          theta = trial;
          moved = v > value;
          value = v;
          break;
        }
      }
      if (!moved) return true;
    }
    return true;
  }
};

}  // namespace detail

/// Posterior-mean robust Hermite curves averaged over (mu, sigma) draws. For
/// each draw the posterior mean of the mass-normalized coefficients is found
/// by self-normalized importance sampling; draws that make the expansion
/// nonpositive at an observation get weight zero.
inline HermiteBayesFit hermite_bayes_fit(const Sample& sample, const CoefficientPrior& prior, int m, std::size_t b_param,
                                         std::size_t b_coef, std::uint64_t seed, const HermiteBayesOptions& opt = {}) {
  if (m < 0) throw DomainError("Hermite order must be nonnegative");
  if (prior.means.size() != static_cast<std::size_t>(m) + 1 || prior.sds.size() != prior.means.size()) {
    throw DomainError("coefficient prior needs m+1 means and sds");
  }
  for (double s : prior.sds) {
    if (!(s >= 0.0)) throw DomainError("coefficient prior sds must be nonnegative");
  }
  if (b_param < 1 || b_coef < 1) throw DomainError("draw counts must be positive");

  HermiteBayesFit fit;
  fit.m = m;
  fit.draws = musigma_posterior_draws(sample, b_param, seed);
  const auto xs = sample.values();

  std::vector<int> free;
  for (int j = 0; j <= m; ++j) {
    if (prior.sds[j] > 0.0) free.push_back(j);
  }
  const auto dim = static_cast<Eigen::Index>(free.size());
  Eigen::VectorXd fixed(m + 1), pmean(dim), pprec(dim), psd(dim), mass_weights(m + 1);
  for (int j = 0; j <= m; ++j) {
    fixed[j] = prior.means[j];
    mass_weights[j] = robust_basis_mass(j) / std::sqrt(factorial(j));
  }
  for (Eigen::Index k = 0; k < dim; ++k) {
    pmean[k] = prior.means[free[k]];
    psd[k] = prior.sds[free[k]];
    pprec[k] = 1.0 / (psd[k] * psd[k]);
  }

  for (std::size_t b = 0; b < b_param; ++b) {
    const auto [mu, sigma] = fit.draws[b];
    const Eigen::MatrixXd basis = detail::robust_basis(xs, m, mu, sigma);
    const detail::CoefficientPosterior post{basis, fixed, free, pmean, pprec, mass_weights};

    if (dim == 0) {
      if (!std::isfinite(post.log_lik(fixed))) {
        throw UnreliablePosterior("prior point mass gives a nonpositive density at an observation");
      }
      const Eigen::VectorXd unit = fixed / mass_weights.dot(fixed);
      fit.delta_hat.emplace_back(unit.data(), unit.data() + unit.size());
      fit.delta_mc_cov.push_back(Eigen::MatrixXd::Zero(m + 1, m + 1));
      fit.min_ess = std::min(fit.min_ess, static_cast<double>(b_coef));
      continue;
    }

    // Proposal: Laplace approximation of the coefficient posterior, or the prior.
    Eigen::VectorXd center = pmean;
    Eigen::MatrixXd chol = psd.asDiagonal();
    if (opt.proposal == HermiteProposal::laplace) {
      Eigen::VectorXd mode;
      Eigen::MatrixXd neg_h;
      if (post.mode(mode, neg_h)) {
        Eigen::LLT<Eigen::MatrixXd> llt(neg_h.inverse());
        if (llt.info() == Eigen::Success) {
          center = mode;
          chol = opt.inflation * Eigen::MatrixXd(llt.matrixL());
        }
      }
    }
    const double log_det = chol.diagonal().array().abs().log().sum();
    const auto chol_solver = chol.triangularView<Eigen::Lower>();

    Rng rng = make_rng(derive_seed(seed, 0x636f6566), b);
    std::vector<double> logw(b_coef);
    std::vector<Eigen::VectorXd> thetas(b_coef);
    double top = -std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i < b_coef; ++i) {
      Eigen::VectorXd z(dim);
      for (Eigen::Index k = 0; k < dim; ++k) z[k] = standard_normal(rng);
      thetas[i] = center + chol * z;
      const double ll = post.log_lik(post.full(thetas[i]));
      if (!std::isfinite(ll)) {
        logw[i] = -std::numeric_limits<double>::infinity();
        continue;
      }
      const Eigen::VectorXd zz = chol_solver.solve(thetas[i] - center);
      const double log_q = -0.5 * zz.squaredNorm() - log_det;
      logw[i] = post.log_prior(thetas[i]) + ll - log_q;
      top = std::max(top, logw[i]);
    }
    if (!std::isfinite(top)) {
      throw UnreliablePosterior("every coefficient draw gave a nonpositive density (draw " + std::to_string(b) + ")");
    }
    double sw = 0.0, sw2 = 0.0;
    std::vector<double> w(b_coef);
    for (std::size_t i = 0; i < b_coef; ++i) {
      w[i] = std::exp(logw[i] - top);
      sw += w[i];
    }
    for (double& v : w) {
      v /= sw;
      sw2 += v * v;
    }
    const double ess = 1.0 / sw2;
    fit.min_ess = std::min(fit.min_ess, ess);
    if (ess < opt.min_ess) {
      std::ostringstream msg;
      msg << "importance sampling ESS " << ess << " < " << opt.min_ess << " at (mu, sigma) draw " << b << " = (" << mu
          << ", " << sigma << ") with " << b_coef << " coefficient draws";
      throw UnreliablePosterior(msg.str());
    }
    // Posterior mean of the normalized coefficients delta / M(delta).
    std::vector<Eigen::VectorXd> unit(b_coef);
    Eigen::VectorXd mean = Eigen::VectorXd::Zero(m + 1);
    for (std::size_t i = 0; i < b_coef; ++i) {
      if (w[i] == 0.0) continue;
      const Eigen::VectorXd d = post.full(thetas[i]);
      unit[i] = d / mass_weights.dot(d);
      mean += w[i] * unit[i];
    }
    Eigen::MatrixXd cov = Eigen::MatrixXd::Zero(m + 1, m + 1);
    for (std::size_t i = 0; i < b_coef; ++i) {
      if (w[i] == 0.0) continue;
      const Eigen::VectorXd d = unit[i] - mean;
      cov += w[i] * w[i] * d * d.transpose();
    }
    fit.delta_hat.emplace_back(mean.data(), mean.data() + mean.size());
    fit.delta_mc_cov.push_back(cov);
  }
  return fit;
}

struct HermiteEstimate {
  double value;
  double mc_se;
  double min_ess;
};

inline HermiteEstimate bayes_estimate(const Sample& sample, const CoefficientPrior& prior, int m, std::size_t b_param,
                                      std::size_t b_coef, std::uint64_t seed, double x, const HermiteBayesOptions& opt = {}) {
  const auto fit = hermite_bayes_fit(sample, prior, m, b_param, b_coef, seed, opt);
  const auto v = fit.at(x);
  return {v.value, v.mc_se, fit.min_ess};
}

}  // namespace bayesdens
