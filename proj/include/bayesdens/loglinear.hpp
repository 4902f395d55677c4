#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <numbers>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "bayesdens/errors.hpp"
#include "bayesdens/quadrature.hpp"
#include "bayesdens/rng.hpp"
#include "bayesdens/sample.hpp"

namespace bayesdens {

enum class Basis { cosine, monomial };

inline Basis basis_from_name(const std::string& name) {
  if (name == "cosine") return Basis::cosine;
  if (name == "monomial") return Basis::monomial;
  throw DomainError("unknown basis '" + name + "' (expected cosine or monomial)");
}

inline std::string basis_name(Basis b) { return b == Basis::cosine ? "cosine" : "monomial"; }

/// psi_j(x) on [0,1]: sqrt(2) cos(j pi x) or x^j.
inline double basis_eval(Basis basis, int j, double x) {
  if (!(x >= 0.0 && x <= 1.0)) throw DomainError("basis_eval: x must lie in [0,1]");
  if (j < 1) throw DomainError("basis_eval: j must be at least 1");
  if (basis == Basis::cosine) return std::numbers::sqrt2 * std::cos(j * std::numbers::pi * x);
  return std::pow(x, j);
}

namespace detail {

/// psi_1(x), ..., psi_m(x) without the range check.
inline void basis_values(Basis basis, int m, double x, double* out) {
  if (basis == Basis::cosine) {
    for (int j = 1; j <= m; ++j) out[j - 1] = std::numbers::sqrt2 * std::cos(j * std::numbers::pi * x);
  } else {
    double p = 1.0;
    for (int j = 1; j <= m; ++j) out[j - 1] = (p *= x);
  }
}

}  // namespace detail

/// Density a(c)^-1 exp{sum_j c_j psi_j(x)} on [0,1].
struct LogLinearModel {
  Basis basis = Basis::cosine;
  std::vector<double> c;

  int order() const noexcept { return static_cast<int>(c.size()); }

  double exponent(double x) const {
    double buf[64];
    const int m = order();
    if (m > 64) throw DomainError("log-linear order above 64 is not supported");
    detail::basis_values(basis, m, x, buf);
    double s = 0.0;
    for (int j = 0; j < m; ++j) s += c[j] * buf[j];
    return s;
  }
};

namespace detail {

inline double exponent_peak(const LogLinearModel& model) {
  double peak = -std::numeric_limits<double>::infinity();
  for (int i = 0; i <= 256; ++i) peak = std::max(peak, model.exponent(i / 256.0));
  return peak;
}

/// Frozen quadrature rule on [0,1] fitted to exp(s - peak).
inline QuadratureRule normalizer_rule(const LogLinearModel& model, double peak) {
  static constexpr double kBp[] = {0.0, 0.25, 0.5, 0.75, 1.0};
  // The shifted integrand has maximum 1 so its integral is at least of order
  // the width of the peak; a tight absolute tolerance is therefore relative.
  return adaptive_rule([&](double x) { return std::exp(model.exponent(x) - peak); }, std::span<const double>(kBp),
                       QuadratureOptions{1e-13, 20000});
}

}  // namespace detail

/// log a(c), evaluated with the exponent shifted by its maximum.
inline double log_normalizer(const LogLinearModel& model) {
  const double peak = detail::exponent_peak(model);
  const auto rule = detail::normalizer_rule(model, peak);
  return peak + std::log(rule.apply([&](double x) { return std::exp(model.exponent(x) - peak); }));
}

/// Derivatives of log a(c): means mu_j(c), covariance Omega(c) and the third
/// central moment tensor gamma_{jkl}(c) of psi(X) under f(., c).
struct MomentSet {
  double log_a = 0.0;
  Eigen::VectorXd mean;
  Eigen::MatrixXd cov;
  std::vector<double> third;  // m^3 entries, row-major

  double gamma(int j, int k, int l) const {
    const auto m = static_cast<std::size_t>(mean.size());
    return third[(static_cast<std::size_t>(j) * m + static_cast<std::size_t>(k)) * m + static_cast<std::size_t>(l)];
  }
};

inline MomentSet moments(const LogLinearModel& model, bool with_third = false) {
  const int m = model.order();
  const double peak = detail::exponent_peak(model);
  const auto rule = detail::normalizer_rule(model, peak);
  const std::size_t q = rule.nodes.size();
  std::vector<double> w(q);
  Eigen::MatrixXd psi(m, static_cast<Eigen::Index>(q));
  std::vector<double> buf(static_cast<std::size_t>(m));
  double total = 0.0;
  for (std::size_t i = 0; i < q; ++i) {
    detail::basis_values(model.basis, m, rule.nodes[i], buf.data());
    double s = 0.0;
    for (int j = 0; j < m; ++j) {
      psi(j, static_cast<Eigen::Index>(i)) = buf[j];
      s += model.c[j] * buf[j];
    }
    w[i] = rule.weights[i] * std::exp(s - peak);
    total += w[i];
  }
  MomentSet ms;
  ms.log_a = peak + std::log(total);
  ms.mean = Eigen::VectorXd::Zero(m);
  for (std::size_t i = 0; i < q; ++i) ms.mean += (w[i] / total) * psi.col(static_cast<Eigen::Index>(i));
  ms.cov = Eigen::MatrixXd::Zero(m, m);
  if (with_third) ms.third.assign(static_cast<std::size_t>(m) * m * m, 0.0);
  for (std::size_t i = 0; i < q; ++i) {
    const Eigen::VectorXd d = psi.col(static_cast<Eigen::Index>(i)) - ms.mean;
    const double p = w[i] / total;
    ms.cov.noalias() += p * d * d.transpose();
    if (with_third) {
      for (int j = 0; j < m; ++j) {
        for (int k = 0; k < m; ++k) {
          for (int l = 0; l < m; ++l) ms.third[(static_cast<std::size_t>(j) * m + k) * m + l] += p * d[j] * d[k] * d[l];
        }
      }
    }
  }
  ms.cov = 0.5 * (ms.cov + ms.cov.transpose());
  return ms;
}

/// Affine map of a data interval [lo, hi] onto [0.001, 0.999].
struct UnitMap {
  static constexpr double kMargin = 0.001;
  double lo = 0.0;
  double hi = 1.0;
  bool identity = true;

  static UnitMap onto_margin(double lo, double hi) {
    if (!(hi > lo)) throw DomainError("log-linear support needs hi > lo");
    return {lo, hi, false};
  }

  double to_unit(double x) const {
    return identity ? x : kMargin + (1.0 - 2.0 * kMargin) * (x - lo) / (hi - lo);
  }
  double from_unit(double t) const {
    return identity ? t : lo + (t - kMargin) * (hi - lo) / (1.0 - 2.0 * kMargin);
  }
  /// dt/dx.
  double jacobian() const { return identity ? 1.0 : (1.0 - 2.0 * kMargin) / (hi - lo); }
};

/// Observations on the unit interval with the map back to the data scale.
class LogLinearData {
 public:
  /// Data already on [0,1]; no rescaling.
  static LogLinearData unit(std::span<const double> t) {
    for (double v : t) {
      if (!(v >= 0.0 && v <= 1.0)) throw DomainError("unit-interval data must lie in [0,1]");
    }
    if (t.empty()) throw DomainError("log-linear fit needs at least one observation");
    return LogLinearData(std::vector<double>(t.begin(), t.end()), UnitMap{});
  }

  /// Maps the support (default: the data range) onto [0.001, 0.999].
  static LogLinearData rescaled(const Sample& sample, std::optional<std::pair<double, double>> support = {}) {
    double lo = sample.min(), hi = sample.max();
    if (support) {
      lo = support->first;
      hi = support->second;
      if (sample.min() < lo || sample.max() > hi) throw DomainError("observations fall outside the given support");
    } else if (!(hi > lo)) {
      lo -= 0.5;
      hi += 0.5;
    }
    const auto map = UnitMap::onto_margin(lo, hi);
    std::vector<double> t;
    t.reserve(sample.size());
    for (double x : sample.values()) t.push_back(map.to_unit(x));
    return LogLinearData(std::move(t), map);
  }

  std::span<const double> values() const noexcept { return t_; }
  std::size_t size() const noexcept { return t_.size(); }
  const UnitMap& map() const noexcept { return map_; }

  /// Empirical means of psi_1..psi_m.
  Eigen::VectorXd empirical_means(Basis basis, int m) const {
    Eigen::VectorXd mu = Eigen::VectorXd::Zero(m);
    std::vector<double> buf(static_cast<std::size_t>(m));
    for (double t : t_) {
      detail::basis_values(basis, m, t, buf.data());
      for (int j = 0; j < m; ++j) mu[j] += buf[j];
    }
    return mu / static_cast<double>(t_.size());
  }

  bool single_point() const {
    return std::all_of(t_.begin(), t_.end(), [&](double v) { return v == t_.front(); });
  }

 private:
  LogLinearData(std::vector<double> t, UnitMap map) : t_(std::move(t)), map_(map) {}

  std::vector<double> t_;
  UnitMap map_;
};

/// n sum_j c_j mu_hat_j - n log a(c).
inline double loglik(const LogLinearData& data, const LogLinearModel& model) {
  const auto mu = data.empirical_means(model.basis, model.order());
  double s = 0.0;
  for (int j = 0; j < model.order(); ++j) s += model.c[j] * mu[j];
  return static_cast<double>(data.size()) * (s - log_normalizer(model));
}

/// Normal prior on c with mean c0 and precision Omega0.
struct CoefPriorNormal {
  Eigen::VectorXd mean;
  Eigen::MatrixXd precision;

  static CoefPriorNormal flat(int m) { return {Eigen::VectorXd::Zero(m), Eigen::MatrixXd::Zero(m, m)}; }

  static CoefPriorNormal diagonal(std::vector<double> means, std::vector<double> precisions) {
    if (means.size() != precisions.size()) throw DomainError("prior means and precisions differ in length");
    CoefPriorNormal p{Eigen::Map<Eigen::VectorXd>(means.data(), static_cast<Eigen::Index>(means.size())),
                      Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(means.size()), static_cast<Eigen::Index>(means.size()))};
    for (std::size_t j = 0; j < precisions.size(); ++j) {
      if (!(precisions[j] >= 0.0)) throw DomainError("prior precisions must be nonnegative");
      p.precision(static_cast<Eigen::Index>(j), static_cast<Eigen::Index>(j)) = precisions[j];
    }
    return p;
  }

  /// c_j ~ N(c0_j, tau^2 / j^2): precision growing as j^2 shrinks high orders.
  static CoefPriorNormal shrinking(std::vector<double> means, double tau) {
    if (!(tau > 0.0)) throw DomainError("shrinking prior needs tau > 0");
    std::vector<double> prec(means.size());
    for (std::size_t j = 0; j < prec.size(); ++j) prec[j] = static_cast<double>((j + 1) * (j + 1)) / (tau * tau);
    return diagonal(std::move(means), std::move(prec));
  }

  int order() const noexcept { return static_cast<int>(mean.size()); }
};

struct LogLinearOptions {
  double tol = 1e-10;  // on max |mu_hat - mu(c)| (MLE) or on the scaled gradient (mode)
  int max_iterations = 200;
  double max_coefficient = 1e3;
};

struct LogLinearFit {
  LogLinearModel model;
  MomentSet moments;
  Eigen::VectorXd empirical_means;
  double loglik = 0.0;    // n sum c mu_hat - n log a
  double gradient_norm = 0.0;
  int iterations = 0;
};

namespace detail {

/// Damped Newton on the concave objective -0.5 (c-c0)' W (c-c0) + n(c . mu_hat - log a(c)).
/// Step halving until the objective increases, then a gradient step after 30 halvings.
inline LogLinearFit newton_fit(const LogLinearData& data, Basis basis, int m, const CoefPriorNormal& prior, bool mle,
                               const LogLinearOptions& opt) {
  if (m < 1) throw DomainError("log-linear order must be at least 1");
  if (prior.order() != m) throw DomainError("prior dimension does not match the order");
  const double n = static_cast<double>(data.size());
  const Eigen::VectorXd mu_hat = data.empirical_means(basis, m);
  const bool has_prior = prior.precision.cwiseAbs().maxCoeff() > 0.0;
  if (data.single_point() && !has_prior) {
    throw BoundaryMle("all observations coincide: the moment vector lies on the boundary and the MLE does not exist");
  }
  const double grad_scale = mle ? 1.0 : std::max({1.0, n, prior.precision.cwiseAbs().maxCoeff()});

  struct State {
    Eigen::VectorXd c;
    MomentSet ms;
    double value;
    Eigen::VectorXd grad;
  };
  auto evaluate = [&](const Eigen::VectorXd& c) {
    LogLinearModel model{basis, std::vector<double>(c.data(), c.data() + c.size())};
    State s{c, moments(model), 0.0, {}};
    const Eigen::VectorXd dc = c - prior.mean;
    s.value = n * (c.dot(mu_hat) - s.ms.log_a) - 0.5 * dc.dot(prior.precision * dc);
    s.grad = n * (mu_hat - s.ms.mean) - prior.precision * dc;
    return s;
  };
  auto residual = [&](const State& s) {
    return mle ? (mu_hat - s.ms.mean).cwiseAbs().maxCoeff() : s.grad.norm() / grad_scale;
  };
  auto boundary = [&](const char* why) {
    return BoundaryMle(std::string(why) + ": the moment vector appears to lie on the boundary of the achievable set");
  };

  State cur = [&] {
    try {
      return evaluate(has_prior ? prior.mean : Eigen::VectorXd::Zero(m));
    } catch (const QuadratureError&) {
      throw DomainError("log-linear normalizer could not be evaluated at the starting coefficients");
    }
  }();
  int it = 0;
  for (; it < opt.max_iterations && residual(cur) > opt.tol; ++it) {
    const Eigen::MatrixXd neg_h = n * cur.ms.cov + prior.precision;
    Eigen::LDLT<Eigen::MatrixXd> ldlt(neg_h);
    Eigen::VectorXd step = ldlt.solve(cur.grad);
    if (ldlt.info() != Eigen::Success || !step.allFinite()) step = cur.grad / n;
    const double res0 = residual(cur);
    bool accepted = false;
    for (int pass = 0; pass < 2 && !accepted; ++pass) {
      const Eigen::VectorXd dir = pass == 0 ? step : Eigen::VectorXd(cur.grad / std::max(1.0, cur.grad.norm()));
      double t = 1.0;
      for (int h = 0; h < 30; ++h, t *= 0.5) {
        const Eigen::VectorXd trial_c = cur.c + t * dir;
        if (trial_c.cwiseAbs().maxCoeff() > opt.max_coefficient) continue;
        State trial;
        try {
          trial = evaluate(trial_c);
        } catch (const QuadratureError&) {
          continue;
        }
        const double slack = 64.0 * std::numeric_limits<double>::epsilon() * (1.0 + std::abs(cur.value));
        if (trial.value > cur.value || (trial.value >= cur.value - slack && residual(trial) < res0)) {
          cur = std::move(trial);
          accepted = true;
          break;
        }
      }
    }
    if (!accepted) break;
    if (cur.c.cwiseAbs().maxCoeff() > 0.5 * opt.max_coefficient) throw boundary("coefficients diverge");
  }
  if (residual(cur) > opt.tol) {
    if (it >= opt.max_iterations) throw boundary("Newton iterations did not converge");
    throw NonConvergence("log-linear Newton stalled with residual " + std::to_string(residual(cur)));
  }
  LogLinearFit fit;
  fit.model = {basis, std::vector<double>(cur.c.data(), cur.c.data() + cur.c.size())};
  fit.moments = std::move(cur.ms);
  fit.empirical_means = mu_hat;
  fit.loglik = n * (cur.c.dot(mu_hat) - fit.moments.log_a);
  fit.gradient_norm = cur.grad.norm();
  fit.iterations = it;
  return fit;
}

}  // namespace detail

/// Maximum likelihood: solves mu_hat_j = mu_j(c) for j = 1..m.
inline LogLinearFit mle(const LogLinearData& data, Basis basis, int m, const LogLinearOptions& opt = {}) {
  return detail::newton_fit(data, basis, m, CoefPriorNormal::flat(m), true, opt);
}

/// Maximizer of the log prior plus the log-likelihood. The gradient
/// tolerance is relative to max(1, n, largest prior precision).
inline LogLinearFit posterior_mode(const LogLinearData& data, Basis basis, const CoefPriorNormal& prior,
                                   const LogLinearOptions& opt = {}) {
  return detail::newton_fit(data, basis, prior.order(), prior, false, opt);
}

/// Minimizer of 0.5 (c-c0)' Omega0 (c-c0) + 0.5 n (c-c_hat)' Omega(c_hat) (c-c_hat).
/// `literal` uses c0 in place of Omega0 c0 on the right-hand side.
inline Eigen::VectorXd quadratic_mode(const LogLinearFit& mle_fit, std::size_t n, const CoefPriorNormal& prior,
                                      bool literal = false) {
  const Eigen::VectorXd c_hat = Eigen::Map<const Eigen::VectorXd>(mle_fit.model.c.data(), mle_fit.model.order());
  const Eigen::MatrixXd info = static_cast<double>(n) * mle_fit.moments.cov;
  const Eigen::MatrixXd A = prior.precision + info;
  const Eigen::VectorXd rhs = (literal ? prior.mean : Eigen::VectorXd(prior.precision * prior.mean)) + info * c_hat;
  Eigen::LLT<Eigen::MatrixXd> llt(A);
  if (llt.info() != Eigen::Success) throw SingularSystem("Omega0 + n Omega(c_hat) is not positive definite");
  return llt.solve(rhs);
}

inline Eigen::VectorXd quadratic_mode(const LogLinearData& data, Basis basis, const CoefPriorNormal& prior,
                                      bool literal = false, const LogLinearOptions& opt = {}) {
  return quadratic_mode(mle(data, basis, prior.order(), opt), data.size(), prior, literal);
}

struct SicEntry {
  int m = 0;
  bool fitted = false;
  double loglik = 0.0;
  double sic = -std::numeric_limits<double>::infinity();
  std::string message;
};

struct SicResult {
  int selected = 0;
  std::vector<SicEntry> entries;
  std::vector<std::string> warnings;
};

struct SicOptions {
  bool at_posterior_mode = false;
  double tau = 1.0;  // shrinking prior used when at_posterior_mode is set
  LogLinearOptions fit;
};

/// SIC(m) = loglik(c_m) - 0.5 log(n) m for m = 1..m_max; ties go to the smaller m.
inline SicResult sic_select(const LogLinearData& data, Basis basis, int m_max, const SicOptions& opt = {}) {
  if (m_max < 1) throw DomainError("sic_select: m_max must be at least 1");
  const double n = static_cast<double>(data.size());
  SicResult out;
  for (int m = 1; m <= m_max; ++m) {
    SicEntry e;
    e.m = m;
    try {
      const auto fit = opt.at_posterior_mode
                           ? posterior_mode(data, basis, CoefPriorNormal::shrinking(std::vector<double>(m, 0.0), opt.tau), opt.fit)
                           : mle(data, basis, m, opt.fit);
      e.fitted = true;
      e.loglik = fit.loglik;
      e.sic = fit.loglik - 0.5 * std::log(n) * m;
    } catch (const Error& err) {
      e.message = err.name() + ": " + err.what();
      out.warnings.push_back("order " + std::to_string(m) + " skipped (" + e.message + ")");
    }
    out.entries.push_back(e);
  }
  const SicEntry* best = nullptr;
  for (const auto& e : out.entries) {
    if (e.fitted && (!best || e.sic > best->sic)) best = &e;
  }
  if (!best) throw BoundaryMle("sic_select: no order could be fitted");
  out.selected = best->m;
  return out;
}

/// Fitted density on the data scale, with the normalizer cached.
class LogLinearDensity {
 public:
  LogLinearDensity(LogLinearModel model, UnitMap map = {})
      : model_(std::move(model)), map_(map), log_a_(log_normalizer(model_)) {}

  double unit_pdf(double t) const {
    if (!(t >= 0.0 && t <= 1.0)) return 0.0;
    return std::exp(model_.exponent(t) - log_a_);
  }

  double operator()(double x) const { return unit_pdf(map_.to_unit(x)) * map_.jacobian(); }

  const LogLinearModel& model() const noexcept { return model_; }
  const UnitMap& map() const noexcept { return map_; }
  double log_a() const noexcept { return log_a_; }

 private:
  LogLinearModel model_;
  UnitMap map_;
  double log_a_;
};

/// Inverse-cdf sampler on [0,1] from a fine piecewise-linear cdf table.
class LogLinearSampler {
 public:
  explicit LogLinearSampler(const LogLinearModel& model, std::size_t cells = 20000) : cdf_(cells + 1, 0.0) {
    const LogLinearDensity f(model);
    double prev = f.unit_pdf(0.0);
    for (std::size_t i = 1; i <= cells; ++i) {
      const double cur = f.unit_pdf(static_cast<double>(i) / static_cast<double>(cells));
      cdf_[i] = cdf_[i - 1] + 0.5 * (prev + cur) / static_cast<double>(cells);
      prev = cur;
    }
    for (double& v : cdf_) v /= cdf_.back();
  }

  double draw(Rng& rng) const {
    const double u = uniform01(rng);
    const auto it = std::upper_bound(cdf_.begin(), cdf_.end(), u);
    const auto i = static_cast<std::size_t>(std::clamp<std::ptrdiff_t>(it - cdf_.begin(), 1, static_cast<std::ptrdiff_t>(cdf_.size() - 1)));
    const double span = cdf_[i] - cdf_[i - 1];
    const double frac = span > 0.0 ? (u - cdf_[i - 1]) / span : 0.5;
    return (static_cast<double>(i - 1) + frac) / static_cast<double>(cdf_.size() - 1);
  }

  std::vector<double> draw(Rng& rng, std::size_t count) const {
    std::vector<double> out(count);
    for (double& v : out) v = draw(rng);
    return out;
  }

 private:
  std::vector<double> cdf_;
};

}  // namespace bayesdens
