#pragma once

#include <cmath>
#include <limits>
#include <span>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Dense>

#include "bayesdens/errors.hpp"

namespace bayesdens {

enum class Penalty { squared_difference, squared_second_difference, squared_log_difference };

inline Penalty penalty_from_name(std::string_view name) {
  if (name == "d1" || name == "squared-difference") return Penalty::squared_difference;
  if (name == "d2" || name == "squared-second-difference") return Penalty::squared_second_difference;
  if (name == "dlog" || name == "squared-log-difference") return Penalty::squared_log_difference;
  throw DomainError("unknown penalty '" + std::string(name) + "'");
}

inline std::string penalty_name(Penalty d) {
  switch (d) {
    case Penalty::squared_difference: return "d1";
    case Penalty::squared_second_difference: return "d2";
    case Penalty::squared_log_difference: return "dlog";
  }
  return {};
}

/// Dirichlet kernel prod p_j^{alpha_j - 1} times the smoothing factor exp{-lambda Delta(p)}.
struct GenDirichletSpec {
  std::vector<double> alphas;
  Penalty penalty = Penalty::squared_difference;
  double lambda = 0.0;

  void validate() const {
    if (alphas.size() < 2) throw DomainError("generalized Dirichlet needs k >= 2 cells");
    for (double a : alphas) {
      if (!(a > 0.0) || !std::isfinite(a)) throw DomainError("alphas must be positive and finite");
    }
    if (!(lambda >= 0.0) || !std::isfinite(lambda)) throw DomainError("lambda must be nonnegative and finite");
    if (penalty == Penalty::squared_second_difference && alphas.size() < 3) {
      throw DomainError("second-difference penalty needs k >= 3");
    }
  }
};

namespace detail {

inline void check_simplex(std::span<const double> p) {
  double total = 0.0;
  for (double v : p) {
    if (!(v >= 0.0) || !std::isfinite(v)) throw DomainError("simplex point must have nonnegative finite entries");
    total += v;
  }
  if (std::abs(total - 1.0) > 1e-12) throw DomainError("simplex point must sum to one");
}

/// Difference operator rows for the quadratic penalties.
inline Eigen::MatrixXd difference_matrix(std::size_t k, int order) {
  const auto rows = static_cast<Eigen::Index>(k) - order;
  Eigen::MatrixXd D = Eigen::MatrixXd::Zero(rows, static_cast<Eigen::Index>(k));
  for (Eigen::Index r = 0; r < rows; ++r) {
    if (order == 1) {
      D(r, r) = -1.0;
      D(r, r + 1) = 1.0;
    } else {
      D(r, r) = 1.0;
      D(r, r + 1) = -2.0;
      D(r, r + 2) = 1.0;
    }
  }
  return D;
}

}  // namespace detail

/// Roughness Delta(p) of a probability vector.
inline double penalty(Penalty d, std::span<const double> p) {
  const std::size_t k = p.size();
  double s = 0.0;
  switch (d) {
    case Penalty::squared_difference:
      for (std::size_t j = 0; j + 1 < k; ++j) s += (p[j + 1] - p[j]) * (p[j + 1] - p[j]);
      break;
    case Penalty::squared_second_difference:
      if (k < 3) throw DomainError("second-difference penalty needs k >= 3");
      for (std::size_t j = 1; j + 1 < k; ++j) {
        const double v = p[j + 1] - 2.0 * p[j] + p[j - 1];
        s += v * v;
      }
      break;
    case Penalty::squared_log_difference:
      for (double v : p) {
        if (!(v > 0.0)) throw DomainError("log-difference penalty needs a strictly interior point");
      }
      for (std::size_t j = 0; j + 1 < k; ++j) {
        const double v = std::log(p[j + 1]) - std::log(p[j]);
        s += v * v;
      }
      break;
  }
  return s;
}

/// Unnormalized log density sum (alpha_j - 1) log p_j - lambda Delta(p).
/// A coordinate p_j = 0 contributes 0 when alpha_j = 1 and -inf otherwise.
inline double log_density(const GenDirichletSpec& spec, std::span<const double> p) {
  spec.validate();
  if (p.size() != spec.alphas.size()) throw DomainError("simplex point has the wrong dimension");
  detail::check_simplex(p);
  double s = 0.0;
  bool boundary = false;
  for (std::size_t j = 0; j < p.size(); ++j) {
    if (p[j] == 0.0) {
      boundary = true;
      if (spec.alphas[j] != 1.0) return -std::numeric_limits<double>::infinity();
    } else {
      s += (spec.alphas[j] - 1.0) * std::log(p[j]);
    }
  }
  if (spec.lambda == 0.0) return s;
  if (boundary && spec.penalty == Penalty::squared_log_difference) {
    throw DomainError("log-difference penalty needs a strictly interior point");
  }
  return s - spec.lambda * penalty(spec.penalty, p);
}

namespace detail {

inline std::vector<double> checked_counts(std::span<const double> counts, std::size_t k) {
  if (counts.size() != k) throw DomainError("need one count per cell");
  for (double c : counts) {
    if (!(c >= 0.0) || c != std::floor(c) || !std::isfinite(c)) throw DomainError("counts must be nonnegative integers");
  }
  return {counts.begin(), counts.end()};
}

}  // namespace detail

/// Conjugate update alpha_j <- alpha_j + N_j.
inline GenDirichletSpec posterior_update(const GenDirichletSpec& spec, std::span<const double> counts) {
  spec.validate();
  auto n = detail::checked_counts(counts, spec.alphas.size());
  GenDirichletSpec out = spec;
  for (std::size_t j = 0; j < n.size(); ++j) out.alphas[j] += n[j];
  return out;
}

/// Block sums of alpha for a grouping of cells into consecutive blocks
/// (0-based indices).
inline std::vector<double> coarsen_counts(std::span<const double> alphas, const std::vector<std::vector<std::size_t>>& blocks) {
  std::vector<double> out;
  std::size_t next = 0;
  for (const auto& block : blocks) {
    if (block.empty()) throw DomainError("coarsening blocks must be nonempty");
    double s = 0.0;
    for (std::size_t idx : block) {
      if (idx != next) throw DomainError("coarsening blocks must be consecutive and cover every cell in order");
      s += alphas[idx];
      ++next;
    }
    out.push_back(s);
  }
  if (next != alphas.size()) throw DomainError("coarsening blocks must cover every cell");
  return out;
}

struct ModeOptions {
  double kkt_tol = 1e-8;
  int max_iterations = 500;
};

struct ModeResult {
  std::vector<double> p;
  double objective = 0.0;
  double kkt_residual = 0.0;
  int iterations = 0;
  bool degenerate = false;  // closed form with 0/0 cells resolved to zero
};

namespace detail {

/// Objective sum b_j log p_j - lambda Delta(p) with its p-gradient and p-Hessian.
class ModeObjective {
 public:
  ModeObjective(std::vector<double> b, Penalty d, double lambda) : b_(std::move(b)), d_(d), lambda_(lambda) {
    const std::size_t k = b_.size();
    if (d_ == Penalty::squared_difference) DtD_ = 2.0 * difference_matrix(k, 1).transpose() * difference_matrix(k, 1);
    if (d_ == Penalty::squared_second_difference) DtD_ = 2.0 * difference_matrix(k, 2).transpose() * difference_matrix(k, 2);
    if (d_ == Penalty::squared_log_difference) DtD_ = 2.0 * difference_matrix(k, 1).transpose() * difference_matrix(k, 1);
  }

  double value(const Eigen::VectorXd& p) const {
    double s = 0.0;
    for (Eigen::Index j = 0; j < p.size(); ++j) {
      if (b_[j] != 0.0) s += b_[j] * std::log(p[j]);
    }
    if (lambda_ == 0.0) return s;
    if (d_ == Penalty::squared_log_difference) {
      const Eigen::VectorXd l = p.array().log().matrix();
      return s - 0.5 * lambda_ * l.dot(DtD_ * l);
    }
    return s - 0.5 * lambda_ * p.dot(DtD_ * p);
  }

  Eigen::VectorXd gradient(const Eigen::VectorXd& p) const {
    Eigen::VectorXd g(p.size());
    for (Eigen::Index j = 0; j < p.size(); ++j) g[j] = b_[j] / p[j];
    if (lambda_ == 0.0) return g;
    if (d_ == Penalty::squared_log_difference) {
      const Eigen::VectorXd l = p.array().log().matrix();
      g -= lambda_ * ((DtD_ * l).array() / p.array()).matrix();
    } else {
      g -= lambda_ * DtD_ * p;
    }
    return g;
  }

  Eigen::MatrixXd hessian(const Eigen::VectorXd& p) const {
    const Eigen::Index k = p.size();
    Eigen::MatrixXd H = Eigen::MatrixXd::Zero(k, k);
    for (Eigen::Index j = 0; j < k; ++j) H(j, j) = -b_[j] / (p[j] * p[j]);
    if (lambda_ == 0.0) return H;
    if (d_ == Penalty::squared_log_difference) {
      const Eigen::VectorXd l = p.array().log().matrix();
      const Eigen::VectorXd v = DtD_ * l;
      for (Eigen::Index i = 0; i < k; ++i) {
        for (Eigen::Index j = 0; j < k; ++j) H(i, j) -= lambda_ * DtD_(i, j) / (p[i] * p[j]);
        H(i, i) += lambda_ * v[i] / (p[i] * p[i]);
      }
    } else {
      H -= lambda_ * DtD_;
    }
    return H;
  }

 private:
  std::vector<double> b_;
  Penalty d_;
  double lambda_;
  Eigen::MatrixXd DtD_;
};

inline Eigen::VectorXd softmax(const Eigen::VectorXd& eta) {
  // eta holds the first k-1 logits; the last is pinned at zero.
  const Eigen::Index k = eta.size() + 1;
  Eigen::VectorXd full(k);
  full.head(k - 1) = eta;
  full[k - 1] = 0.0;
  const double top = full.maxCoeff();
  Eigen::VectorXd p = (full.array() - top).exp().matrix();
  return p / p.sum();
}

inline double kkt_residual(const Eigen::VectorXd& p, const Eigen::VectorXd& g) {
  const Eigen::VectorXd q = p.cwiseProduct(g);
  const double nu = q.sum();
  double worst = 0.0, scale = 1.0;
  for (Eigen::Index j = 0; j < p.size(); ++j) {
    worst = std::max(worst, std::abs(q[j] - p[j] * nu));
    scale += std::abs(q[j]);
  }
  return worst / std::max(1.0, scale - 1.0);
}

}  // namespace detail

/// Maximizer of sum (alpha_j + N_j - 1) log p_j - lambda Delta(p) on the
/// simplex, by damped Newton on logits against the last cell.
inline ModeResult posterior_mode(const GenDirichletSpec& spec, std::span<const double> counts, const ModeOptions& opt = {}) {
  spec.validate();
  const auto n = detail::checked_counts(counts, spec.alphas.size());
  const std::size_t k = n.size();
  std::vector<double> b(k);
  bool any_zero = false;
  for (std::size_t j = 0; j < k; ++j) {
    b[j] = spec.alphas[j] + n[j] - 1.0;
    if (b[j] < 0.0) {
      throw BoundaryMode("alpha_j + N_j < 1 in cell " + std::to_string(j + 1) + ": the mode lies on the simplex boundary");
    }
    any_zero |= b[j] == 0.0;
  }

  if (spec.lambda == 0.0 && any_zero) {
    ModeResult r;
    r.degenerate = true;
    double total = 0.0;
    for (double v : b) total += v;
    r.p.assign(k, total > 0.0 ? 0.0 : 1.0 / static_cast<double>(k));
    if (total > 0.0) {
      for (std::size_t j = 0; j < k; ++j) r.p[j] = b[j] / total;
    }
    return r;
  }

  const detail::ModeObjective f(b, spec.penalty, spec.lambda);
  const auto dim = static_cast<Eigen::Index>(k - 1);

  // Start from the Dirichlet-smoothed histogram proportions.
  Eigen::VectorXd eta(dim);
  for (Eigen::Index j = 0; j < dim; ++j) eta[j] = std::log((b[j] + 1.0) / (b[k - 1] + 1.0));
  Eigen::VectorXd p = detail::softmax(eta);
  double value = f.value(p);
  std::ostringstream trace;

  ModeResult r;
  for (int it = 0; it < opt.max_iterations; ++it) {
    const Eigen::VectorXd g = f.gradient(p);
    r.kkt_residual = detail::kkt_residual(p, g);
    trace << "  iter " << it << ": objective " << value << ", kkt " << r.kkt_residual << "\n";
    // Polish well below the requested tolerance; Newton converges
    // quadratically so this costs one or two extra steps.
    if (r.kkt_residual <= 1e-4 * opt.kkt_tol) {
      r.p.assign(p.data(), p.data() + p.size());
      r.objective = value;
      r.iterations = it;
      return r;
    }
    // Chain rule to logits: J_{j,i} = p_j (delta_ij - p_i).
    Eigen::MatrixXd J = -p * p.head(dim).transpose();
    for (Eigen::Index i = 0; i < dim; ++i) J(i, i) += p[i];
    const Eigen::VectorXd q = p.cwiseProduct(g);
    const double gbar = q.sum();
    const Eigen::VectorXd grad = J.transpose() * g;
    Eigen::MatrixXd H = J.transpose() * f.hessian(p) * J;
    for (Eigen::Index i = 0; i < dim; ++i) {
      for (Eigen::Index l = 0; l < dim; ++l) {
        H(i, l) += -q[i] * p[l] - q[l] * p[i] + 2.0 * gbar * p[i] * p[l];
      }
      H(i, i) += q[i] - gbar * p[i];
    }
    // Levenberg damping until -H + mu I is positive definite.
    Eigen::VectorXd step;
    const double hscale = std::max(1e-12, H.diagonal().cwiseAbs().maxCoeff());
    for (double mu = 0.0;; mu = mu == 0.0 ? 1e-10 * hscale : mu * 10.0) {
      Eigen::MatrixXd A = -H;
      A.diagonal().array() += mu;
      Eigen::LLT<Eigen::MatrixXd> llt(A);
      if (llt.info() == Eigen::Success) {
        step = llt.solve(grad);
        break;
      }
      if (mu > 1e20 * hscale) {
        step = grad / hscale;
        break;
      }
    }
    const double cap = 20.0;
    if (step.cwiseAbs().maxCoeff() > cap) step *= cap / step.cwiseAbs().maxCoeff();
    double t = 1.0;
    bool moved = false;
    for (int halving = 0; halving < 60; ++halving, t *= 0.5) {
      const Eigen::VectorXd p_try = detail::softmax(eta + t * step);
      if ((p_try.array() <= 0.0).any()) continue;
      const double v = f.value(p_try);
      const bool flat = std::abs(v - value) <= 4.0 * std::numeric_limits<double>::epsilon() * (1.0 + std::abs(value));
      if (v > value || (flat && detail::kkt_residual(p_try, f.gradient(p_try)) < r.kkt_residual)) {
        eta += t * step;
        p = p_try;
        value = v;
        moved = true;
        break;
      }
    }
    if (!moved) {
      // No progress left at working precision.
      if (r.kkt_residual <= opt.kkt_tol) {
        r.p.assign(p.data(), p.data() + p.size());
        r.objective = value;
        r.iterations = it;
        return r;
      }
      break;
    }
  }
  r.kkt_residual = detail::kkt_residual(p, f.gradient(p));
  if (r.kkt_residual <= opt.kkt_tol) {
    r.p.assign(p.data(), p.data() + p.size());
    r.objective = value;
    r.iterations = opt.max_iterations;
    return r;
  }
  throw NonConvergence("posterior_mode did not reach the KKT tolerance\n" + trace.str());
}

}  // namespace bayesdens
