#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <limits>
#include <queue>
#include <span>
#include <sstream>
#include <vector>

#include "bayesdens/errors.hpp"

namespace bayesdens {

struct QuadratureOptions {
  double tol = 1e-9;  // absolute
  std::size_t max_intervals = 4000;
};

struct QuadratureResult {
  double value = 0.0;
  double error = 0.0;
  std::size_t intervals = 0;
};

/// Nodes and weights of a composite rule; integrates any function as sum w_i f(x_i).
struct QuadratureRule {
  std::vector<double> nodes;
  std::vector<double> weights;

  template <class F>
  double apply(F&& f) const {
    double s = 0.0;
    for (std::size_t i = 0; i < nodes.size(); ++i) s += weights[i] * f(nodes[i]);
    return s;
  }
};

namespace detail {

// 7-point Gauss / 15-point Kronrod abscissae and weights on [-1,1].
inline constexpr std::array<double, 8> kKronrodNodes = {
    0.991455371120812639206854697526329, 0.949107912342758524526189684047851,
    0.864864423359769072789712788640926, 0.741531185599394439863864773280788,
    0.586087235467691130294144845693013, 0.405845151377397166906606412076961,
    0.207784955007898467600689403773245, 0.000000000000000000000000000000000};
inline constexpr std::array<double, 8> kKronrodWeights = {
    0.022935322010529224963732008058970, 0.063092092629978553290700663189204,
    0.104790010322250183839876322541518, 0.140653259715525918745189590510238,
    0.169004726639267902826583426598550, 0.190350578064785409913256402421014,
    0.204432940075298892414161999234649, 0.209482141084727828012999174891714};
inline constexpr std::array<double, 4> kGaussWeights = {
    0.129484966168869693270611432679082, 0.279705391489276667901467771423780,
    0.381830050505118944950369775488975, 0.417959183673469387755102040816327};

struct Panel {
  double a, b, value, error;
  bool operator<(const Panel& other) const { return error < other.error; }
};

template <class F>
Panel gauss_kronrod15(F& f, double a, double b) {
  const double center = 0.5 * (a + b);
  const double half = 0.5 * (b - a);
  const double fc = f(center);
  double kronrod = kKronrodWeights[7] * fc;
  double gauss = kGaussWeights[3] * fc;
  for (int i = 0; i < 7; ++i) {
    const double dx = half * kKronrodNodes[i];
    const double pair = f(center - dx) + f(center + dx);
    kronrod += kKronrodWeights[i] * pair;
    if (i % 2 == 1) gauss += kGaussWeights[i / 2] * pair;
  }
  kronrod *= half;
  gauss *= half;
  if (!std::isfinite(kronrod)) throw DomainError("quadrature: integrand is not finite on the interval");
  double err = std::abs(kronrod - gauss);
  // Floor at the rounding level of the panel so flat integrands terminate.
  err = std::max(err, 50.0 * std::numeric_limits<double>::epsilon() * std::abs(kronrod));
  return {a, b, kronrod, err};
}

template <class F>
std::vector<Panel> refine(F& f, std::span<const double> breakpoints, const QuadratureOptions& opt,
                          double& total, double& total_err) {
  std::priority_queue<Panel> queue;
  total = 0.0;
  total_err = 0.0;
  for (std::size_t i = 0; i + 1 < breakpoints.size(); ++i) {
    if (breakpoints[i + 1] == breakpoints[i]) continue;
    Panel p = gauss_kronrod15(f, breakpoints[i], breakpoints[i + 1]);
    total += p.value;
    total_err += p.error;
    queue.push(p);
  }
  while (total_err > opt.tol && queue.size() < opt.max_intervals) {
    Panel worst = queue.top();
    const double mid = 0.5 * (worst.a + worst.b);
    if (!(mid > worst.a && mid < worst.b)) break;  // interval exhausted at machine precision
    queue.pop();
    Panel left = gauss_kronrod15(f, worst.a, mid);
    Panel right = gauss_kronrod15(f, mid, worst.b);
    total += left.value + right.value - worst.value;
    total_err += left.error + right.error - worst.error;
    queue.push(left);
    queue.push(right);
  }
  // Re-sum to shed the drift of the running updates.
  std::vector<Panel> panels;
  panels.reserve(queue.size());
  total = 0.0;
  total_err = 0.0;
  while (!queue.empty()) {
    panels.push_back(queue.top());
    queue.pop();
  }
  std::sort(panels.begin(), panels.end(), [](const Panel& l, const Panel& r) { return l.a < r.a; });
  for (const auto& p : panels) {
    total += p.value;
    total_err += p.error;
  }
  return panels;
}

inline std::vector<double> sorted_breakpoints(std::span<const double> points) {
  std::vector<double> bp(points.begin(), points.end());
  std::sort(bp.begin(), bp.end());
  bp.erase(std::unique(bp.begin(), bp.end()), bp.end());
  return bp;
}

}  // namespace detail

/// Adaptive Gauss-Kronrod (7/15) integration over the union of the segments
/// between consecutive breakpoints. Subdivides the panel with the largest
/// error estimate until the summed estimate is <= opt.tol.
template <class F>
QuadratureResult integrate(F&& f, std::span<const double> breakpoints, QuadratureOptions opt = {}) {
  if (!(opt.tol > 0.0)) throw DomainError("quadrature: tol must be positive");
  auto bp = detail::sorted_breakpoints(breakpoints);
  for (double v : bp) {
    if (!std::isfinite(v)) throw DomainError("quadrature: interval must be bounded");
  }
  if (bp.size() < 2) return {};
  double total = 0.0, err = 0.0;
  auto panels = detail::refine(f, bp, opt, total, err);
  if (err > opt.tol) {
    std::ostringstream msg;
    msg << "quadrature did not converge on [" << bp.front() << ", " << bp.back() << "] after "
        << panels.size() << " panels: estimate " << total << ", error bound " << err;
    throw QuadratureError(msg.str(), total, err);
  }
  return {total, err, panels.size()};
}

template <class F>
QuadratureResult integrate(F&& f, double a, double b, QuadratureOptions opt = {}) {
  if (a == b) return {};
  const double sign = a < b ? 1.0 : -1.0;
  const std::array<double, 2> bp = {std::min(a, b), std::max(a, b)};
  auto r = integrate(f, std::span<const double>(bp), opt);
  r.value *= sign;
  return r;
}

/// Integral estimate of f over [a,b] with absolute error <= tol.
template <class F>
double quadrature(F&& f, double a, double b, double tol = 1e-9) {
  return integrate(f, a, b, QuadratureOptions{tol}).value;
}

/// Refine adaptively on `driver`, then freeze the resulting panels into a
/// reusable rule so that several related integrands share one discretisation.
template <class F>
QuadratureRule adaptive_rule(F&& driver, std::span<const double> breakpoints, QuadratureOptions opt = {}) {
  auto bp = detail::sorted_breakpoints(breakpoints);
  double total = 0.0, err = 0.0;
  auto panels = detail::refine(driver, bp, opt, total, err);
  if (err > opt.tol) {
    throw QuadratureError("adaptive_rule: driver integrand did not converge", total, err);
  }
  QuadratureRule rule;
  rule.nodes.reserve(panels.size() * 15);
  rule.weights.reserve(panels.size() * 15);
  for (const auto& p : panels) {
    const double center = 0.5 * (p.a + p.b);
    const double half = 0.5 * (p.b - p.a);
    for (int i = 0; i < 7; ++i) {
      const double dx = half * detail::kKronrodNodes[i];
      rule.nodes.push_back(center - dx);
      rule.weights.push_back(half * detail::kKronrodWeights[i]);
      rule.nodes.push_back(center + dx);
      rule.weights.push_back(half * detail::kKronrodWeights[i]);
    }
    rule.nodes.push_back(center);
    rule.weights.push_back(half * detail::kKronrodWeights[7]);
  }
  return rule;
}

}  // namespace bayesdens
