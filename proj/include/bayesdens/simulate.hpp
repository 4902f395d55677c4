#pragma once

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdint>
#include <exception>
#include <functional>
#include <mutex>
#include <ostream>
#include <optional>
#include <string>
#include <thread>
#include <vector>

#include "bayesdens/density.hpp"
#include "bayesdens/dirichlet_process.hpp"
#include "bayesdens/errors.hpp"
#include "bayesdens/family.hpp"
#include "bayesdens/io/curve.hpp"
#include "bayesdens/kernels.hpp"
#include "bayesdens/local_bayes.hpp"
#include "bayesdens/posterior_grid.hpp"
#include "bayesdens/rng.hpp"
#include "bayesdens/sample.hpp"

namespace bayesdens {

/// Named simulation truths.
inline UnivariateDensity true_density(const std::string& id) {
  if (id == "normal") return UnivariateDensity::normal(0.0, 1.0);
  if (id == "skewed-mixture") return UnivariateDensity::normal_mixture({{0.75, 0.0, 1.0}, {0.25, 1.5, 0.5}});
  throw DomainError("unknown true density '" + id + "' (expected normal or skewed-mixture)");
}

/// n iid draws from a normal mixture, component first, then the normal.
inline std::vector<double> draw_from(const UnivariateDensity& truth, std::size_t n, Rng& rng) {
  if (!truth.is_normal_mixture()) throw DomainError("draw_from: only normal-mixture truths can be sampled");
  const auto comps = truth.normal_components();
  std::vector<double> out(n);
  for (auto& x : out) {
    double u = uniform01(rng), acc = 0.0;
    std::size_t j = 0;
    for (; j + 1 < comps.size(); ++j) {
      acc += comps[j].weight;
      if (u <= acc) break;
    }
    x = comps[j].mean + comps[j].sd * standard_normal(rng);
  }
  return out;
}

struct SimConfig {
  std::string truth = "normal";
  std::vector<std::string> estimators = {"oracle", "kde"};
  std::size_t n = 100;
  std::size_t replications = 50;
  std::uint64_t seed = 1;
  KernelSpec kernel = KernelSpec::gaussian();
  std::optional<double> h;  // default n^{-1/5}
  double grid_min = -5.0;
  double grid_max = 5.0;
  std::size_t grid_count = 201;
  double a = 1.0;   // dp concentration
  double c = 1.0;   // local-const strength
  std::size_t lattice_points = 21;
  std::size_t threads = 0;  // 0: hardware concurrency

  double bandwidth() const { return h.value_or(std::pow(static_cast<double>(n), -0.2)); }

  void validate() const {
    if (replications < 2) throw DomainError("simulate: need R >= 2 replications");
    if (n < 2) throw DomainError("simulate: need n >= 2");
    if (grid_count < 2 || !(grid_max > grid_min)) throw DomainError("simulate: need a grid with count >= 2");
    if (!(bandwidth() > 0.0)) throw DomainError("simulate: bandwidth must be positive");
  }
};

struct EstimatorSummary {
  std::string id;
  std::vector<double> mean;      // pointwise average estimate
  std::vector<double> bias;      // mean - truth
  std::vector<double> variance;  // pointwise variance across replications (R-1 denominator)
  std::vector<double> ise;       // per completed replication, in replication order
  double mise = 0.0;
  double mise_se = 0.0;          // Monte Carlo standard error sd(ise)/sqrt(R_used)
  std::size_t failures = 0;
};

struct SimReport {
  std::string truth;
  std::size_t n = 0;
  std::size_t replications = 0;
  double h = 0.0;
  std::uint64_t seed = 0;
  std::vector<double> grid;
  std::vector<double> truth_values;
  std::vector<EstimatorSummary> estimators;

  const EstimatorSummary& at(const std::string& id) const {
    for (const auto& e : estimators) {
      if (e.id == id) return e;
    }
    throw DomainError("estimator '" + id + "' is not in the report");
  }
};

inline double trapezoid(std::span<const double> x, std::span<const double> y) {
  double s = 0.0;
  for (std::size_t i = 1; i < x.size(); ++i) s += 0.5 * (x[i] - x[i - 1]) * (y[i] + y[i - 1]);
  return s;
}

/// Flat-prior normal posterior on a lattice centred at the sample moments,
/// spanning five standard errors for mu and log sigma.
inline PosteriorGrid moment_posterior(const Sample& sample, std::size_t points) {
  const double n = static_cast<double>(sample.size());
  const double m = sample.mean();
  const double s = sample.sd() > 0.0 ? sample.sd() : 1.0;
  LatticeSpec spec;
  spec.mu_points = points;
  spec.sigma_points = points;
  spec.mu_range = std::pair{m - 5.0 * s / std::sqrt(n), m + 5.0 * s / std::sqrt(n)};
  const double spread = std::exp(5.0 / std::sqrt(2.0 * n));
  spec.sigma_range = std::pair{s / spread, s * spread};
  return parametric_posterior(LocationScaleFamily::normal(), sample, make_lattice(sample, spec));
}

/// Density estimate on a grid from one sample.
using CurveFn = std::function<std::vector<double>(const Sample&, std::span<const double>)>;

struct SimEstimator {
  std::string id;
  CurveFn fn;
};

namespace detail {

inline CurveFn sim_estimator(const std::string& id, const SimConfig& cfg, const UnivariateDensity& truth) {
  const KernelSpec kernel = cfg.kernel;
  const double h = cfg.bandwidth();
  auto pointwise = [](auto f) -> CurveFn {
    return [f](const Sample& s, std::span<const double> xs) {
      std::vector<double> out(xs.size());
      for (std::size_t i = 0; i < xs.size(); ++i) out[i] = f(s, xs[i]);
      return out;
    };
  };
  if (id == "oracle") return pointwise([truth](const Sample&, double x) { return truth.pdf(x); });
  if (id == "kde") return pointwise([=](const Sample& s, double x) { return kde(s, kernel, h, x); });
  if (id == "dp") {
    const DirichletPrior prior{cfg.a, UnivariateDensity::normal(0.0, 1.0)};
    return pointwise([=](const Sample& s, double x) { return dp_estimate(prior, s, kernel, h, x); });
  }
  if (id == "local-const") {
    const auto f0 = UnivariateDensity::normal(0.0, 1.0);
    const double c = cfg.c;
    return pointwise([=](const Sample& s, double x) { return local_const_estimate(c, f0, s, kernel, h, x); });
  }
  if (id == "semiparam") {
    const std::size_t points = cfg.lattice_points;
    return [=](const Sample& s, std::span<const double> xs) {
      const auto family = LocationScaleFamily::normal();
      const auto background = moment_posterior(s, points);
      std::vector<double> out(xs.size());
      for (std::size_t i = 0; i < xs.size(); ++i) out[i] = altkernel_estimate(0.0, family, background, s, kernel, h, xs[i]);
      return out;
    };
  }
  if (id == "ebayes") {
    return [=](const Sample& s, std::span<const double> xs) {
      const auto f0 = UnivariateDensity::normal(s.mean(), s.sd() > 0.0 ? s.sd() : 1.0);
      const auto positions = default_checking_positions(s);
      std::vector<double> out(xs.size());
      for (std::size_t i = 0; i < xs.size(); ++i) out[i] = empirical_bayes_estimate(f0, s, kernel, h, positions, xs[i]);
      return out;
    };
  }
  throw DomainError("unknown simulation estimator '" + id +
                    "' (expected oracle, kde, dp, local-const, semiparam or ebayes)");
}

}  // namespace detail

/// R seeded replications of drawing n points from the truth and running every
/// estimator on a shared grid. Replication r uses stream r of the config seed,
/// workers pull replications from a counter and the reduction runs in
/// replication order, so the report does not depend on the thread count.
/// Estimators are cfg.estimators by id followed by `extra`; an estimator
/// that throws a library Error in a replication is skipped there and counted.
inline SimReport simulate(const SimConfig& cfg, const std::vector<SimEstimator>& extra = {}) {
  cfg.validate();
  if (cfg.estimators.empty() && extra.empty()) throw DomainError("simulate: no estimators");
  const auto truth = true_density(cfg.truth);
  const auto grid = EvalGrid::linspace(cfg.grid_min, cfg.grid_max, cfg.grid_count);
  const auto xs = grid.points();
  std::vector<CurveFn> fns;
  std::vector<std::string> ids = cfg.estimators;
  for (const auto& id : cfg.estimators) fns.push_back(detail::sim_estimator(id, cfg, truth));
  for (const auto& e : extra) {
    ids.push_back(e.id);
    fns.push_back(e.fn);
  }

  const std::size_t R = cfg.replications, E = fns.size();
  // curves[r][e] is empty when estimator e failed in replication r.
  std::vector<std::vector<std::vector<double>>> curves(R, std::vector<std::vector<double>>(E));
  std::atomic<std::size_t> next{0};
  std::exception_ptr fatal;
  std::mutex fatal_mutex;
  std::atomic<bool> stop{false};
  auto worker = [&]() {
    try {
      for (std::size_t r = next++; r < R && !stop; r = next++) {
        Rng rng = make_rng(cfg.seed, r);
        const Sample sample(draw_from(truth, cfg.n, rng));
        for (std::size_t e = 0; e < E; ++e) {
          try {
            curves[r][e] = fns[e](sample, xs);
          } catch (const Error&) {
            curves[r][e].clear();
          }
        }
      }
    } catch (...) {
      stop = true;
      std::lock_guard lock(fatal_mutex);
      if (!fatal) fatal = std::current_exception();
    }
  };
  std::size_t workers = cfg.threads ? cfg.threads : std::max(1u, std::thread::hardware_concurrency());
  workers = std::min(workers, R);
  if (workers == 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    for (std::size_t t = 0; t < workers; ++t) pool.emplace_back(worker);
    for (auto& t : pool) t.join();
  }
  if (fatal) std::rethrow_exception(fatal);

  SimReport rep;
  rep.truth = cfg.truth;
  rep.n = cfg.n;
  rep.replications = R;
  rep.h = cfg.bandwidth();
  rep.seed = cfg.seed;
  rep.grid.assign(xs.begin(), xs.end());
  for (double x : xs) rep.truth_values.push_back(truth.pdf(x));
  const std::size_t G = xs.size();
  for (std::size_t e = 0; e < E; ++e) {
    EstimatorSummary s;
    s.id = ids[e];
    s.mean.assign(G, 0.0);
    std::vector<double> sq(G, 0.0);
    std::vector<double> err(G);
    for (std::size_t r = 0; r < R; ++r) {
      const auto& curve = curves[r][e];
      if (curve.empty()) {
        ++s.failures;
        continue;
      }
      for (std::size_t i = 0; i < G; ++i) err[i] = (curve[i] - rep.truth_values[i]) * (curve[i] - rep.truth_values[i]);
      s.ise.push_back(trapezoid(xs, err));
      for (std::size_t i = 0; i < G; ++i) s.mean[i] += curve[i];
    }
    const double used = static_cast<double>(s.ise.size());
    s.bias.assign(G, std::nan(""));
    s.variance.assign(G, std::nan(""));
    if (used > 0) {
      for (std::size_t i = 0; i < G; ++i) s.mean[i] /= used;
      for (std::size_t r = 0; r < R; ++r) {
        const auto& curve = curves[r][e];
        if (curve.empty()) continue;
        for (std::size_t i = 0; i < G; ++i) sq[i] += (curve[i] - s.mean[i]) * (curve[i] - s.mean[i]);
      }
      for (std::size_t i = 0; i < G; ++i) {
        s.bias[i] = s.mean[i] - rep.truth_values[i];
        s.variance[i] = used > 1 ? sq[i] / (used - 1.0) : 0.0;
      }
      double total = 0.0;
      for (double v : s.ise) total += v;
      s.mise = total / used;
      double ss = 0.0;
      for (double v : s.ise) ss += (v - s.mise) * (v - s.mise);
      s.mise_se = used > 1 ? std::sqrt(ss / (used - 1.0) / used) : 0.0;
    } else {
      s.mean.assign(G, std::nan(""));
      s.mise = std::nan("");
      s.mise_se = std::nan("");
    }
    rep.estimators.push_back(std::move(s));
  }
  return rep;
}

/// Long-format CSV "estimator,statistic,x,value": scalar rows (mise, mise_se,
/// replications, failures) leave x empty; curve rows carry truth, mean, bias
/// and variance per grid point.
inline void write_report(std::ostream& out, const SimReport& rep) {
  using io::format_number;
  out << "estimator,statistic,x,value\n";
  for (const auto& e : rep.estimators) {
    out << e.id << ",mise,," << format_number(e.mise) << '\n';
    out << e.id << ",mise_se,," << format_number(e.mise_se) << '\n';
    out << e.id << ",replications,," << e.ise.size() << '\n';
    out << e.id << ",failures,," << e.failures << '\n';
  }
  for (std::size_t i = 0; i < rep.grid.size(); ++i) {
    out << "truth,density," << format_number(rep.grid[i]) << ',' << format_number(rep.truth_values[i]) << '\n';
  }
  for (const auto& e : rep.estimators) {
    for (std::size_t i = 0; i < rep.grid.size(); ++i) {
      const std::string x = format_number(rep.grid[i]);
      out << e.id << ",mean," << x << ',' << format_number(e.mean[i]) << '\n';
      out << e.id << ",bias," << x << ',' << format_number(e.bias[i]) << '\n';
      out << e.id << ",variance," << x << ',' << format_number(e.variance[i]) << '\n';
    }
  }
}

}  // namespace bayesdens
