#pragma once

#include <charconv>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <functional>
#include <limits>
#include <memory>
#include <optional>
#include <ostream>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "bayesdens/density.hpp"
#include "bayesdens/dirichlet_process.hpp"
#include "bayesdens/errors.hpp"
#include "bayesdens/family.hpp"
#include "bayesdens/gen_dirichlet.hpp"
#include "bayesdens/hermite.hpp"
#include "bayesdens/io/curve.hpp"
#include "bayesdens/kernels.hpp"
#include "bayesdens/local_bayes.hpp"
#include "bayesdens/loglinear.hpp"
#include "bayesdens/sample.hpp"
#include "bayesdens/simulate.hpp"

namespace bayesdens::cli {

using io::Json;

inline const std::vector<std::string>& subcommands() {
  static const std::vector<std::string> names = {"kde",    "dp",       "binned", "gendirichlet-mode",
                                                 "pinned", "residual", "hermite", "loglinear",
                                                 "sic",    "local",    "ebayes", "simulate"};
  return names;
}

/// Evaluation grid MIN:MAX:COUNT. COUNT is at least 2, except that a
/// degenerate MIN == MAX grid holds the single point MIN.
struct GridSpec {
  double min = 0.0;
  double max = 0.0;
  std::size_t count = 0;

  static GridSpec parse(const std::string& text) {
    std::vector<std::string> parts;
    std::stringstream ss(text);
    for (std::string part; std::getline(ss, part, ':');) parts.push_back(part);
    auto bad = [&]() { return DomainError("grid '" + text + "': expected MIN:MAX:COUNT"); };
    if (parts.size() != 3) throw bad();
    const auto lo = io::detail::parse_real(parts[0]);
    const auto hi = io::detail::parse_real(parts[1]);
    const auto count = io::detail::parse_real(parts[2]);
    if (!lo || !hi || !count || *count != std::floor(*count) || *count < 1) throw bad();
    GridSpec g{*lo, *hi, static_cast<std::size_t>(*count)};
    g.validate();
    return g;
  }

  void validate() const {
    if (min == max && count == 1) return;
    if (!(max > min) || count < 2) throw DomainError("grid needs MAX > MIN and COUNT >= 2 (or MIN == MAX with COUNT 1)");
  }

  EvalGrid points() const { return EvalGrid::linspace(min, max, count); }
};

namespace detail {

inline double to_real(const std::string& key, const std::string& v) {
  const auto r = io::detail::parse_real(v);
  if (!r) throw DomainError("option '" + key + "': '" + v + "' is not a finite real");
  return *r;
}

inline double to_nonnegative(const std::string& key, const std::string& v) {
  const double r = to_real(key, v);
  if (r < 0.0) throw DomainError("option '" + key + "' must be nonnegative");
  return r;
}

inline std::uint64_t to_unsigned(const std::string& key, const std::string& v) {
  const std::string_view s = io::detail::trim(v);
  std::uint64_t out = 0;
  auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), out);
  if (s.empty() || ec != std::errc() || ptr != s.data() + s.size()) {
    throw DomainError("option '" + key + "': '" + v + "' is not an unsigned integer");
  }
  return out;
}

inline std::vector<std::string> split_list(const std::string& v) {
  std::vector<std::string> out;
  for (auto cell : io::detail::split_fields(v)) {
    if (!cell.empty()) out.emplace_back(cell);
  }
  return out;
}

inline std::vector<double> to_reals(const std::string& key, const std::string& v) {
  std::vector<double> out;
  for (const auto& cell : split_list(v)) out.push_back(to_real(key, cell));
  return out;
}

}  // namespace detail

/// Everything one invocation needs. Keys accepted by set() match the long
/// flag names without the leading dashes.
struct RunConfig {
  std::string subcommand;
  std::string input;
  std::optional<std::string> column;
  std::string kernel = "gaussian";
  std::optional<double> h;  // default sd * n^{-1/5}
  double a = 1.0;
  double c = 1.0;
  double lambda = 0.0;
  std::string delta = "d1";
  int m = 3;
  std::uint64_t seed = 1;
  std::optional<GridSpec> grid;  // default [min - 3h, max + 3h] with 201 points
  std::string out, meta, report;

  std::string base = "fit";  // f0: fit | normal:MEAN:SD | uniform:LO:HI
  std::size_t cells = 10;
  std::vector<double> cuts;
  std::vector<double> masses;
  std::string variant = "const";
  double beta0 = 0.0, w0 = 0.0, mu0 = 0.0, tau = 1.0, sigma = 1.0;
  std::string basis = "cosine";
  std::string prior = "flat";  // loglinear: flat | shrink
  std::optional<std::size_t> draws;
  std::size_t coef_draws = 200;
  std::size_t lattice_points = 21;

  std::string truth = "normal";
  std::vector<std::string> estimators = {"oracle", "kde"};
  std::size_t n = 100;
  std::size_t replications = 50;
  std::size_t threads = 0;

  void set(const std::string& key, const std::string& v) {
    using namespace detail;
    if (key == "input") input = v;
    else if (key == "column") column = v;
    else if (key == "kernel") { KernelSpec::from_name(v); kernel = v; }
    else if (key == "h") h = to_nonnegative(key, v);
    else if (key == "a") a = to_nonnegative(key, v);
    else if (key == "c") c = to_nonnegative(key, v);
    else if (key == "lambda") lambda = to_nonnegative(key, v);
    else if (key == "delta") { penalty_from_name(v); delta = v; }
    else if (key == "m") m = static_cast<int>(to_unsigned(key, v));
    else if (key == "seed") seed = to_unsigned(key, v);
    else if (key == "grid") grid = GridSpec::parse(v);
    else if (key == "out") out = v;
    else if (key == "meta") meta = v;
    else if (key == "report") report = v;
    else if (key == "base") { base = v; }
    else if (key == "cells") cells = to_unsigned(key, v);
    else if (key == "cuts") cuts = to_reals(key, v);
    else if (key == "masses") masses = to_reals(key, v);
    else if (key == "variant") { local_variant_from_name(v); variant = v; }
    else if (key == "beta0") beta0 = to_real(key, v);
    else if (key == "w0") w0 = to_nonnegative(key, v);
    else if (key == "mu0") mu0 = to_real(key, v);
    else if (key == "tau") tau = to_nonnegative(key, v);
    else if (key == "sigma") sigma = to_nonnegative(key, v);
    else if (key == "basis") { basis_from_name(v); basis = v; }
    else if (key == "prior") {
      if (v != "flat" && v != "shrink") throw DomainError("prior must be flat or shrink");
      prior = v;
    }
    else if (key == "draws") draws = to_unsigned(key, v);
    else if (key == "coef-draws") coef_draws = to_unsigned(key, v);
    else if (key == "lattice-points") lattice_points = to_unsigned(key, v);
    else if (key == "truth") { true_density(v); truth = v; }
    else if (key == "estimators") estimators = split_list(v);
    else if (key == "n") n = to_unsigned(key, v);
    else if (key == "replications" || key == "R") replications = to_unsigned(key, v);
    else if (key == "threads") threads = to_unsigned(key, v);
    else throw DomainError("unknown option '" + key + "'");
  }

  void validate() const {
    bool known = false;
    for (const auto& s : subcommands()) known |= s == subcommand;
    if (!known) throw DomainError("unknown subcommand '" + subcommand + "'");
    if (subcommand != "simulate" && input.empty()) throw DomainError("an input file is required");
    if (h && !(*h > 0.0)) throw DomainError("bandwidth h must be positive");
    if (grid) grid->validate();
    if (subcommand == "simulate" && replications < 2) throw DomainError("simulate needs R >= 2");
  }
};

/// "key = value" lines; '#' starts a comment, blank lines are ignored.
inline std::vector<std::pair<std::string, std::string>> parse_config(std::istream& in, const std::string& source) {
  std::vector<std::pair<std::string, std::string>> out;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (const auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    const auto text = io::detail::trim(line);
    if (text.empty()) continue;
    const auto eq = text.find('=');
    if (eq == std::string_view::npos) throw io::detail::line_error(source, lineno, "expected 'key = value'");
    const auto key = io::detail::trim(text.substr(0, eq));
    const auto value = io::detail::trim(text.substr(eq + 1));
    if (key.empty()) throw io::detail::line_error(source, lineno, "missing key");
    out.emplace_back(std::string(key), std::string(value));
  }
  return out;
}

inline std::vector<std::pair<std::string, std::string>> read_config_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ParseError("cannot open config '" + path + "'");
  return parse_config(in, path);
}

/// Applies config-file entries first, then flags, so flags win.
inline RunConfig make_config(const std::string& subcommand,
                             const std::vector<std::pair<std::string, std::string>>& file_entries,
                             const std::vector<std::pair<std::string, std::string>>& flag_entries) {
  RunConfig cfg;
  cfg.subcommand = subcommand;
  for (const auto& [k, v] : file_entries) cfg.set(k, v);
  for (const auto& [k, v] : flag_entries) cfg.set(k, v);
  cfg.validate();
  return cfg;
}

namespace detail {

inline double default_bandwidth(const Sample& s) {
  const double sd = s.sd() > 0.0 ? s.sd() : 1.0;
  return sd * std::pow(static_cast<double>(s.size()), -0.2);
}

inline UnivariateDensity make_base(const std::string& spec, const Sample& s) {
  if (spec == "fit") return UnivariateDensity::normal(s.mean(), s.sd() > 0.0 ? s.sd() : 1.0);
  const auto colon = spec.find(':');
  const std::string kind = spec.substr(0, colon);
  std::vector<double> args;
  if (colon != std::string::npos) {
    std::stringstream ss(spec.substr(colon + 1));
    for (std::string part; std::getline(ss, part, ':');) args.push_back(to_real("base", part));
  }
  if (kind == "normal" && args.size() == 2) return UnivariateDensity::normal(args[0], args[1]);
  if (kind == "uniform" && args.size() == 2) return UnivariateDensity::uniform(args[0], args[1]);
  throw DomainError("base '" + spec + "': expected fit, normal:MEAN:SD or uniform:LO:HI");
}

/// Equal-width cells over the sample range.
inline std::vector<double> equal_cells(const Sample& s, std::size_t cells) {
  if (cells < 1) throw DomainError("need at least one cell");
  double lo = s.min(), hi = s.max();
  if (!(hi > lo)) {
    lo -= 0.5;
    hi += 0.5;
  }
  std::vector<double> b(cells + 1);
  for (std::size_t j = 0; j <= cells; ++j) b[j] = lo + (hi - lo) * static_cast<double>(j) / static_cast<double>(cells);
  b.back() = hi;
  return b;
}

/// Base-measure cell probabilities, renormalized over the binning range.
inline std::vector<double> cell_guesses(const UnivariateDensity& f0, std::span<const double> b) {
  std::vector<double> g(b.size() - 1);
  double total = 0.0;
  for (std::size_t j = 0; j < g.size(); ++j) total += g[j] = f0.mass(b[j], b[j + 1]);
  if (!(total > 0.0)) throw SingularStartDensity("base density gives the binning range zero mass");
  for (double& v : g) v /= total;
  for (double v : g) {
    if (!(v > 0.0)) throw SingularStartDensity("base density gives a cell zero mass");
  }
  return g;
}

inline Json reals(std::span<const double> v) { return Json(std::vector<double>(v.begin(), v.end())); }

}  // namespace detail

/// Runs one estimator subcommand on the configured grid.
inline io::DensityCurve estimate_command(const RunConfig& cfg) {
  cfg.validate();
  if (cfg.subcommand == "simulate") throw DomainError("simulate produces a report, not a density curve");
  const Sample sample = io::ingest(cfg.input, cfg.column);
  const KernelSpec kernel = KernelSpec::from_name(cfg.kernel);
  const double h = cfg.h.value_or(detail::default_bandwidth(sample));
  const GridSpec gs = cfg.grid.value_or(GridSpec{sample.min() - 3.0 * h, sample.max() + 3.0 * h, 201});
  const EvalGrid grid = gs.points();
  const auto base = detail::make_base(cfg.base, sample);

  io::DensityCurve curve;
  curve.grid.assign(grid.points().begin(), grid.points().end());
  Json extra = Json::object();
  std::function<double(double)> f;

  const std::string& sc = cfg.subcommand;
  if (sc == "kde") {
    f = [&](double x) { return kde(sample, kernel, h, x); };
  } else if (sc == "dp") {
    const DirichletPrior prior{cfg.a, base};
    extra["prior_weight"] = prior_weight(cfg.a, sample.size());
    f = [&, prior](double x) { return dp_estimate(prior, sample, kernel, h, x); };
  } else if (sc == "binned" || sc == "gendirichlet-mode") {
    const auto b = detail::equal_cells(sample, cfg.cells);
    const auto guesses = detail::cell_guesses(base, b);
    const auto data = BinnedData::from_sample(sample, b, guesses);
    extra["boundaries"] = detail::reals(b);
    extra["counts"] = detail::reals(data.counts());
    if (sc == "binned") {
      f = [&cfg, b, data](double x) {
        if (x < b.front() || x > b.back()) return 0.0;
        return binned_estimate(cfg.a, data, x);
      };
    } else {
      GenDirichletSpec spec;
      for (double g : guesses) spec.alphas.push_back(cfg.a * g);
      spec.penalty = penalty_from_name(cfg.delta);
      spec.lambda = cfg.lambda;
      const auto mode = posterior_mode(spec, data.counts());
      extra["mode"] = mode.p;
      extra["kkt_residual"] = mode.kkt_residual;
      extra["iterations"] = mode.iterations;
      f = [b, data, p = mode.p](double x) {
        if (x < b.front() || x > b.back()) return 0.0;
        const std::size_t j = data.cell_of(x);
        return p[j] / data.width(j);
      };
    }
  } else if (sc == "pinned") {
    std::vector<double> cuts = cfg.cuts, masses = cfg.masses;
    if (cuts.empty() && masses.empty()) {
      cuts = {sample.quantile(0.5)};
      masses = {0.5, 0.5};
    }
    const ControlSets control(cuts, masses);
    const DirichletPrior prior{cfg.a, base};
    extra["cuts"] = cuts;
    extra["masses"] = masses;
    // A cut point is not an inner point of any set; report the mean of the one-sided values there.
    f = [&, control, prior](double x) {
      for (double cut : control.cuts()) {
        if (x == cut) {
          const double inf = std::numeric_limits<double>::infinity();
          return 0.5 * (pinned_estimate(prior, control, sample, kernel, h, std::nextafter(x, -inf)) +
                        pinned_estimate(prior, control, sample, kernel, h, std::nextafter(x, inf)));
        }
      }
      return pinned_estimate(prior, control, sample, kernel, h, x);
    };
  } else if (sc == "residual") {
    TransformModel model;
    model.a = cfg.a;
    const auto fit = std::make_shared<ResidualFit>(fit_residuals(model, sample));
    extra["mu_hat"] = fit->theta_hat.mu;
    extra["sigma_hat"] = fit->theta_hat.sigma;
    f = [model, fit](double x) {
      const Theta t = fit->theta_hat;
      return residual_density(model, *fit, (x - t.mu) / t.sigma) / t.sigma;
    };
  } else if (sc == "hermite") {
    const auto fit = std::make_shared<HermiteBayesFit>(hermite_bayes_fit(
        sample, CoefficientPrior::robust_default(cfg.m), cfg.m, cfg.draws.value_or(200), cfg.coef_draws, cfg.seed));
    extra["min_ess"] = fit->min_ess;
    extra["parameter_draws"] = fit->draws.size();
    f = [fit](double x) { return fit->at(x).value; };
  } else if (sc == "loglinear" || sc == "sic") {
    const auto data = LogLinearData::rescaled(sample);
    const Basis basis = basis_from_name(cfg.basis);
    int m = cfg.m;
    if (sc == "sic") {
      SicOptions opt;
      opt.at_posterior_mode = cfg.prior == "shrink";
      opt.tau = cfg.tau;
      const auto sic = sic_select(data, basis, cfg.m, opt);
      m = sic.selected;
      Json entries = Json::array();
      for (const auto& e : sic.entries) {
        Json j = {{"m", e.m}, {"fitted", e.fitted}};
        if (e.fitted) {
          j["loglik"] = e.loglik;
          j["sic"] = e.sic;
        } else {
          j["message"] = e.message;
        }
        entries.push_back(j);
      }
      extra["sic"] = entries;
      extra["selected"] = m;
    }
    const auto fit = cfg.prior == "shrink"
                         ? posterior_mode(data, basis, CoefPriorNormal::shrinking(std::vector<double>(m, 0.0), cfg.tau))
                         : mle(data, basis, m);
    extra["coefficients"] = std::vector<double>(fit.model.c.begin(), fit.model.c.end());
    extra["loglik"] = fit.loglik;
    extra["support"] = {data.map().lo, data.map().hi};
    const auto density = std::make_shared<LogLinearDensity>(fit.model, data.map());
    f = [density](double x) { return (*density)(x); };
  } else if (sc == "local") {
    LocalSpec spec;
    spec.variant = local_variant_from_name(cfg.variant);
    spec.h = h;
    spec.kernel = kernel;
    spec.c = cfg.c;
    spec.beta0 = cfg.beta0;
    spec.w0 = cfg.w0;
    spec.mu0 = cfg.mu0;
    spec.tau = cfg.tau;
    spec.sigma = cfg.sigma;
    spec.validate();
    auto ctx = std::make_shared<LocalContext>(LocalContext{sample, base, std::nullopt, std::nullopt});
    if (spec.variant == LocalVariant::const_two_stage || spec.variant == LocalVariant::altkernel) {
      ctx->family = LocationScaleFamily::normal();
      ctx->background = moment_posterior(sample, cfg.lattice_points);
    }
    f = [spec, ctx](double x) { return local_estimate(spec, *ctx, x); };
  } else if (sc == "ebayes") {
    const auto positions = default_checking_positions(sample);
    extra["positions"] = positions;
    const std::size_t draws = cfg.draws.value_or(0);
    if (draws == 0) {
      const double q = q_statistic(sample, kernel, h, [&](double t) { return base.pdf(t); }, positions);
      extra["q"] = q;
      f = [&, positions](double x) { return empirical_bayes_estimate(base, sample, kernel, h, positions, x); };
    } else {
      const auto fit = std::make_shared<EmpiricalBayesFit>(LocationScaleFamily::normal(),
                                                           moment_posterior(sample, cfg.lattice_points), sample, kernel,
                                                           h, positions, draws, cfg.seed);
      extra["q"] = std::vector<double>(fit->q_values().begin(), fit->q_values().end());
      f = [fit](double x) { return (*fit)(x); };
    }
  } else {
    throw DomainError("unknown subcommand '" + sc + "'");
  }

  curve.values.reserve(curve.grid.size());
  for (double x : curve.grid) curve.values.push_back(f(x));

  Json& meta = curve.metadata;
  meta["estimator"] = sc;
  meta["parameters"] = {{"kernel", cfg.kernel}, {"h", h},       {"a", cfg.a},       {"c", cfg.c},
                        {"lambda", cfg.lambda}, {"delta", cfg.delta}, {"m", cfg.m}, {"base", cfg.base}};
  if (sc == "local") {
    meta["parameters"]["variant"] = cfg.variant;
    meta["parameters"]["beta0"] = cfg.beta0;
    meta["parameters"]["w0"] = cfg.w0;
    meta["parameters"]["mu0"] = cfg.mu0;
    meta["parameters"]["tau"] = cfg.tau;
    meta["parameters"]["sigma"] = cfg.sigma;
  }
  if (sc == "loglinear" || sc == "sic") {
    meta["parameters"]["basis"] = cfg.basis;
    meta["parameters"]["prior"] = cfg.prior;
    meta["parameters"]["tau"] = cfg.tau;
  }
  meta["seed"] = cfg.seed;
  meta["input"] = cfg.input;
  meta["n"] = sample.size();
  meta["distinct"] = sample.distinct_count();
  meta["grid"] = {{"min", gs.min}, {"max", gs.max}, {"count", gs.count}};
  meta["integral"] = curve.grid.size() > 1 ? Json(curve.integral()) : Json(nullptr);
  meta["details"] = extra;
  return curve;
}

inline SimConfig to_sim_config(const RunConfig& cfg) {
  SimConfig sim;
  sim.truth = cfg.truth;
  sim.estimators = cfg.estimators;
  sim.n = cfg.n;
  sim.replications = cfg.replications;
  sim.seed = cfg.seed;
  sim.kernel = KernelSpec::from_name(cfg.kernel);
  sim.h = cfg.h;
  if (cfg.grid) {
    sim.grid_min = cfg.grid->min;
    sim.grid_max = cfg.grid->max;
    sim.grid_count = cfg.grid->count;
  }
  sim.a = cfg.a;
  sim.c = cfg.c;
  sim.lattice_points = cfg.lattice_points;
  sim.threads = cfg.threads;
  return sim;
}

inline SimReport simulate_command(const RunConfig& cfg) {
  cfg.validate();
  return simulate(to_sim_config(cfg));
}

inline Json report_metadata(const SimReport& rep) {
  Json meta = {{"truth", rep.truth}, {"n", rep.n}, {"replications", rep.replications}, {"h", rep.h}, {"seed", rep.seed}};
  Json est = Json::array();
  for (const auto& e : rep.estimators) {
    est.push_back({{"id", e.id}, {"mise", e.mise}, {"mise_se", e.mise_se}, {"used", e.ise.size()}, {"failures", e.failures}});
  }
  meta["estimators"] = est;
  return meta;
}

/// Executes a configured run, writing files or stdout. Returns the exit code.
inline int run(const RunConfig& cfg, std::ostream& out) {
  if (cfg.subcommand == "simulate") {
    const auto rep = simulate_command(cfg);
    std::ostringstream csv;
    write_report(csv, rep);
    io::write_text(cfg.report, csv.str(), out);
    if (!cfg.meta.empty()) io::write_text(cfg.meta, report_metadata(rep).dump(2) + "\n", out);
    return 0;
  }
  const auto curve = estimate_command(cfg);
  io::write_text(cfg.out, io::to_csv(curve), out);
  if (!cfg.meta.empty()) io::write_text(cfg.meta, curve.metadata.dump(2) + "\n", out);
  return 0;
}

}  // namespace bayesdens::cli
