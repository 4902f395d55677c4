#include <cmath>
#include <numeric>
#include <random>
#include <vector>

#include <gtest/gtest.h>

#include "bayesdens/gen_dirichlet.hpp"
#include "bayesdens/rng.hpp"

using namespace bayesdens;

namespace {

std::vector<double> random_interior(Rng& rng, std::size_t k) {
  std::vector<double> p(k);
  double s = 0.0;
  for (double& v : p) {
    v = -std::log(uniform01(rng));
    s += v;
  }
  for (double& v : p) v /= s;
  return p;
}

double objective(const GenDirichletSpec& spec, std::span<const double> counts, std::span<const double> p) {
  return log_density(posterior_update(spec, counts), p);
}

}  // namespace

TEST(Penalty, Examples) {
  const std::vector<double> flat = {0.25, 0.25, 0.25, 0.25};
  for (auto d : {Penalty::squared_difference, Penalty::squared_second_difference, Penalty::squared_log_difference}) {
    EXPECT_EQ(penalty(d, flat), 0.0);
  }
  const std::vector<double> two = {0.25, 0.75};
  EXPECT_DOUBLE_EQ(penalty(Penalty::squared_difference, two), 0.25);
  const std::vector<double> linear = {0.1, 0.2, 0.3, 0.4};
  EXPECT_NEAR(penalty(Penalty::squared_second_difference, linear), 0.0, 1e-30);
  EXPECT_THROW(penalty(Penalty::squared_second_difference, two), DomainError);
  const std::vector<double> edge = {0.0, 1.0};
  EXPECT_THROW(penalty(Penalty::squared_log_difference, edge), DomainError);
  EXPECT_EQ(penalty_from_name("dlog"), Penalty::squared_log_difference);
  EXPECT_THROW(penalty_from_name("d3"), DomainError);
}

TEST(LogDensity, FlatAndDirichletLimits) {
  const std::vector<double> p = {0.2, 0.5, 0.3};
  EXPECT_EQ(log_density({{1, 1, 1}, Penalty::squared_difference, 0.0}, p), 0.0);
  const GenDirichletSpec dir{{2.0, 3.5, 0.7}, Penalty::squared_log_difference, 0.0};
  EXPECT_NEAR(log_density(dir, p), std::log(0.2) + 2.5 * std::log(0.5) - 0.3 * std::log(0.3), 1e-14);
  const std::vector<double> third = {1.0 / 3, 1.0 / 3, 1.0 / 3};
  const GenDirichletSpec pen{{1, 1, 1}, Penalty::squared_difference, 5.0};
  EXPECT_EQ(log_density(pen, third), 0.0);
}

TEST(LogDensity, BoundaryConvention) {
  const std::vector<double> p = {0.0, 0.4, 0.6};
  EXPECT_EQ(log_density({{0.5, 2, 2}, Penalty::squared_difference, 0.0}, p), -INFINITY);
  EXPECT_EQ(log_density({{3.0, 2, 2}, Penalty::squared_difference, 0.0}, p), -INFINITY);
  EXPECT_NEAR(log_density({{1.0, 2, 2}, Penalty::squared_difference, 1.0}, p),
              std::log(0.4) + std::log(0.6) - (0.16 + 0.04), 1e-14);
  EXPECT_THROW(log_density({{1.0, 2, 2}, Penalty::squared_log_difference, 1.0}, p), DomainError);
  const std::vector<double> off = {0.3, 0.3, 0.3};
  EXPECT_THROW(log_density({{1, 1, 1}, Penalty::squared_difference, 0.0}, off), DomainError);
}

TEST(PosteriorUpdate, AddsCounts) {
  const GenDirichletSpec spec{{1.0, 1.0}, Penalty::squared_difference, 3.0};
  const std::vector<double> n = {3, 1};
  auto up = posterior_update(spec, n);
  EXPECT_EQ(up.alphas, (std::vector<double>{4.0, 2.0}));
  EXPECT_EQ(up.lambda, 3.0);
  const std::vector<double> zero = {0, 0};
  EXPECT_EQ(posterior_update(spec, zero).alphas, spec.alphas);
  const std::vector<double> n2 = {2, 5};
  const std::vector<double> pooled = {5, 6};
  EXPECT_EQ(posterior_update(posterior_update(spec, n), n2).alphas, posterior_update(spec, pooled).alphas);
  EXPECT_EQ(posterior_update(posterior_update(spec, n2), n).alphas, posterior_update(spec, pooled).alphas);
  const std::vector<double> bad = {1.5, 0};
  EXPECT_THROW(posterior_update(spec, bad), DomainError);
}

TEST(Coarsen, Blocks) {
  const std::vector<double> a = {1, 2, 3};
  EXPECT_EQ(coarsen_counts(a, {{0}, {1}, {2}}), a);
  EXPECT_EQ(coarsen_counts(a, {{0, 1}, {2}}), (std::vector<double>{3, 3}));
  EXPECT_EQ(coarsen_counts(a, {{0, 1, 2}}), (std::vector<double>{6}));
  EXPECT_THROW(coarsen_counts(a, {{0, 2}, {1}}), DomainError);
  EXPECT_THROW(coarsen_counts(a, {{0, 1}}), DomainError);
}

TEST(PosteriorMode, ClosedFormWithoutPenalty) {
  Rng rng = make_rng(31);
  for (int rep = 0; rep < 50; ++rep) {
    const std::size_t k = 2 + rep % 7;
    GenDirichletSpec spec{std::vector<double>(k), Penalty::squared_difference, 0.0};
    std::vector<double> n(k);
    double total = 0.0;
    for (std::size_t j = 0; j < k; ++j) {
      spec.alphas[j] = 0.2 + 3.0 * uniform01(rng);
      n[j] = std::floor(10.0 * uniform01(rng)) + (spec.alphas[j] <= 1.0 ? 1.0 : 0.0);
      total += spec.alphas[j] + n[j];
    }
    auto r = posterior_mode(spec, n);
    EXPECT_LE(r.kkt_residual, 1e-8);
    for (std::size_t j = 0; j < k; ++j) EXPECT_NEAR(r.p[j], (spec.alphas[j] + n[j] - 1.0) / (total - k), 1e-10);
  }
}

TEST(PosteriorMode, LargePenaltyGivesUniform) {
  const GenDirichletSpec spec{{2, 5, 1.5, 9}, Penalty::squared_difference, 1e8};
  const std::vector<double> n = {4, 0, 7, 2};
  auto r = posterior_mode(spec, n);
  for (double v : r.p) EXPECT_NEAR(v, 0.25, 1e-4);
}

TEST(PosteriorMode, SymmetricFixedPoint) {
  const std::vector<double> n = {0, 0, 0};
  for (auto d : {Penalty::squared_difference, Penalty::squared_second_difference, Penalty::squared_log_difference}) {
    for (double lambda : {0.0, 0.3, 50.0}) {
      auto r = posterior_mode({{5, 5, 5}, d, lambda}, n);
      for (double v : r.p) EXPECT_NEAR(v, 1.0 / 3.0, 1e-12);
    }
  }
}

TEST(PosteriorMode, BeatsRandomInteriorPoints) {
  Rng rng = make_rng(32);
  for (auto d : {Penalty::squared_difference, Penalty::squared_second_difference, Penalty::squared_log_difference}) {
    const GenDirichletSpec spec{{1.5, 2.0, 1.2, 3.0, 1.1}, d, 4.0};
    const std::vector<double> n = {3, 0, 8, 1, 2};
    auto r = posterior_mode(spec, n);
    EXPECT_LE(r.kkt_residual, 1e-8);
    const double best = objective(spec, n, r.p);
    for (int i = 0; i < 64; ++i) {
      auto p = random_interior(rng, 5);
      EXPECT_GE(best, objective(spec, n, p));
    }
  }
}

TEST(PosteriorMode, ArgmaxScaleConsistent) {
  const std::vector<double> zero = {0, 0, 0, 0};
  for (auto d : {Penalty::squared_difference, Penalty::squared_second_difference}) {
    const std::vector<double> b = {2.0, 0.5, 4.0, 1.5};
    auto spec_for = [&](double s) {
      GenDirichletSpec g{{}, d, 3.0 * s};
      for (double v : b) g.alphas.push_back(1.0 + s * v);
      return g;
    };
    auto r1 = posterior_mode(spec_for(1.0), zero);
    auto r2 = posterior_mode(spec_for(7.5), zero);
    for (std::size_t j = 0; j < 4; ++j) EXPECT_NEAR(r1.p[j], r2.p[j], 1e-10);
  }
}

TEST(PosteriorMode, BoundaryCases) {
  const std::vector<double> n = {0, 0, 0};
  EXPECT_THROW(posterior_mode({{0.5, 2, 2}, Penalty::squared_difference, 0.0}, n), BoundaryMode);
  EXPECT_THROW(posterior_mode({{0.5, 2, 2}, Penalty::squared_difference, 1.0}, n), BoundaryMode);
  auto r = posterior_mode({{1.0, 2, 4}, Penalty::squared_difference, 0.0}, n);
  EXPECT_TRUE(r.degenerate);
  EXPECT_EQ(r.p, (std::vector<double>{0.0, 0.25, 0.75}));
  auto flat = posterior_mode({{1.0, 1.0, 1.0}, Penalty::squared_difference, 0.0}, n);
  EXPECT_TRUE(flat.degenerate);
  // A penalty regularizes a flat cell away from the edge.
  auto reg = posterior_mode({{1.0, 2, 4}, Penalty::squared_difference, 5.0}, n);
  EXPECT_FALSE(reg.degenerate);
  EXPECT_GT(reg.p[0], 0.0);
  EXPECT_LE(reg.kkt_residual, 1e-8);
}

TEST(PosteriorMode, Deterministic) {
  const GenDirichletSpec spec{{1.5, 2.0, 1.2, 3.0}, Penalty::squared_log_difference, 2.0};
  const std::vector<double> n = {3, 0, 8, 1};
  EXPECT_EQ(posterior_mode(spec, n).p, posterior_mode(spec, n).p);
}

TEST(Conjugacy, BarycentricGridMatchesUpdate) {
  const GenDirichletSpec prior{{2.0, 2.0, 2.0}, Penalty::squared_difference, 2.0};
  const std::vector<double> n = {4, 1, 2};
  const auto post = posterior_update(prior, n);
  const int N = 200;
  std::vector<double> brute, direct;
  for (int i = 0; i < N; ++i) {
    for (int j = 0; i + j < N; ++j) {
      const double p1 = (i + 1.0 / 3.0) / N, p2 = (j + 1.0 / 3.0) / N;
      const std::vector<double> p = {p1, p2, 1.0 - p1 - p2};
      brute.push_back(log_density(prior, p) + 4 * std::log(p[0]) + std::log(p[1]) + 2 * std::log(p[2]));
      direct.push_back(log_density(post, p));
    }
  }
  auto norm = [](std::vector<double> lw) {
    const double top = *std::max_element(lw.begin(), lw.end());
    double s = 0.0;
    for (double& v : lw) s += (v = std::exp(v - top));
    for (double& v : lw) v /= s;
    return lw;
  };
  auto a = norm(brute), b = norm(direct);
  double worst = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) worst = std::max(worst, std::abs(a[i] - b[i]));
  EXPECT_LE(worst, 1e-6);
}
