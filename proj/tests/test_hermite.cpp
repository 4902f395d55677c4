#include <cmath>
#include <random>
#include <vector>

#include <gtest/gtest.h>

#include "bayesdens/hermite.hpp"
#include "bayesdens/quadrature.hpp"

using namespace bayesdens;

namespace {

Sample normal_sample(std::size_t n, std::uint64_t seed) {
  Rng rng = make_rng(seed);
  std::vector<double> v(n);
  for (double& x : v) x = standard_normal(rng);
  return Sample(v);
}

double integral_over_line(auto&& f, double center, double scale) {
  const std::vector<double> bp = {center - 14 * scale, center - 2 * scale, center, center + 2 * scale, center + 14 * scale};
  return integrate(f, std::span<const double>(bp), {1e-11}).value;
}

}  // namespace

TEST(HermitePoly, ListedClosedForms) {
  EXPECT_DOUBLE_EQ(hermite_poly(3, 1.0), -2.0);
  EXPECT_DOUBLE_EQ(hermite_poly(4, 2.0), -5.0);
  std::mt19937_64 rng(7);
  std::uniform_real_distribution<double> u(-4.0, 4.0);
  for (int i = 0; i < 100; ++i) {
    const double x = u(rng);
    EXPECT_EQ(hermite_poly(0, x), 1.0);
    EXPECT_EQ(hermite_poly(1, x), x);
    EXPECT_NEAR(hermite_poly(2, x), x * x - 1, 1e-12 * (1 + x * x));
    EXPECT_NEAR(hermite_poly(3, x), x * x * x - 3 * x, 1e-12 * (1 + std::pow(std::abs(x), 3)));
    EXPECT_NEAR(hermite_poly(4, x), std::pow(x, 4) - 6 * x * x + 3, 1e-12 * (1 + std::pow(x, 4)));
  }
  EXPECT_THROW(hermite_poly(-1, 0.0), DomainError);
}

TEST(HermitePoly, Orthogonality) {
  for (int j = 0; j <= 6; ++j) {
    for (int k = 0; k <= 6; ++k) {
      const double v = integral_over_line([&](double x) { return hermite_poly(j, x) * hermite_poly(k, x) * phi(x); }, 0.0, 1.0);
      EXPECT_NEAR(v, j == k ? factorial(j) : 0.0, 1e-7) << j << "," << k;
    }
  }
}

TEST(StraightCoeffs, Examples) {
  EXPECT_NEAR(straight_coeffs(Sample({-1.0, 1.0}), 0.0, 1.0, 3)[0], 0.0, 1e-15);
  EXPECT_DOUBLE_EQ(straight_coeffs(Sample({0.0}), 0.0, 1.0, 4)[1], 3.0);
  EXPECT_TRUE(straight_coeffs(Sample({0.0}), 0.0, 1.0, 2).empty());
  const auto s = normal_sample(20000, 11);
  const auto g = straight_coeffs(s, 0.0, 1.0, 4);
  const double band = 4.0 / std::sqrt(20000.0);
  EXPECT_NEAR(g[0], 0.0, band * std::sqrt(6.0));
  EXPECT_NEAR(g[1], 0.0, band * std::sqrt(24.0));
}

TEST(RobustCoeffs, Examples) {
  EXPECT_NEAR(robust_coeffs(Sample({2.5}), 2.5, 1.0, 0)[0], std::numbers::sqrt2, 1e-15);
  const auto s = normal_sample(20000, 12);
  const auto d = robust_coeffs(s, 0.0, 1.0, 2);
  const double band = 4.0 / std::sqrt(20000.0);
  EXPECT_NEAR(d[0], 1.0, band);
  EXPECT_NEAR(d[1], 0.0, band);
  EXPECT_NEAR(d[2], 0.0, band);
}

TEST(RobustCoeffs, BoundedUnderExtremeOutlier) {
  std::vector<double> v(50);
  Rng rng = make_rng(3);
  for (double& x : v) x = standard_normal(rng);
  v.push_back(1e10);
  const int m = 6;
  const auto d = robust_coeffs(Sample(v), 0.0, 1.0, m);
  for (int j = 0; j <= m; ++j) {
    double bound = 0.0;
    for (double u = -12.0; u <= 12.0; u += 1e-3) bound = std::max(bound, std::abs(hermite_poly(j, u) * std::exp(-u * u / 4)));
    bound *= std::numbers::sqrt2 / std::sqrt(factorial(j));
    EXPECT_TRUE(std::isfinite(d[j]));
    EXPECT_LE(std::abs(d[j]), bound * (1 + 1e-6)) << j;
  }
}

TEST(EvalDensity, NormalRecovery) {
  const auto straight = HermiteModel::straight(0.3, 1.7, {0.0, 0.0, 0.0});
  const auto robust = HermiteModel::robust(0.3, 1.7, {1.0, 0.0, 0.0, 0.0});
  for (double x : {-3.0, 0.0, 0.3, 2.2}) {
    EXPECT_NEAR(eval_density(straight, x), normal_pdf(x, 0.3, 1.7), 1e-15);
    EXPECT_NEAR(eval_density(robust, x), normal_pdf(x, 0.3, 1.7), 1e-15);
  }
}

TEST(EvalDensity, StraightIntegratesToOne) {
  std::mt19937_64 rng(5);
  std::normal_distribution<double> g(0.0, 0.7);
  for (int rep = 0; rep < 20; ++rep) {
    std::vector<double> gammas(4);
    for (double& c : gammas) c = g(rng);
    const auto model = HermiteModel::straight(-0.4, 1.3, gammas);
    EXPECT_NEAR(integral_over_line([&](double x) { return eval_density(model, x); }, -0.4, 1.3), 1.0, 1e-8);
  }
}

TEST(EvalDensity, RobustIntegralMatchesBasisMasses) {
  std::mt19937_64 rng(6);
  std::normal_distribution<double> g(0.0, 0.4);
  for (int rep = 0; rep < 10; ++rep) {
    std::vector<double> deltas(7);
    for (double& c : deltas) c = g(rng);
    const auto model = HermiteModel::robust(1.1, 0.8, deltas);
    EXPECT_NEAR(integral_over_line([&](double x) { return eval_density(model, x); }, 1.1, 0.8), robust_total_mass(deltas), 1e-8);
  }
}

TEST(MuSigmaPosterior, ZeroShapeGivesNormalModelCovariance) {
  const auto post = musigma_posterior(2.0, 0.5, 0.0, 0.0, 50);
  EXPECT_FALSE(post.regularized);
  EXPECT_DOUBLE_EQ(post.covariance(0, 0), 1.0 / 50);
  EXPECT_DOUBLE_EQ(post.covariance(0, 1), 0.0);
  EXPECT_DOUBLE_EQ(post.covariance(1, 1), 0.5 / 50);
  EXPECT_DOUBLE_EQ(post.center[0], 4.0);
  EXPECT_DOUBLE_EQ(post.center[1], std::log(0.5));
}

TEST(MuSigmaPosterior, RegularizesNegativeKurtosis) {
  std::vector<double> v;
  for (int i = 0; i < 10; ++i) {
    v.push_back(-1.0);
    v.push_back(1.0);
  }
  const auto post = musigma_posterior(Sample(v));
  EXPECT_TRUE(post.regularized);
  EXPECT_GT(post.covariance.determinant(), 0.0);
  EXPECT_THROW(musigma_posterior(Sample({1, 2, 3, 4, 5, 6, 7})), DomainError);
}

TEST(MuSigmaPosterior, SingleDrawIsRegressionLocked) {
  const auto s = normal_sample(40, 21);
  const auto a = musigma_posterior_draws(s, 1, 99);
  const auto b = musigma_posterior_draws(s, 1, 99);
  ASSERT_EQ(a.size(), 1u);
  EXPECT_EQ(a[0].mu, b[0].mu);
  EXPECT_EQ(a[0].sigma, b[0].sigma);
  EXPECT_NEAR(a[0].mu, 0.37511349963029694, 1e-12);
  EXPECT_NEAR(a[0].sigma, 0.72776676916488015, 1e-12);
}

TEST(MuSigmaPosterior, DrawMeanMatchesCenter) {
  const auto s = normal_sample(60, 22);
  const auto post = musigma_posterior(s);
  const std::size_t B = 100000;
  const auto draws = musigma_posterior_draws(post, B, 5);
  double m1 = 0.0, m2 = 0.0;
  for (const auto& d : draws) {
    m1 += d.mu / post.sd_star;
    m2 += std::log(d.sigma);
  }
  m1 /= B;
  m2 /= B;
  EXPECT_NEAR(m1, post.center[0], 4 * std::sqrt(post.covariance(0, 0) / B));
  EXPECT_NEAR(m2, post.center[1], 4 * std::sqrt(post.covariance(1, 1) / B));
}

TEST(HermiteBayes, PointMassPriorAveragesNormals) {
  const auto s = normal_sample(100, 31);
  const auto prior = CoefficientPrior::point_mass_normal(4);
  const auto draws = musigma_posterior_draws(s, 20, 8);
  for (double x : {-1.0, 0.0, 0.7}) {
    double expect = 0.0;
    for (const auto& d : draws) expect += normal_pdf(x, d.mu, d.sigma);
    expect /= 20.0;
    const auto est = bayes_estimate(s, prior, 4, 20, 50, 8, x);
    EXPECT_NEAR(est.value, expect, 1e-14);
    EXPECT_EQ(est.mc_se, 0.0);
  }
}

TEST(HermiteBayes, ConsistentForLargeNormalSample) {
  const auto s = normal_sample(2000, 41);
  const auto fit = hermite_bayes_fit(s, CoefficientPrior::robust_default(4), 4, 30, 2000, 17);
  EXPECT_GE(fit.min_ess, 10.0);
  for (double x : {-1.0, 0.0, 1.0}) EXPECT_NEAR(fit.at(x).value, phi(x), 0.02) << x;
}

TEST(HermiteBayes, DoublingCoefficientDrawsIsStable) {
  const auto s = normal_sample(300, 42);
  const auto prior = CoefficientPrior::robust_default(4);
  const auto a = hermite_bayes_fit(s, prior, 4, 10, 2000, 23);
  const auto b = hermite_bayes_fit(s, prior, 4, 10, 4000, 23);
  for (double x : {-1.0, 0.0, 1.0}) {
    const auto va = a.at(x), vb = b.at(x);
    EXPECT_GT(va.mc_se, 0.0);
    EXPECT_LT(std::abs(va.value - vb.value), 3 * va.mc_se) << x;
  }
}

TEST(HermiteBayes, Deterministic) {
  const auto s = normal_sample(200, 43);
  const auto prior = CoefficientPrior::robust_default(3);
  EXPECT_EQ(bayes_estimate(s, prior, 3, 5, 500, 4, 0.2).value, bayes_estimate(s, prior, 3, 5, 500, 4, 0.2).value);
}

TEST(HermiteBayes, PriorProposalReportsLowEss) {
  const auto s = normal_sample(2000, 44);
  HermiteBayesOptions opt;
  opt.proposal = HermiteProposal::prior;
  EXPECT_THROW(hermite_bayes_fit(s, CoefficientPrior::robust_default(4), 4, 3, 200, 1, opt), UnreliablePosterior);
}
