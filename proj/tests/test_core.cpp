#include <cmath>
#include <numeric>
#include <vector>

#include <gtest/gtest.h>

#include "bayesdens/density.hpp"
#include "bayesdens/family.hpp"
#include "bayesdens/kernels.hpp"
#include "bayesdens/posterior_grid.hpp"
#include "bayesdens/quadrature.hpp"
#include "bayesdens/sample.hpp"

using namespace bayesdens;

TEST(Sample, SortsAndGroupsDistinctValues) {
  Sample s({3.0, 1.0, 2.0, 1.0});
  ASSERT_EQ(s.size(), 4u);
  EXPECT_EQ(s[0], 1.0);
  EXPECT_EQ(s[3], 3.0);
  ASSERT_EQ(s.distinct_count(), 3u);
  EXPECT_EQ(s.distinct()[0].multiplicity, 2u);
  std::size_t total = 0;
  for (const auto& d : s.distinct()) total += d.multiplicity;
  EXPECT_EQ(total, s.size());
}

TEST(Sample, RejectsEmptyAndNonFinite) {
  EXPECT_THROW(Sample(std::vector<double>{}), DomainError);
  EXPECT_THROW(Sample({1.0, NAN}), DomainError);
  EXPECT_THROW(Sample({INFINITY}), DomainError);
}

TEST(Sample, MomentsAndFractions) {
  Sample s({1.0, 2.0, 3.0, 4.0});
  EXPECT_DOUBLE_EQ(s.mean(), 2.5);
  EXPECT_NEAR(s.sd(), std::sqrt(5.0 / 3.0), 1e-15);
  EXPECT_DOUBLE_EQ(s.fraction_in(1.0, 3.0), 0.5);  // (1, 3] holds 2 and 3
  EXPECT_DOUBLE_EQ(s.quantile(0.5), 2.5);
}

TEST(EvalGrid, RequiresStrictlyIncreasingPoints) {
  EXPECT_THROW(EvalGrid({1.0, 1.0}), DomainError);
  EXPECT_THROW(EvalGrid(std::vector<double>{}), DomainError);
  auto g = EvalGrid::linspace(-1.0, 1.0, 5);
  EXPECT_EQ(g.size(), 5u);
  EXPECT_DOUBLE_EQ(g[2], 0.0);
  EXPECT_DOUBLE_EQ(g[4], 1.0);
}

TEST(Quadrature, ConstantIntegrand) { EXPECT_NEAR(quadrature([](double) { return 1.0; }, 0.0, 1.0), 1.0, 1e-12); }

TEST(Quadrature, ClippedYepanechnikovHasUnitMass) {
  auto k = [](double z) { return std::max(0.0, 1.5 * (1.0 - 4.0 * z * z)); };
  const std::vector<double> bp = {-1.0, -0.5, 0.5, 1.0};
  EXPECT_NEAR(integrate(k, std::span<const double>(bp)).value, 1.0, 1e-9);
  // Without hinting the kinks the adaptive refinement still gets there.
  EXPECT_NEAR(quadrature(k, -1.0, 1.0), 1.0, 1e-9);
}

TEST(Quadrature, CubicAntiderivative) {
  EXPECT_NEAR(quadrature([](double x) { return x * x * x; }, 0.0, 1.0), 0.25, 1e-12);
  EXPECT_NEAR(quadrature([](double x) { return x * x * x; }, 1.0, 0.0), -0.25, 1e-12);
}

TEST(Quadrature, ReportsNonConvergenceWithEstimate) {
  QuadratureOptions opt{1e-14, 3};
  try {
    integrate([](double x) { return std::sqrt(std::abs(x)); }, -1.0, 1.0, opt);
    FAIL() << "expected QuadratureError";
  } catch (const QuadratureError& e) {
    EXPECT_NEAR(e.estimate(), 4.0 / 3.0, 1e-3);
    EXPECT_GT(e.error_bound(), 1e-14);
    EXPECT_EQ(e.name(), "QuadratureError");
  }
}

TEST(Quadrature, FrozenRuleReusesPanels) {
  const std::vector<double> bp = {0.0, 1.0};
  auto rule = adaptive_rule([](double x) { return std::exp(3.0 * x); }, std::span<const double>(bp), {1e-12});
  EXPECT_NEAR(rule.apply([](double x) { return std::exp(3.0 * x); }), (std::exp(3.0) - 1.0) / 3.0, 1e-11);
  EXPECT_NEAR(rule.apply([](double x) { return x * std::exp(3.0 * x); }),
              (2.0 * std::exp(3.0) + 1.0) / 9.0, 1e-10);
}

TEST(GridPosterior, SymmetricWeights) {
  const std::vector<double> lw = {0.0, 0.0};
  auto m = normalize_log_weights(lw);
  EXPECT_DOUBLE_EQ(m[0], 0.5);
  EXPECT_DOUBLE_EQ(m[1], 0.5);
}

TEST(GridPosterior, ThreeToOne) {
  const std::vector<double> lw = {0.0, std::log(3.0)};
  auto m = normalize_log_weights(lw);
  EXPECT_NEAR(m[0], 0.25, 1e-15);
  EXPECT_NEAR(m[1], 0.75, 1e-15);
}

TEST(GridPosterior, ShiftInvariance) {
  const std::vector<double> base = {-1000.0, -1001.5, -999.25, -1003.0};
  for (double c : {-1e5, -3.0, 0.0, 7.5, 1e5}) {
    std::vector<double> shifted = base;
    for (double& v : shifted) v += c;
    auto a = normalize_log_weights(base);
    auto b = normalize_log_weights(shifted);
    for (std::size_t i = 0; i < a.size(); ++i) EXPECT_NEAR(a[i], b[i], 1e-12);
  }
  const std::vector<double> one = {-1000.0};
  EXPECT_DOUBLE_EQ(normalize_log_weights(one)[0], 1.0);
}

TEST(GridPosterior, PreservesOrderingAndSumsToOne) {
  const std::vector<double> lw = {-3.0, 2.0, -INFINITY, 0.5};
  auto m = normalize_log_weights(lw);
  EXPECT_NEAR(std::accumulate(m.begin(), m.end(), 0.0), 1.0, 1e-12);
  EXPECT_GT(m[1], m[3]);
  EXPECT_GT(m[3], m[0]);
  EXPECT_EQ(m[2], 0.0);
}

TEST(GridPosterior, AllMinusInfinityIsDegenerate) {
  const std::vector<double> lw = {-INFINITY, -INFINITY};
  EXPECT_THROW(normalize_log_weights(lw), DegeneratePosterior);
}

TEST(Lattice, DefaultBoundsFromDistinctValues) {
  Sample s({-1.0, 0.0, 1.0});
  auto lat = make_lattice(s);
  EXPECT_EQ(lat.size(), 101u * 101u);
  EXPECT_NEAR(lat.first_axis().front(), -6.0, 1e-12);
  EXPECT_NEAR(lat.first_axis().back(), 6.0, 1e-12);
  EXPECT_NEAR(lat.second_axis().front(), 0.125, 1e-12);
  EXPECT_NEAR(lat.second_axis().back(), 8.0, 1e-12);
  EXPECT_NEAR(lat.second_axis()[50], 1.0, 1e-12);
  Sample dup({-1.0, 0.0, 1.0, 1.0});
  auto lat2 = make_lattice(dup);
  EXPECT_TRUE(std::equal(lat.first_axis().begin(), lat.first_axis().end(), lat2.first_axis().begin()));
}

TEST(NormalFamily, QuantileInvertsCdf) {
  const auto fam = LocationScaleFamily::normal();
  for (Theta t : {Theta{0.0, 1.0}, Theta{2.5, 0.3}, Theta{-4.0, 7.0}}) {
    for (double p : {0.05, 0.5, 0.95}) EXPECT_NEAR(fam.cdf(fam.quantile(p, t), t), p, 1e-8);
  }
  EXPECT_NEAR(fam.quantile(0.975, {0.0, 1.0}), 1.959963984540054, 1e-12);
}

TEST(NormalFamily, DensityHasUnitMassAndMonotoneCdf) {
  const auto fam = LocationScaleFamily::normal();
  for (Theta t : {Theta{0.0, 1.0}, Theta{1.0, 0.2}, Theta{-3.0, 4.0}}) {
    const double m = quadrature([&](double x) { return fam.pdf(x, t); }, t.mu - 10 * t.sigma, t.mu + 10 * t.sigma);
    EXPECT_NEAR(m, 1.0, 1e-9);
    double prev = 0.0;
    for (double x = t.mu - 6 * t.sigma; x <= t.mu + 6 * t.sigma; x += 0.1 * t.sigma) {
      const double c = fam.cdf(x, t);
      EXPECT_GE(c, prev);
      prev = c;
    }
  }
}

TEST(NormalFamily, RejectsNonPositiveScale) {
  EXPECT_THROW(LocationScaleFamily::normal().residual(0.0, {0.0, 0.0}), NonInvertibleTransform);
}

TEST(CustomFamily, QuantileByBisection) {
  // Logistic residual density.
  auto base = UnivariateDensity::custom([](double e) { return std::exp(-e) / std::pow(1.0 + std::exp(-e), 2); },
                                        {-40.0, 40.0}, [](double e) { return 1.0 / (1.0 + std::exp(-e)); });
  LocationScaleFamily fam(base);
  EXPECT_FALSE(fam.is_normal());
  for (double p : {0.05, 0.5, 0.95}) {
    EXPECT_NEAR(fam.cdf(fam.quantile(p, {1.0, 2.0}), {1.0, 2.0}), p, 1e-8);
    EXPECT_NEAR(fam.standard_quantile(p), std::log(p / (1.0 - p)), 1e-9);
  }
}

TEST(UnivariateDensity, CustomCdfByQuadrature) {
  auto tri = UnivariateDensity::custom([](double x) { return std::max(0.0, 1.0 - std::abs(x)); }, {-1.0, 1.0}, {}, {0.0});
  EXPECT_NEAR(tri.cdf(0.0), 0.5, 1e-10);
  EXPECT_NEAR(tri.cdf(0.5), 0.875, 1e-10);
  EXPECT_NEAR(tri.mass(-INFINITY, INFINITY), 1.0, 1e-10);
}

TEST(KernelMass, EveryKernelIntegratesToOne) {
  for (auto k : {KernelSpec::uniform(), KernelSpec::gaussian(), KernelSpec::yepanechnikov()}) {
    const double r = k.effective_radius();
    const std::vector<double> bp = {-r, 0.0, r};
    EXPECT_NEAR(integrate([&](double z) { return k(z); }, std::span<const double>(bp)).value, 1.0, 1e-9) << k.name();
  }
}
