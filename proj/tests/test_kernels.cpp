#include <cmath>
#include <random>
#include <vector>

#include <gtest/gtest.h>

#include "bayesdens/kernels.hpp"
#include "bayesdens/rng.hpp"

using namespace bayesdens;

namespace {

const KernelSpec kAll[] = {KernelSpec::uniform(), KernelSpec::gaussian(), KernelSpec::yepanechnikov()};

double kernel_integral(const KernelSpec& k, auto&& g) {
  const double r = k.effective_radius();
  const std::vector<double> bp = {-r, 0.0, r};
  return integrate([&](double z) { return g(z) * k(z); }, std::span<const double>(bp), {1e-12}).value;
}

Sample normal_sample(std::size_t n, std::uint64_t seed) {
  Rng rng = make_rng(seed);
  std::vector<double> v(n);
  for (double& x : v) x = standard_normal(rng);
  return Sample(v);
}

}  // namespace

TEST(KernelSpec, ConstantsMatchQuadrature) {
  for (const auto& k : kAll) {
    EXPECT_NEAR(kernel_integral(k, [](double z) { return z * z; }), k.variance(), 1e-10) << k.name();
    EXPECT_NEAR(kernel_integral(k, [&](double z) { return k(z); }), k.roughness(), 1e-10) << k.name();
    EXPECT_DOUBLE_EQ(k(0.0), k.k0());
    EXPECT_DOUBLE_EQ(k.normalized(0.0), 1.0);
  }
  EXPECT_DOUBLE_EQ(KernelSpec::yepanechnikov().variance(), 0.05);
  EXPECT_DOUBLE_EQ(KernelSpec::yepanechnikov().roughness(), 1.2);
}

TEST(KernelSpec, SymmetricWithConsistentCdf) {
  for (const auto& k : kAll) {
    for (double z = -1.2; z <= 1.2; z += 0.07) {
      EXPECT_DOUBLE_EQ(k(z), k(-z));
      const double lo = -k.effective_radius();
      if (z > lo) {
        EXPECT_NEAR(k.cdf(z), k.cdf(lo) + quadrature([&](double t) { return k(t); }, lo, z, 1e-12), 1e-10) << k.name();
      }
    }
  }
}

TEST(KernelSpec, UnknownNameIsRejected) { EXPECT_THROW(KernelSpec::from_name("box"), DomainError); }

TEST(Kde, SinglePointGaussian) { EXPECT_NEAR(kde(Sample({0.0}), KernelSpec::gaussian(), 1.0, 0.0), 0.3989423, 1e-7); }

TEST(Kde, SymmetricPair) {
  for (const auto& k : kAll) EXPECT_DOUBLE_EQ(kde(Sample({-1.0, 1.0}), k, 1.0, 0.0), k(1.0));
}

TEST(Kde, UniformCount) { EXPECT_DOUBLE_EQ(kde(Sample({0.0, 1.0, 2.0, 3.0}), KernelSpec::uniform(), 1.0, 1.0), 0.25); }

TEST(Kde, RejectsBadBandwidth) {
  EXPECT_THROW(kde(Sample({0.0}), KernelSpec::gaussian(), 0.0, 0.0), DomainError);
  EXPECT_THROW(kde(Sample({0.0}), KernelSpec::gaussian(), -1.0, 0.0), DomainError);
  EXPECT_THROW(kde_deriv(Sample({0.0}), KernelSpec::gaussian(), 0.0, 0.0), DomainError);
}

TEST(Kde, IntegratesToOne) {
  const auto s = normal_sample(50, 11);
  for (const auto& k : kAll) {
    std::vector<double> bp = {s.min() - 6.0, s.max() + 6.0};
    for (double x : s.values()) {
      if (k.compact()) {
        bp.push_back(x - 0.15);
        bp.push_back(x + 0.15);
      }
    }
    const double m = integrate([&](double x) { return kde(s, k, 0.3, x); }, std::span<const double>(bp), {1e-9}).value;
    EXPECT_NEAR(m, 1.0, 1e-8) << k.name();
  }
}

TEST(Kde, TranslationEquivariant) {
  const auto s = normal_sample(40, 12);
  std::vector<double> shifted(s.values().begin(), s.values().end());
  for (double& v : shifted) v += 3.75;
  const Sample t(shifted);
  for (const auto& k : kAll) {
    for (double x = -2.0; x <= 2.0; x += 0.25) EXPECT_NEAR(kde(s, k, 0.4, x), kde(t, k, 0.4, x + 3.75), 1e-13);
  }
}

TEST(KdeDeriv, Examples) {
  EXPECT_NEAR(kde_deriv(Sample({-1.0, 1.0}), KernelSpec::gaussian(), 1.0, 0.0), 0.0, 1e-16);
  EXPECT_NEAR(kde_deriv(Sample({1.0}), KernelSpec::gaussian(), 1.0, 0.0), 0.2419707, 1e-7);
}

TEST(KdeDeriv, GaussianMatchesFiniteDifference) {
  const auto s = normal_sample(30, 13);
  const double h = 0.5, step = 1e-5;
  for (double x = -2.5; x <= 2.5; x += 0.5) {
    const double fd = (kde(s, KernelSpec::gaussian(), h, x + step) - kde(s, KernelSpec::gaussian(), h, x - step)) / (2 * step);
    EXPECT_NEAR(kde_deriv(s, KernelSpec::gaussian(), h, x), fd, 1e-6);
  }
}

TEST(CorrectionKde, Examples) {
  const Sample s({0.1, 0.4, 0.45, 0.9});
  auto unit = [](double) { return 1.0; };
  for (double x : {0.2, 0.5, 0.8}) EXPECT_DOUBLE_EQ(correction_kde(s, KernelSpec::yepanechnikov(), 0.3, unit, x),
                                                     kde(s, KernelSpec::yepanechnikov(), 0.3, x));
  auto f0 = [](double x) { return phi(x); };
  EXPECT_NEAR(correction_kde(Sample({0.0}), KernelSpec::gaussian(), 1.0, f0, 0.0), 1.0, 1e-15);
  auto twice = [](double x) { return 2.0 * phi(x); };
  const auto t = normal_sample(20, 14);
  EXPECT_DOUBLE_EQ(correction_kde(t, KernelSpec::gaussian(), 0.4, twice, 0.3),
                   0.5 * correction_kde(t, KernelSpec::gaussian(), 0.4, f0, 0.3));
}

TEST(CorrectionKde, VanishingStartDensity) {
  auto f0 = [](double x) { return x > 0.0 ? 1.0 : 0.0; };
  EXPECT_THROW(correction_kde(Sample({-1.0, 1.0}), KernelSpec::gaussian(), 1.0, f0, 1.0), SingularStartDensity);
}

TEST(Convolve, NormalWithGaussianKernel) {
  EXPECT_NEAR(convolve(UnivariateDensity::normal(0, 1), KernelSpec::gaussian(), 1.0, 0.0), 0.2820948, 1e-7);
}

TEST(Convolve, ClosedFormsMatchQuadrature) {
  // A custom density identical to a normal forces the quadrature path.
  auto as_custom = [](double m, double s) {
    return UnivariateDensity::custom([=](double x) { return normal_pdf(x, m, s); }, {m - 12 * s, m + 12 * s});
  };
  for (const auto& k : kAll) {
    for (double h : {0.05, 0.7, 3.0}) {
      for (double x : {-2.0, 0.1, 1.3}) {
        const double closed = convolve(UnivariateDensity::normal(0.4, 0.8), k, h, x);
        const double numeric = convolve(as_custom(0.4, 0.8), k, h, x);
        EXPECT_NEAR(closed, numeric, 1e-9) << k.name() << " h=" << h << " x=" << x;
      }
    }
  }
}

TEST(Convolve, SmallBandwidthLimit) {
  const auto f0 = UnivariateDensity::normal_mixture({{0.6, 0.0, 1.0}, {0.4, 1.0, 0.5}});
  for (const auto& k : kAll) {
    for (double x : {-1.0, 0.3, 1.2}) EXPECT_NEAR(convolve(f0, k, 1e-3, x), f0.pdf(x), 1e-5);
  }
}

TEST(Convolve, UniformKernelOnConstant) {
  const auto flat = UnivariateDensity::uniform(-50.0, 50.0);
  EXPECT_NEAR(convolve(flat, KernelSpec::uniform(), 1.0, 3.0), 0.01, 1e-14);
}

TEST(Convolve, PreservesUnitMass) {
  const auto f0 = UnivariateDensity::uniform(-1.0, 2.0);
  for (const auto& k : kAll) {
    const std::vector<double> bp = {-5.0, -1.5, -1.0, -0.5, 1.5, 2.0, 2.5, 6.0};
    const double m = integrate([&](double x) { return convolve(f0, k, 0.6, x); }, std::span<const double>(bp), {1e-8}).value;
    EXPECT_NEAR(m, 1.0, 1e-7) << k.name();
  }
}

TEST(VariableKde, SingleCenter) {
  const std::vector<double> e = {0.0}, h = {0.1};
  EXPECT_NEAR(variable_kde(e, h, 0.0), 10.0 * phi(0.0), 1e-14);
}
