// Kernel, Dirichlet-smoothed and semiparametric estimates side by side on a
// seeded skewed-mixture sample.

#include <cmath>
#include <cstdio>

#include "bayesdens.hpp"

int main() {
  using namespace bayesdens;
  const auto truth = true_density("skewed-mixture");
  Rng rng = make_rng(2024);
  const Sample sample(draw_from(truth, 300, rng));
  const auto kernel = KernelSpec::gaussian();
  const double h = std::pow(static_cast<double>(sample.size()), -0.2);

  const DirichletPrior prior{5.0, UnivariateDensity::normal(sample.mean(), sample.sd())};
  const auto family = LocationScaleFamily::normal();
  const auto background = moment_posterior(sample, 21);

  std::printf("%6s %9s %9s %9s %9s\n", "x", "truth", "kde", "dp", "semipar");
  for (double x = -3.0; x <= 3.01; x += 0.5) {
    std::printf("%6.2f %9.5f %9.5f %9.5f %9.5f\n", x, truth.pdf(x), kde(sample, kernel, h, x),
                dp_estimate(prior, sample, kernel, h, x), altkernel_estimate(0.0, family, background, sample, kernel, h, x));
  }

  const auto data = LogLinearData::rescaled(sample);
  const auto sic = sic_select(data, Basis::cosine, 6);
  std::printf("log-linear cosine order chosen by SIC: %d\n", sic.selected);
}
