#include "doctest.h"

#include <cmath>
#include <vector>

#include "flowood/base_dist.hpp"
#include "flowood/errors.hpp"
#include "test_util.hpp"

using namespace flowood;

namespace {

ResamplingBase make_resampling(std::size_t dim, std::size_t width, std::size_t trunc, double z_ema,
                               std::uint64_t seed, double final_scale) {
  Rng rng(seed);
  ResamplingBase base;
  base.dim = dim;
  base.trunc = trunc;
  base.z_ema = z_ema;
  base.accept_net = testutil::random_dense_net({dim, width, width, 1}, Activation::tanh,
                                               Activation::sigmoid, rng, final_scale);
  return base;
}

// accept(z) == 1 for every input: saturate the sigmoid via a huge bias.
ResamplingBase make_always_accept(std::size_t dim, std::size_t trunc) {
  ResamplingBase base = make_resampling(dim, 4, trunc, 1.0, 99, 0.0);
  base.accept_net.layers.back().bias[0] = 60.0;
  return base;
}

}  // namespace

TEST_CASE("gaussian_log_prob: closed forms") {
  const std::vector<double> z2 = {0.0, 0.0};
  CHECK(gaussian_log_prob(z2) == doctest::Approx(-1.8378770664093454836).epsilon(1e-13));
  const std::vector<double> z1 = {1.0};
  CHECK(gaussian_log_prob(z1) == doctest::Approx(-1.4189385332046727418).epsilon(1e-13));
}

TEST_CASE("gaussian_log_prob: coordinate-wise product oracle") {
  Rng rng(31);
  std::vector<double> z(7);
  for (double& v : z) v = rng.normal() * 2.0;
  double expect = 0.0;
  for (double v : z) {
    expect += std::log(std::exp(-0.5 * v * v) / std::sqrt(2.0 * 3.14159265358979323846));
  }
  CHECK(gaussian_log_prob(z) == doctest::Approx(expect).epsilon(1e-12));
}

TEST_CASE("gaussian_sample: seeded determinism and seed sensitivity") {
  const Matrix a = gaussian_sample(3, 5, 1234);
  const Matrix b = gaussian_sample(3, 5, 1234);
  CHECK(a.values == b.values);
  const Matrix c = gaussian_sample(3, 5, 1235);
  CHECK(a.values != c.values);
}

TEST_CASE("gaussian_sample: law of large numbers at n=1e6") {
  const std::size_t n = 1000000;
  const Matrix s = gaussian_sample(1, n, 777);
  double sum = 0.0, sumsq = 0.0;
  for (double v : s.values) {
    sum += v;
    sumsq += v * v;
  }
  const double mean = sum / static_cast<double>(n);
  const double var = sumsq / static_cast<double>(n) - mean * mean;
  CHECK(std::fabs(mean) < 4.0 / std::sqrt(static_cast<double>(n)));
  CHECK(std::fabs(var - 1.0) < 0.01);
}

TEST_CASE("resampling_log_prob: forced acceptance with Z=1 reduces to the Gaussian bitwise") {
  ResamplingBase base = make_always_accept(3, 100);
  Rng rng(32);
  std::vector<double> z(3);
  for (int rep = 0; rep < 10; ++rep) {
    for (double& v : z) v = rng.normal();
    CHECK(resampling_log_prob(base, z) == gaussian_log_prob(z));  // exact
  }
}

TEST_CASE("resampling_log_prob: T=1 closed form at hand-picked points") {
  ResamplingBase base = make_resampling(2, 8, 1, 0.7, 33, 0.8);
  const std::vector<std::vector<double>> points = {{0.0, 0.0}, {1.5, -0.5}, {-2.0, 0.25}};
  for (const auto& z : points) {
    const double alpha = resampling_acceptance(base, z);
    const double expect = std::log(alpha + (1.0 - 0.7)) + gaussian_log_prob(z);
    CHECK(resampling_log_prob(base, z) == doctest::Approx(expect).epsilon(1e-13));
  }
}

TEST_CASE("resampling_log_prob: Z <= 0 is a state error") {
  ResamplingBase base = make_resampling(2, 8, 10, 0.0, 34, 0.5);
  const std::vector<double> z = {0.0, 0.0};
  CHECK_THROWS_AS((void)resampling_log_prob(base, z), Error);
}

TEST_CASE("resampling normalization: grid integral with Monte-Carlo Z") {
  ResamplingBase base = make_resampling(2, 16, 100, 1.0, 35, 1.5);
  // direct Monte-Carlo estimate of Z = E[accept]
  const std::size_t n_mc = 1000000;
  Rng mc(36);
  std::vector<double> z(2);
  double acc = 0.0;
  for (std::size_t i = 0; i < n_mc; ++i) {
    mc.fill_normal(z);
    acc += resampling_acceptance(base, z);
  }
  base.z_ema = acc / static_cast<double>(n_mc);

  const double integral = testutil::grid_integral_2d(
      [&](double x, double y) {
        const std::vector<double> p = {x, y};
        return std::exp(resampling_log_prob(base, p));
      },
      8.0, 0.05);
  CHECK(integral > 0.98);
  CHECK(integral < 1.02);
}

TEST_CASE("resampling_update_z: constant acceptance with decay 0 lands exactly") {
  ResamplingBase base = make_resampling(2, 8, 10, 1.0, 37, 0.0);  // zero final => accept = 0.5
  base.ema_decay = 0.0;
  const double z = resampling_update_z(base, 256, 38);
  CHECK(z == 0.5);
  CHECK(base.z_ema == 0.5);
}

TEST_CASE("resampling_update_z: decay 1 freezes the average") {
  ResamplingBase base = make_resampling(2, 8, 10, 0.63, 39, 0.5);
  base.ema_decay = 1.0;
  const double z = resampling_update_z(base, 256, 40);
  CHECK(z == 0.63);
}

TEST_CASE("resampling_update_z: repeated updates converge to the Monte-Carlo mean") {
  ResamplingBase base = make_resampling(2, 12, 100, 1.0, 41, 1.0);
  const std::size_t n_mc = 1000000;
  Rng mc(42);
  std::vector<double> z(2);
  double acc = 0.0;
  for (std::size_t i = 0; i < n_mc; ++i) {
    mc.fill_normal(z);
    acc += resampling_acceptance(base, z);
  }
  const double reference = acc / static_cast<double>(n_mc);

  base.ema_decay = 0.9;
  Rng update_rng(43);
  for (int step = 0; step < 300; ++step) resampling_update_z(base, 2048, update_rng);
  CHECK(std::fabs(base.z_ema - reference) / reference < 0.02);
}

TEST_CASE("resampling_sample: forced acceptance equals the Gaussian stream") {
  ResamplingBase base = make_always_accept(3, 100);
  const Matrix expect = gaussian_sample(3, 20, 555);
  const Matrix got = resampling_sample(base, 20, 555);
  CHECK(got.values == expect.values);  // bitwise
}

TEST_CASE("resampling_sample: T=1 equals the Gaussian stream regardless of acceptance") {
  ResamplingBase base = make_resampling(3, 8, 1, 0.4, 44, 1.0);
  const Matrix expect = gaussian_sample(3, 20, 556);
  const Matrix got = resampling_sample(base, 20, 556);
  CHECK(got.values == expect.values);
}

TEST_CASE("resampling sampler matches its density: histogram and chi-squared at h=1") {
  ResamplingBase base = make_resampling(1, 16, 100, 1.0, 45, 2.0);
  // tight Z so the density is properly normalized
  const std::size_t n_mc = 1000000;
  Rng mc(46);
  std::vector<double> z(1);
  double acc = 0.0;
  for (std::size_t i = 0; i < n_mc; ++i) {
    mc.fill_normal(z);
    acc += resampling_acceptance(base, z);
  }
  base.z_ema = acc / static_cast<double>(n_mc);

  const std::size_t n = 1000000;
  const Matrix samples = resampling_sample(base, n, 557);

  const double lo = -4.0, hi = 4.0;
  const std::size_t n_bins = 32;
  const double width = (hi - lo) / static_cast<double>(n_bins);
  std::vector<std::size_t> observed(n_bins + 2, 0);  // [under, bins..., over]
  for (double v : samples.values) {
    if (v < lo) ++observed[0];
    else if (v >= hi) ++observed[n_bins + 1];
    else ++observed[1 + static_cast<std::size_t>((v - lo) / width)];
  }

  auto range_mass = [&](double a, double b) {
    // fine trapezoid of the density over [a, b]
    const std::size_t steps = 400;
    const double h = (b - a) / static_cast<double>(steps);
    double total = 0.0;
    for (std::size_t s = 0; s <= steps; ++s) {
      const std::vector<double> point = {a + h * static_cast<double>(s)};
      const double w = (s == 0 || s == steps) ? 0.5 : 1.0;
      total += w * std::exp(resampling_log_prob(base, point));
    }
    return total * h;
  };
  std::vector<double> expected(n_bins + 2, 0.0);
  for (std::size_t b = 0; b < n_bins; ++b) {
    const double a = lo + width * static_cast<double>(b);
    expected[1 + b] = range_mass(a, a + width);
  }
  expected[0] = range_mass(-12.0, lo);
  expected[n_bins + 1] = range_mass(hi, 12.0);

  double chi2 = 0.0;
  for (std::size_t b = 0; b < observed.size(); ++b) {
    const double e = expected[b] * static_cast<double>(n);
    if (e < 5.0) continue;  // standard chi-squared validity floor
    const double o = static_cast<double>(observed[b]);
    chi2 += (o - e) * (o - e) / e;
    // 3-sigma multinomial bound per bin
    const double sigma = std::sqrt(expected[b] * (1.0 - expected[b]) * static_cast<double>(n));
    CHECK(std::fabs(o - e) <= 3.0 * sigma);
  }
  const double critical = testutil::chi2_quantile(static_cast<double>(n_bins + 1), 2.3263478740);
  CHECK(chi2 < critical);
}

TEST_CASE("gaussian normalization: grid integral at h=2") {
  const double integral = testutil::grid_integral_2d(
      [&](double x, double y) {
        const std::vector<double> p = {x, y};
        return std::exp(gaussian_log_prob(p));
      },
      8.0, 0.05);
  CHECK(integral > 0.99);
  CHECK(integral < 1.01);
}
