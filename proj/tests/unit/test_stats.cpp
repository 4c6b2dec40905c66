#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <numbers>
#include <random>
#include <vector>

#include "gcp/stats.hpp"
#include "oracles.hpp"

using namespace gcp;

namespace {

double phi_oracle(double x) { return 0.5 * std::erfc(-x / std::numbers::sqrt2); }

double bisect_quantile(double p) {
  double lo = -40.0, hi = 40.0;
  for (int i = 0; i < 200; ++i) {
    const double mid = 0.5 * (lo + hi);
    (phi_oracle(mid) < p ? lo : hi) = mid;
  }
  return 0.5 * (lo + hi);
}

double chi2_density(double x, int k) {
  if (x <= 0.0) return 0.0;
  const double h = 0.5 * k;
  return std::exp((h - 1.0) * std::log(x) - 0.5 * x - h * std::numbers::ln2 - std::lgamma(h));
}

}  // namespace

TEST_SUITE("stats") {

TEST_CASE("chi2_cdf reference values") {
  for (int k = 1; k <= 10; ++k) CHECK(chi2_cdf(0.0, k) == 0.0);
  CHECK(chi2_cdf(2.0 * std::numbers::ln2, 2) == doctest::Approx(0.5).epsilon(1e-12));
  CHECK(chi2_cdf(3.841459, 1) == doctest::Approx(0.95).epsilon(1e-6));
}

TEST_CASE("chi2_cdf with two degrees of freedom matches the closed form") {
  double worst = 0.0;
  for (int i = 0; i <= 5000; ++i) {
    const double x = 50.0 * i / 5000.0;
    worst = std::max(worst, std::abs(chi2_cdf(x, 2) - (1.0 - std::exp(-0.5 * x))));
  }
  CHECK(worst < 1e-10);
}

TEST_CASE("chi2_cdf with one degree of freedom matches erf") {
  double worst = 0.0;
  for (int i = 0; i <= 2000; ++i) {
    const double x = 40.0 * i / 2000.0;
    worst = std::max(worst, std::abs(chi2_cdf(x, 1) - std::erf(std::sqrt(0.5 * x))));
  }
  CHECK(worst < 1e-10);
}

TEST_CASE("chi2_cdf agrees with integrated densities") {
  for (int k : {3, 4, 5, 8}) {
    for (double x : {0.5, 2.0, 5.0, 11.0}) {
      // t = u^2 removes the power singularity at the origin
      const double expected =
          oracle::simpson([k](double u) { return 2.0 * u * chi2_density(u * u, k); }, 0.0, std::sqrt(x));
      CHECK(std::abs(chi2_cdf(x, k) - expected) < 1e-8);
    }
  }
}

TEST_CASE("chi2_cdf is monotone and bounded") {
  std::mt19937_64 rng(11);
  std::uniform_real_distribution<double> u(0.0, 60.0);
  std::uniform_int_distribution<int> dof(1, 16);
  for (int t = 0; t < 10000; ++t) {
    double a = u(rng), b = u(rng);
    if (a > b) std::swap(a, b);
    const int k = dof(rng);
    const double fa = chi2_cdf(a, k), fb = chi2_cdf(b, k);
    REQUIRE(fa <= fb);
    REQUIRE(fa >= 0.0);
    REQUIRE(fb <= 1.0);
  }
}

TEST_CASE("chi2 domain errors") {
  CHECK_THROWS_AS(chi2_cdf(-1.0, 2), Error);
  CHECK_THROWS_AS(chi2_cdf(1.0, 0), Error);
  CHECK_THROWS_AS(chi2_quantile(1.0, 2), Error);
}

TEST_CASE("chi2_quantile inverts chi2_cdf") {
  CHECK(chi2_quantile(0.0, 3) == 0.0);
  CHECK(chi2_quantile(0.5, 2) == doctest::Approx(2.0 * std::numbers::ln2).epsilon(1e-12));
  for (int k = 1; k <= 12; ++k) {
    for (double p : {1e-6, 0.01, 0.1, 0.5, 0.9, 0.99, 0.999999}) {
      CHECK(chi2_cdf(chi2_quantile(p, k), k) == doctest::Approx(p).epsilon(1e-9));
    }
  }
}

TEST_CASE("normal quantile") {
  CHECK(normal_quantile(0.5) == doctest::Approx(0.0).epsilon(1e-15));
  CHECK(normal_quantile(0.975) == doctest::Approx(1.959964).epsilon(1e-6));
  CHECK(normal_quantile(0.975) == doctest::Approx(bisect_quantile(0.975)).epsilon(1e-12));
  CHECK(normal_quantile(0.025) == doctest::Approx(-normal_quantile(0.975)).epsilon(1e-14));
  for (double p : {1e-12, 1e-6, 0.01, 0.3, 0.7, 0.99, 1.0 - 1e-9}) {
    CHECK(std::abs(phi_oracle(normal_quantile(p)) - p) < 1e-9);
  }
  CHECK_THROWS_AS(normal_quantile(0.0), Error);
  CHECK_THROWS_AS(normal_quantile(1.0), Error);
  CHECK(normal_cdf(1.0) == doctest::Approx(phi_oracle(1.0)).epsilon(1e-15));
}

TEST_CASE("conformal quantile rank rule") {
  std::vector<double> nine{9, 3, 1, 7, 5, 2, 8, 4, 6};
  CHECK(conformal_quantile(nine, 0.1) == 9.0);
  std::vector<double> many(99);
  for (int i = 0; i < 99; ++i) many[static_cast<std::size_t>(i)] = 99 - i;
  CHECK(conformal_quantile(many, 0.1) == 90.0);
  std::vector<double> five{1, 2, 3, 4, 5};
  CHECK(std::isinf(conformal_quantile(five, 0.01)));
  std::vector<double> same(50, 3.25);
  CHECK(conformal_quantile(same, 0.2) == 3.25);
  CHECK_THROWS_AS(conformal_quantile(std::vector<double>{}, 0.1), Error);
  CHECK_THROWS_AS(conformal_quantile(five, 0.0), Error);
}

TEST_CASE("conformal quantile gives exchangeable coverage") {
  const std::size_t n = 19;
  const double alpha = 0.1;
  const int trials = 100000;
  std::mt19937_64 rng(12);
  std::exponential_distribution<double> draw(1.0);
  std::vector<double> scores(n);
  int hits = 0;
  for (int t = 0; t < trials; ++t) {
    for (double& s : scores) s = draw(rng);
    hits += draw(rng) <= conformal_quantile(scores, alpha) ? 1 : 0;
  }
  const double cov = static_cast<double>(hits) / trials;
  const double se = std::sqrt(0.9 * 0.1 / trials);
  CHECK(cov >= 1.0 - alpha - 3.0 * se);
  CHECK(cov <= 1.0 - alpha + 1.0 / (n + 1.0) + 3.0 * se);
}

TEST_CASE("unit ball volumes") {
  CHECK(unit_ball_volume(1) == doctest::Approx(2.0));
  CHECK(unit_ball_volume(2) == doctest::Approx(std::numbers::pi));
  CHECK(unit_ball_volume(3) == doctest::Approx(4.0 * std::numbers::pi / 3.0));
  CHECK(unit_ball_volume(4) == doctest::Approx(std::numbers::pi * std::numbers::pi / 2.0));
}

TEST_CASE("quantile transform") {
  std::mt19937_64 rng(13);
  std::gamma_distribution<double> g(2.0, 1.5);
  const std::size_t n = 1001;
  Matrix data(n, 2);
  for (std::size_t i = 0; i < n; ++i) {
    data(i, 0) = g(rng);
    data(i, 1) = -3.0 * g(rng);
  }
  const auto qt = QuantileTransform::fit(data);
  CHECK(qt.dims() == 2);

  std::vector<double> col(qt.references()[0]);
  CHECK(std::is_sorted(col.begin(), col.end()));
  CHECK(std::abs(qt.forward(0, col[n / 2])) < 1e-12);

  // clamping outside the fit range
  CHECK(qt.forward(0, col.front() - 10.0) == doctest::Approx(normal_quantile(0.5 / n)));
  CHECK(qt.forward(0, col.back() + 10.0) == doctest::Approx(normal_quantile(1.0 - 0.5 / n)));

  // round trip on interior points
  const double range = col.back() - col.front();
  std::uniform_real_distribution<double> u(col[1], col[n - 2]);
  double worst = 0.0;
  for (int t = 0; t < 1000; ++t) {
    const double x = u(rng);
    worst = std::max(worst, std::abs(qt.inverse(0, qt.forward(0, x)) - x));
  }
  CHECK(worst < range / n);

  // monotone per column, NaN passes through
  CHECK(qt.forward(1, -2.0) > qt.forward(1, -5.0));
  CHECK(std::isnan(qt.forward(1, std::nan(""))));

  CHECK_THROWS_AS(QuantileTransform::fit(Matrix(5, 1)), Error);
}

}  // TEST_SUITE
