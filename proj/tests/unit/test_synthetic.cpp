#include <doctest.h>

#include <cmath>
#include <numeric>
#include <random>

#include "gcp/synthetic.hpp"
#include "oracles.hpp"

using namespace gcp;

namespace {

GeneratorSpec cross_spec() {
  // four anchors symmetric about the origin in R^2, k = 3
  GeneratorSpec s;
  s.d = 2;
  s.k = 3;
  s.anchors = Matrix::from_rows({{1, 0}, {-1, 0}, {0, 1}, {0, -1}});
  for (int i = 0; i < 4; ++i) {
    Matrix sk(3, 3);
    sk(0, 1) = 0.3 * (i + 1);
    sk(1, 0) = -sk(0, 1);
    sk(1, 2) = -0.2 * i;
    sk(2, 1) = -sk(1, 2);
    s.skews.push_back(sk);
  }
  s.v = {0.1, -0.2};
  s.beta = Matrix::from_rows({{0.5, -1.0, 0.2}, {1.5, 0.3, -0.7}});
  s.noise_scales = {1.0, 1.0, 1.0};
  s.validate();
  return s;
}

Matrix empirical_covariance(const Matrix& ys, const Vector& center) {
  const std::size_t k = ys.cols();
  Matrix c(k, k);
  for (std::size_t i = 0; i < ys.rows(); ++i)
    for (std::size_t a = 0; a < k; ++a)
      for (std::size_t b = 0; b < k; ++b) c(a, b) += (ys(i, a) - center[a]) * (ys(i, b) - center[b]);
  return scale(c, 1.0 / static_cast<double>(ys.rows()));
}

Vector column_mean(const Matrix& ys) {
  Vector m(ys.cols(), 0.0);
  for (std::size_t i = 0; i < ys.rows(); ++i)
    for (std::size_t j = 0; j < ys.cols(); ++j) m[j] += ys(i, j);
  for (double& v : m) v /= static_cast<double>(ys.rows());
  return m;
}

}  // namespace

TEST_SUITE("synthetic") {

TEST_CASE("anchor weights") {
  const auto s = cross_spec();
  for (double w : weights(s, Vector{0.0, 0.0})) CHECK(w == doctest::Approx(0.25));
  CHECK(weights(s, Vector{1.0, 0.0})[0] >= 1.0 - 1e-6);
  CHECK(weights(s, Vector{0.0, -1.0})[3] >= 1.0 - 1e-6);

  std::mt19937_64 rng(81);
  std::normal_distribution<double> n(0.0, 2.0);
  for (int t = 0; t < 10000; ++t) {
    const auto w = weights(s, Vector{n(rng), n(rng)});
    REQUIRE(std::accumulate(w.begin(), w.end(), 0.0) == doctest::Approx(1.0).epsilon(1e-12));
    for (double v : w) REQUIRE(v >= 0.0);
  }
}

TEST_CASE("heteroskedastic transform") {
  auto s = cross_spec();
  const Vector x{0.4, -0.7};
  const double r = radius_fn(s, x);
  CHECK(r == doctest::Approx(std::hypot(0.4, 0.7) / 2.0 + 0.4 * 0.1 + 0.7 * 0.2 + 0.15));
  const Matrix t = transform_T(s, x);
  CHECK(std::abs(std::abs(oracle::determinant(t)) - std::pow(std::abs(r), 3)) < 1e-10);
  const Matrix rot = scale(t, 1.0 / r);
  CHECK(oracle::max_abs(oracle::product(oracle::transposed(rot), rot), Matrix::identity(3)) < 1e-9);

  std::mt19937_64 rng(82);
  std::normal_distribution<double> n(0.0, 1.5);
  for (int i = 0; i < 200; ++i) {
    const Vector xi{n(rng), n(rng)};
    CHECK(std::abs(oracle::determinant(transform_T(s, xi))) ==
          doctest::Approx(std::pow(std::abs(radius_fn(s, xi)), 3)).epsilon(1e-8));
  }

  s.heteroskedastic = false;
  CHECK(max_abs_diff(transform_T(s, x), Matrix::identity(3)) == 0.0);

  // one anchor: T = r exp(S_1)
  auto single = cross_spec();
  single.anchors = Matrix::from_rows({{3, 3}});
  single.skews.resize(1);
  CHECK(max_abs_diff(transform_T(single, x), scale(skew_exp(single.skews[0]), radius_fn(single, x))) < 1e-12);
}

TEST_CASE("mean function") {
  auto s = cross_spec();
  CHECK(f_true(s, Vector{0.0, 0.0}) == Vector{0.0, 0.0, 0.0});
  const Vector x{0.9, -1.3};
  const auto f = f_true(s, x);
  for (std::size_t j = 0; j < 3; ++j) {
    const double proj = x[0] * s.beta(0, j) + x[1] * s.beta(1, j);
    const double sq = x[0] * x[0] * s.beta(0, j) + x[1] * x[1] * s.beta(1, j);
    const double lin = j < 2 ? x[j] : 0.0;
    CHECK(f[j] == doctest::Approx(2.0 * (std::sin(proj) + std::tanh(sq) + lin)));
    CHECK(std::abs(f[j]) <= 2.0 * (2.0 + std::hypot(x[0], x[1])));
  }
  s.beta = Matrix(2, 3);
  CHECK(f_true(s, x) == Vector{2.0 * 0.9, -2.0 * 1.3, 0.0});
}

TEST_CASE("identity transform gives identity covariance") {
  auto s = cross_spec();
  s.heteroskedastic = false;
  const Vector x{0.3, 0.3};
  const Matrix ys = sample_conditional(s, x, 100000, 1);
  const Matrix c = empirical_covariance(ys, f_true(s, x));
  for (std::size_t i = 0; i < 3; ++i)
    for (std::size_t j = 0; j < 3; ++j) CHECK(std::abs(c(i, j) - (i == j ? 1.0 : 0.0)) < 0.03);
}

TEST_CASE("conditional covariance matches samples") {
  GeneratorOptions go;
  go.d = 5;
  go.k = 4;
  go.noise_scales = {1.0, 0.6, 0.35, 0.2};
  const auto s = make_generator(go, 83);
  std::mt19937_64 rng(84);
  std::normal_distribution<double> n(0.0, 1.0);
  for (int t = 0; t < 5; ++t) {
    Vector x(5);
    for (double& v : x) v = n(rng);
    const Matrix ys = sample_conditional(s, x, 100000, 10 + static_cast<std::uint64_t>(t));
    const Vector m = column_mean(ys);
    const Matrix truth = conditional_covariance(s, x);
    const Matrix emp = empirical_covariance(ys, m);
    CHECK(frobenius_norm(subtract(emp, truth)) < 0.05 * frobenius_norm(truth));
    const Vector mu = conditional_mean(s, x);
    for (std::size_t j = 0; j < 4; ++j) CHECK(std::abs(m[j] - mu[j]) < 4.0 * std::sqrt(truth(j, j) / 100000.0));
  }
}

TEST_CASE("exponential noise is used uncentered") {
  auto s = cross_spec();
  s.heteroskedastic = false;
  s.noise = NoiseKind::Exponential;
  const Vector x{-0.5, 0.2};
  const Matrix ys = sample_conditional(s, x, 100000, 2);
  const auto f = f_true(s, x);
  const Vector m = column_mean(ys);
  for (std::size_t j = 0; j < 3; ++j) CHECK(m[j] - f[j] == doctest::Approx(1.0).epsilon(0.02));
  const auto mu = conditional_mean(s, x);
  for (std::size_t j = 0; j < 3; ++j) CHECK(mu[j] == doctest::Approx(f[j] + 1.0));

  auto het = cross_spec();
  het.noise = NoiseKind::Exponential;
  const Matrix yh = sample_conditional(het, x, 100000, 3);
  const Vector mh = column_mean(yh);
  const Matrix cov = conditional_covariance(het, x);
  const auto muh = conditional_mean(het, x);
  for (std::size_t j = 0; j < 3; ++j) CHECK(std::abs(mh[j] - muh[j]) < 4.0 * std::sqrt(cov(j, j) / 100000.0));
}

TEST_CASE("sampling is reproducible") {
  GeneratorOptions go;
  const auto a = make_generator(go, 5);
  const auto b = make_generator(go, 5);
  CHECK(to_json(a) == to_json(b));
  CHECK(to_json(a) != to_json(make_generator(go, 6)));
  const auto d1 = sample(a, 50, 3);
  const auto d2 = sample(b, 50, 3);
  const auto d3 = sample(a, 50, 4);
  CHECK(max_abs_diff(d1.x, d2.x) == 0.0);
  CHECK(max_abs_diff(d1.y, d2.y) == 0.0);
  CHECK(max_abs_diff(d1.x, d3.x) > 0.0);
  CHECK(d1.x.cols() == 5);
  CHECK(d1.y.cols() == 4);
  CHECK(max_abs_diff(sample_features(a, 50, 3), sample_features(b, 50, 3)) == 0.0);
}

TEST_CASE("generator defaults and serialization") {
  GeneratorOptions go;
  const auto s = make_generator(go, 7);
  CHECK(s.d == 5);
  CHECK(s.k == 4);
  CHECK(s.anchor_count() == 5);
  CHECK(s.v.size() == 5);
  for (const auto& sk : s.skews) CHECK(max_abs_diff(sk, scale(transpose(sk), -1.0)) == 0.0);
  const auto back = generator_from_json(nlohmann::json::parse(to_json(s).dump()));
  const Vector x{0.1, 0.2, 0.3, -0.4, 0.5};
  CHECK(f_true(back, x) == f_true(s, x));
  CHECK(max_abs_diff(transform_T(back, x), transform_T(s, x)) == 0.0);
  CHECK(noise_kind_from_string("exponential") == NoiseKind::Exponential);
  CHECK_THROWS_AS(noise_kind_from_string("laplace"), Error);

  auto broken = cross_spec();
  broken.skews[0](0, 1) = 5.0;
  CHECK_THROWS_AS(broken.validate(), Error);
}

}  // TEST_SUITE
