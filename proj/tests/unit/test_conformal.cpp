#include <doctest.h>

#include <cmath>
#include <memory>
#include <numbers>
#include <random>

#include "gcp/conformal.hpp"
#include "gcp/dataset.hpp"
#include "gcp/eval.hpp"
#include "gcp/stats.hpp"
#include "gcp/synthetic.hpp"
#include "oracles.hpp"

using namespace gcp;

namespace {

std::shared_ptr<const GaussianDensityModel> small_model(std::size_t d, std::size_t k, std::uint64_t seed) {
  auto model = GaussianDensityModel::create(d, k, NetworkConfig{{8}, {8}, Activation::Tanh}, seed);
  std::mt19937_64 rng(seed + 17);
  std::normal_distribution<double> n(0.0, 0.3);
  for (double& p : model.factor_net().params()) p = n(rng);
  return std::make_shared<const GaussianDensityModel>(std::move(model));
}

/// d -> k model with zero mean and identity factor.
std::shared_ptr<const GaussianDensityModel> standard_model(std::size_t d, std::size_t k) {
  return std::make_shared<const GaussianDensityModel>(
      Mlp(MlpSpec{d, {}, k, Activation::Relu}), Mlp(MlpSpec{d, {}, factor_size(k), Activation::Relu}));
}

/// Briefly trained model; random models put most responses so far out that
/// chi2-based scores round to 1 and tie.
std::shared_ptr<const GaussianDensityModel> fitted_model(const GeneratorSpec& gen, std::uint64_t seed) {
  FitOptions fo;
  fo.network = NetworkConfig{{32}, {32}, Activation::Relu};
  fo.train.epochs = 40;
  fo.train.batch_size = 50;
  fo.train.lr_mean = 5e-3;
  fo.train.seed = seed;
  return fit_model(sample(gen, 1500, seed + 500), sample(gen, 300, seed + 501), fo, seed).model;
}

Matrix gaussian_matrix(std::size_t r, std::size_t c, std::mt19937_64& rng, double sd = 1.0) {
  return oracle::random_matrix(r, c, rng, sd);
}

EllipsoidSet ellipsoid(Vector center, const Matrix& w_squared_root_factor, double radius) {
  return {std::move(center), Whitener::precision_root(LowerTriangular::from_dense(w_squared_root_factor)), radius,
          false};
}

ScoreSpec spec_for(ScoreKind kind, const GaussianDensityModel& model, const Dataset& train) {
  switch (kind) {
    case ScoreKind::Ecm:
      return ScoreSpec::ecm_score(fit_ecm(model, train));
    case ScoreKind::Revealed:
      return ScoreSpec::revealed_outputs({0});
    case ScoreKind::LinearTransform:
      return ScoreSpec::linear_transform(Matrix::from_rows({{1.0, -0.5, 0.2}, {0.3, 0.8, -1.0}}));
    default:
      return {kind, {}, {}, {}};
  }
}

}  // namespace

TEST_SUITE("conformal") {

TEST_CASE("calibration of a perfect scalar model") {
  const auto model = standard_model(1, 1);
  std::mt19937_64 rng(71);
  std::normal_distribution<double> n(0.0, 1.0);
  double total = 0.0;
  const int seeds = 20;
  for (int s = 0; s < seeds; ++s) {
    Matrix x(999, 1), y(999, 1);
    for (std::size_t i = 0; i < 999; ++i) x(i, 0) = n(rng), y(i, 0) = n(rng);
    const auto cp = calibrate(model, ScoreSpec::mahalanobis(), x, y, 0.1);
    CHECK(cp.threshold == doctest::Approx(1.645).epsilon(0.1 / 1.645));
    CHECK(cp.calibration_size == 999);
    total += cp.threshold;
  }
  CHECK(total / seeds == doctest::Approx(std::sqrt(chi2_quantile(0.9, 1))).epsilon(0.02));
}

TEST_CASE("calibration edge cases") {
  const auto model = standard_model(1, 2);
  Matrix x(5, 1), y(5, 2);
  const auto cp = calibrate(model, ScoreSpec::mahalanobis(), x, y, 0.01);
  CHECK(std::isinf(cp.threshold));
  const auto set = predict_set(cp, Vector{0.0});
  CHECK(set.whole_space());
  CHECK(set.contains(Vector{1e30, -1e30}));
  CHECK_THROWS_AS(volume(set), Error);

  // identical scores: threshold equals that score
  const auto cp0 = calibrate(model, ScoreSpec::mahalanobis(), Matrix(30, 1), Matrix(30, 2), 0.3);
  CHECK(cp0.threshold == 0.0);

  try {
    calibrate(model, ScoreSpec::mahalanobis(), Matrix(0, 1), Matrix(0, 2), 0.1);
    FAIL("expected EmptyCalibration");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::EmptyCalibration);
  }
  CHECK_THROWS_AS(calibrate(model, ScoreSpec::revealed_outputs({0, 1}), x, y, 0.1), Error);
}

TEST_CASE("set geometry examples") {
  const auto unit = ellipsoid({0.0, 0.0}, Matrix::identity(2), 1.0);
  CHECK(volume(unit) == doctest::Approx(std::numbers::pi));
  CHECK(volume(ellipsoid({1.0, 2.0, 3.0}, Matrix::identity(3), 1.0)) == doctest::Approx(4.0 * std::numbers::pi / 3.0));
  // W = diag(1/2, 1) is A A^T with A = diag(sqrt(1/2), 1)
  const auto stretched = ellipsoid({0.0, 0.0}, Matrix::from_rows({{std::sqrt(0.5), 0}, {0, 1}}), 1.0);
  CHECK(volume(stretched) == doctest::Approx(2.0 * std::numbers::pi));
  CHECK(normalized_volume(stretched) == doctest::Approx(std::sqrt(2.0 * std::numbers::pi)));
  CHECK(stretched.contains(Vector{2.0 * (1.0 - 1e-9), 0.0}));
  CHECK(!stretched.contains(Vector{2.0 * (1.0 + 1e-9), 0.0}));
  CHECK(unit.contains(Vector{0.0, 0.0}));

  EllipsoidSet none = unit;
  none.empty = true;
  CHECK(!none.contains(Vector{0.0, 0.0}));
  CHECK(volume(none) == 0.0);
  CHECK(volume(ellipsoid({0.0, 0.0}, Matrix::identity(2), 0.0)) == 0.0);
}

TEST_CASE("volume agrees with hit-or-miss Monte Carlo") {
  std::mt19937_64 rng(72);
  for (std::size_t k : {2u, 3u}) {
    for (int t = 0; t < 3; ++t) {
      Vector raw(factor_size(k));
      std::normal_distribution<double> n(0.0, 0.4);
      for (double& v : raw) v = n(rng);
      const Prediction p(Vector(k, 0.5), assemble_factor(std::span<const double>(raw)));
      const EllipsoidSet set{p.mean(), Whitener::precision_root(p.factor()), 1.3, false};
      const Matrix cov = set.whitener.covariance();
      Vector half(k);
      double box = 1.0;
      for (std::size_t i = 0; i < k; ++i) {
        half[i] = set.radius * std::sqrt(cov(i, i)) * 1.01;
        box *= 2.0 * half[i];
      }
      std::uniform_real_distribution<double> u(-1.0, 1.0);
      std::size_t hits = 0;
      const std::size_t draws = 1000000;
      Vector y(k);
      for (std::size_t s = 0; s < draws; ++s) {
        for (std::size_t i = 0; i < k; ++i) y[i] = set.center[i] + half[i] * u(rng);
        hits += set.contains(y) ? 1 : 0;
      }
      const double mc = box * static_cast<double>(hits) / static_cast<double>(draws);
      CHECK(std::abs(mc - volume(set)) < 0.02 * volume(set));
    }
  }
}

TEST_CASE("membership agrees exactly with the score") {
  GeneratorOptions go;
  go.d = 2;
  go.k = 3;
  const auto gen = make_generator(go, 3);
  const auto train = sample(gen, 300, 1);
  const auto cal = sample(gen, 300, 2);
  const auto test = sample(gen, 2000, 3);
  const auto model = small_model(2, 3, 5);
  for (ScoreKind kind : {ScoreKind::Mahalanobis, ScoreKind::Hdp, ScoreKind::Likelihood, ScoreKind::Ecm,
                         ScoreKind::Revealed, ScoreKind::LinearTransform}) {
    const auto cp = calibrate(model, spec_for(kind, *model, train), cal.x, cal.y, 0.2);
    std::size_t disagreements = 0;
    for (std::size_t i = 0; i < test.size(); ++i) {
      const bool by_score = score(*model, cp.spec, test.x.row(i), test.y.row(i)) <= cp.threshold;
      disagreements += by_score != covers(cp, test.x.row(i), test.y.row(i)) ? 1 : 0;
    }
    CAPTURE(to_string(kind));
    CHECK(disagreements == 0);
  }
}

TEST_CASE("missing score membership re-scores the observed part") {
  GeneratorOptions go;
  go.d = 2;
  go.k = 3;
  const auto gen = make_generator(go, 4);
  auto cal = sample(gen, 400, 1);
  auto test = sample(gen, 1000, 2);
  mask_random_outputs(cal, 0, 2, 1);
  mask_random_outputs(test, 0, 2, 2);
  const auto model = fitted_model(gen, 6);
  const auto cp = calibrate(model, ScoreSpec::missing(), cal.x, cal.y, 0.1);
  CHECK(cp.threshold < 1.0);
  for (std::size_t i = 0; i < test.size(); ++i) {
    const auto p = model->predict(test.x.row(i));
    const auto obs = observed_entries(test.y.row(i));
    CHECK(covers(cp, test.x.row(i), test.y.row(i)) == (s_miss(p, test.y.row(i), obs) <= cp.threshold));
  }
  // section set for a fully observed response agrees with the rescored membership
  const auto full = sample(gen, 500, 3);
  for (std::size_t i = 0; i < full.size(); ++i) {
    const auto set = predict_set(cp, full.x.row(i));
    CHECK(set.contains(full.y.row(i)) == covers(cp, full.x.row(i), full.y.row(i)));
  }
}

TEST_CASE("full-output section radius") {
  const Prediction p({1.0, 1.0}, LowerTriangular::identity(2));
  CHECK(full_output_section(p, 0.5).radius == doctest::Approx(std::sqrt(2.0 * std::numbers::ln2)));
  CHECK(full_output_section(p, 0.0).radius == 0.0);
  CHECK(full_output_section(p, 0.0).contains(Vector{1.0, 1.0}));
  CHECK(full_output_section(p, 1.0).whole_space());
  CHECK(full_output_section(p, kInfinity).whole_space());
}

TEST_CASE("likelihood sets") {
  const auto model = standard_model(1, 1);
  CalibratedPredictor cp{model, ScoreSpec::likelihood(), 0.0, 0.1, 10};
  CHECK(predict_set(cp, Vector{0.0}).whole_space());
  cp.threshold = -0.5;  // peak density 0.3989 is below 0.5
  CHECK(predict_set(cp, Vector{0.0}).empty);
  cp.threshold = -0.2;
  const auto set = predict_set(cp, Vector{0.0});
  // density 0.2 at |y| = sqrt(2 log(0.3989 / 0.2))
  CHECK(set.radius == doctest::Approx(std::sqrt(2.0 * std::log(1.0 / (std::sqrt(2.0 * std::numbers::pi) * 0.2)))));
}

TEST_CASE("mahalanobis section") {
  const Matrix cov = Matrix::from_rows({{1.0, 0.5}, {0.5, 1.0}});
  // A A^T = Sigma^{-1/2}
  const Prediction p({0.0, 0.0}, cholesky(spd_power(cov, -0.5)));
  const auto sec = mahalanobis_section(p, 3.0, Index{0}, Vector{2.0});
  CHECK(sec.center[0] == doctest::Approx(1.0));
  CHECK(sec.radius == doctest::Approx(std::sqrt(9.0 - 4.0)));
  CHECK(mahalanobis_section(p, 1.5, Index{0}, Vector{2.0}).empty);
  CHECK(mahalanobis_section(p, kInfinity, Index{0}, Vector{2.0}).whole_space());
  // section membership equals full-set membership at the revealed value
  std::mt19937_64 rng(73);
  std::normal_distribution<double> n(1.0, 2.0);
  for (int t = 0; t < 2000; ++t) {
    const double y1 = n(rng);
    const double s = s_mah(p, Vector{2.0, y1});
    if (std::abs(s - 3.0) < 1e-9) continue;
    CHECK(sec.contains(Vector{y1}) == (s <= 3.0));
  }
}

TEST_CASE("sets shrink as alpha grows") {
  GeneratorOptions go;
  go.d = 2;
  go.k = 2;
  const auto gen = make_generator(go, 5);
  const auto cal = sample(gen, 500, 1);
  const auto test = sample(gen, 2000, 2);
  const auto model = small_model(2, 2, 7);
  for (ScoreKind kind : {ScoreKind::Mahalanobis, ScoreKind::Likelihood, ScoreKind::Hdp}) {
    const auto wide = calibrate(model, {kind, {}, {}, {}}, cal.x, cal.y, 0.05);
    const auto narrow = calibrate(model, {kind, {}, {}, {}}, cal.x, cal.y, 0.3);
    CHECK(wide.threshold >= narrow.threshold);
    for (std::size_t i = 0; i < test.size(); ++i) {
      if (covers(narrow, test.x.row(i), test.y.row(i))) CHECK(covers(wide, test.x.row(i), test.y.row(i)));
    }
  }
}

TEST_CASE("marginal validity over resampled splits") {
  GeneratorOptions go;
  go.d = 2;
  go.k = 3;
  const auto gen = make_generator(go, 6);
  const auto train = sample(gen, 400, 999);
  const auto model = fitted_model(gen, 8);
  const std::size_t n_cal = 200, n_test = 200, trials = 500;
  const double alpha = 0.1;
  for (ScoreKind kind : {ScoreKind::Mahalanobis, ScoreKind::Hdp, ScoreKind::Likelihood, ScoreKind::Ecm,
                         ScoreKind::Missing, ScoreKind::Revealed, ScoreKind::LinearTransform}) {
    const auto spec = spec_for(kind, *model, train);
    std::vector<double> cov;
    for (std::size_t t = 0; t < trials; ++t) {
      auto cal = sample(gen, n_cal, 10 * t + 1);
      auto test = sample(gen, n_test, 10 * t + 2);
      if (kind == ScoreKind::Missing) {
        mask_random_outputs(cal, 0, 2, t);
        mask_random_outputs(test, 0, 2, t + 100000);
      }
      const auto cp = calibrate(model, spec, cal.x, cal.y, alpha);
      cov.push_back(marginal_coverage(cp, test.x, test.y));
    }
    const double m = mean(cov);
    const double se = stddev(cov) / std::sqrt(static_cast<double>(trials));
    CAPTURE(to_string(kind));
    CAPTURE(m);
    CHECK(m >= 1.0 - alpha - 3.0 * se);
    CHECK(m <= 1.0 - alpha + 1.0 / (n_cal + 1.0) + 3.0 * se);
  }
}

TEST_CASE("linear transform with identity reproduces the mahalanobis set") {
  const auto model = small_model(2, 3, 9);
  std::mt19937_64 rng(74);
  const Matrix x = gaussian_matrix(300, 2, rng);
  const Matrix y = gaussian_matrix(300, 3, rng, 2.0);
  const auto a = calibrate(model, ScoreSpec::mahalanobis(), x, y, 0.1);
  const auto b = calibrate(model, ScoreSpec::linear_transform(Matrix::identity(3)), x, y, 0.1);
  CHECK(a.threshold == doctest::Approx(b.threshold).epsilon(1e-9));
  const Vector x0{0.2, -0.4};
  CHECK(volume(predict_set(a, x0)) == doctest::Approx(volume(predict_set(b, x0))).epsilon(1e-8));
}

TEST_CASE("predictor and set records round-trip through JSON") {
  GeneratorOptions go;
  go.d = 2;
  go.k = 3;
  const auto gen = make_generator(go, 7);
  const auto train = sample(gen, 300, 1);
  const auto cal = sample(gen, 200, 2);
  const auto model = small_model(2, 3, 10);
  for (ScoreKind kind : {ScoreKind::Mahalanobis, ScoreKind::Ecm, ScoreKind::Revealed, ScoreKind::LinearTransform,
                         ScoreKind::Missing}) {
    const auto cp = calibrate(model, spec_for(kind, *model, train), cal.x, cal.y, 0.1);
    const auto back = predictor_from_json(nlohmann::json::parse(to_json(cp).dump()));
    CHECK(back.threshold == cp.threshold);
    CHECK(back.spec.kind == kind);
    CHECK(back.calibration_size == 200);
    for (std::size_t i = 0; i < 20; ++i) {
      CHECK(covers(back, cal.x.row(i), cal.y.row(i)) == covers(cp, cal.x.row(i), cal.y.row(i)));
    }
    const auto rec = set_to_json(predict_set(cp, cal.x.row(0), cal.y.row(0)), cp);
    CHECK(rec.at("score") == to_string(kind));
    CHECK(rec.contains("center"));
    CHECK(rec.contains("shape_lower_packed"));
    CHECK(rec.contains("radius"));
  }
  Matrix zx(5, 2), zy(5, 3);
  const auto inf = calibrate(model, ScoreSpec::mahalanobis(), zx, zy, 0.01);
  const auto j = to_json(inf);
  CHECK(j.at("threshold") == "inf");
  CHECK(std::isinf(predictor_from_json(j).threshold));
  CHECK_THROWS_AS(predictor_from_json(nlohmann::json::parse("{\"format\":\"x\"}")), Error);
  CHECK(score_kind_from_string("linear_transform") == ScoreKind::LinearTransform);
  CHECK_THROWS_AS(score_kind_from_string("bogus"), Error);
}

}  // TEST_SUITE
