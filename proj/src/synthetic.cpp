#include "gcp/synthetic.hpp"

#include <cmath>
#include <random>

#include "gcp/json_util.hpp"
#include "gcp/random.hpp"

namespace gcp {

namespace {

constexpr double kWeightEpsilon = 1e-12;
constexpr std::uint64_t kSpecStream = 0x73706563;
constexpr std::uint64_t kSampleStream = 0x73616d70;
constexpr std::uint64_t kConditionalStream = 0x636f6e64;

double dot(std::span<const double> a, std::span<const double> b) {
  double acc = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) acc += a[i] * b[i];
  return acc;
}

void check_x(const GeneratorSpec& spec, std::span<const double> x) {
  if (x.size() != spec.d) throw Error(ErrorCode::ShapeMismatch, "feature length " + std::to_string(x.size()));
}

Vector draw_noise(const GeneratorSpec& spec, std::mt19937_64& rng) {
  Vector b(spec.k);
  if (spec.noise == NoiseKind::Gaussian) {
    std::normal_distribution<double> n(0.0, 1.0);
    for (auto& v : b) v = n(rng);
  } else {
    std::exponential_distribution<double> e(1.0);
    for (auto& v : b) v = e(rng);
  }
  for (std::size_t j = 0; j < spec.k; ++j) b[j] *= spec.noise_scales[j];
  return b;
}

Vector response(const GeneratorSpec& spec, std::span<const double> x, std::span<const double> b) {
  Vector y = f_true(spec, x);
  const Matrix t = transform_T(spec, x);
  const auto tb = matvec(t, b);
  for (std::size_t j = 0; j < spec.k; ++j) y[j] += tb[j];
  return y;
}

}  // namespace

std::string to_string(NoiseKind n) { return n == NoiseKind::Gaussian ? "gaussian" : "exponential"; }

NoiseKind noise_kind_from_string(const std::string& s) {
  if (s == "gaussian") return NoiseKind::Gaussian;
  if (s == "exponential") return NoiseKind::Exponential;
  throw Error(ErrorCode::Config, "unknown noise '" + s + "'");
}

void GeneratorSpec::validate() const {
  if (d == 0 || k == 0) throw Error(ErrorCode::Config, "generator dimensions must be positive");
  if (anchors.rows() == 0 || anchors.cols() != d) throw Error(ErrorCode::Config, "anchors must be K x d");
  if (skews.size() != anchors.rows()) throw Error(ErrorCode::Config, "one skew generator per anchor");
  for (const auto& s : skews) {
    if (s.rows() != k || s.cols() != k) throw Error(ErrorCode::Config, "skew generators must be k x k");
    for (std::size_t i = 0; i < k; ++i)
      for (std::size_t j = 0; j < k; ++j)
        if (std::abs(s(i, j) + s(j, i)) > 1e-12) throw Error(ErrorCode::NotSkew, "generator is not skew-symmetric");
  }
  if (v.size() != d) throw Error(ErrorCode::Config, "v must have length d");
  if (beta.rows() != d || beta.cols() != k) throw Error(ErrorCode::Config, "beta must be d x k");
  if (noise_scales.size() != k) throw Error(ErrorCode::Config, "noise_scales must have length k");
}

GeneratorSpec make_generator(const GeneratorOptions& options, std::uint64_t seed) {
  if (options.d == 0 || options.k == 0 || options.anchors == 0) {
    throw Error(ErrorCode::Config, "generator d, k and anchors must be positive");
  }
  auto rng = make_rng(seed, kSpecStream);
  std::normal_distribution<double> normal(0.0, 1.0);
  GeneratorSpec spec;
  spec.d = options.d;
  spec.k = options.k;
  spec.noise = options.noise;
  spec.heteroskedastic = options.heteroskedastic;
  spec.anchors = Matrix(options.anchors, options.d);
  for (double& a : spec.anchors.data()) a = normal(rng);
  for (std::size_t i = 0; i < options.anchors; ++i) {
    Matrix s(options.k, options.k);
    for (std::size_t a = 0; a < options.k; ++a) {
      for (std::size_t b = a + 1; b < options.k; ++b) {
        s(a, b) = options.skew_std * normal(rng);
        s(b, a) = -s(a, b);
      }
    }
    spec.skews.push_back(std::move(s));
  }
  spec.beta = Matrix(options.d, options.k);
  for (double& b : spec.beta.data()) b = normal(rng);
  spec.v.resize(options.d);
  const double v_std = options.v_scale / std::sqrt(static_cast<double>(options.d));
  for (double& v : spec.v) v = v_std * normal(rng);
  spec.noise_scales = options.noise_scales.empty() ? Vector(options.k, 1.0) : options.noise_scales;
  spec.validate();
  return spec;
}

Vector weights(const GeneratorSpec& spec, std::span<const double> x) {
  check_x(spec, x);
  const std::size_t n = spec.anchor_count();
  Vector w(n);
  double total = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    double d2 = 0.0;
    for (std::size_t j = 0; j < spec.d; ++j) {
      const double diff = x[j] - spec.anchors(i, j);
      d2 += diff * diff;
    }
    w[i] = 1.0 / (d2 * d2 + kWeightEpsilon);
    total += w[i];
  }
  for (double& v : w) v /= total;
  return w;
}

double radius_fn(const GeneratorSpec& spec, std::span<const double> x) {
  check_x(spec, x);
  return std::sqrt(dot(x, x)) / 2.0 + dot(x, spec.v) + 0.15;
}

Matrix transform_T(const GeneratorSpec& spec, std::span<const double> x) {
  check_x(spec, x);
  if (!spec.heteroskedastic) return Matrix::identity(spec.k);
  const auto w = weights(spec, x);
  Matrix s(spec.k, spec.k);
  for (std::size_t i = 0; i < w.size(); ++i) s = add(s, scale(spec.skews[i], w[i]));
  return scale(skew_exp(s), radius_fn(spec, x));
}

Vector f_true(const GeneratorSpec& spec, std::span<const double> x) {
  check_x(spec, x);
  Vector y(spec.k);
  for (std::size_t j = 0; j < spec.k; ++j) {
    double lin = 0.0;
    double sq = 0.0;
    for (std::size_t i = 0; i < spec.d; ++i) {
      lin += x[i] * spec.beta(i, j);
      sq += x[i] * x[i] * spec.beta(i, j);
    }
    // J2 copies the first two features into the first two outputs
    const double j2 = j < 2 && j < spec.d ? x[j] : 0.0;
    y[j] = 2.0 * (std::sin(lin) + std::tanh(sq) + j2);
  }
  return y;
}

Vector conditional_mean(const GeneratorSpec& spec, std::span<const double> x) {
  Vector y = f_true(spec, x);
  if (spec.noise == NoiseKind::Exponential) {
    const auto shift = matvec(transform_T(spec, x), std::span<const double>(spec.noise_scales));
    for (std::size_t j = 0; j < spec.k; ++j) y[j] += shift[j];
  }
  return y;
}

Matrix conditional_covariance(const GeneratorSpec& spec, std::span<const double> x) {
  // both noise families have unit variance per component before scaling
  Vector var(spec.k);
  for (std::size_t j = 0; j < spec.k; ++j) var[j] = spec.noise_scales[j] * spec.noise_scales[j];
  const Matrix t = transform_T(spec, x);
  return symmetrize(matmul(matmul(t, Matrix::diagonal(var)), transpose(t)));
}

Matrix sample_features(const GeneratorSpec& spec, std::size_t n, std::uint64_t stream) {
  auto rng = make_rng(stream, kSampleStream + 1);
  std::normal_distribution<double> normal(0.0, 1.0);
  Matrix x(n, spec.d);
  for (double& v : x.data()) v = normal(rng);
  return x;
}

Dataset sample(const GeneratorSpec& spec, std::size_t n, std::uint64_t stream) {
  if (n == 0) throw Error(ErrorCode::TooFewSamples, "sample size must be positive");
  auto rng = make_rng(stream, kSampleStream);
  std::normal_distribution<double> normal(0.0, 1.0);
  Matrix x(n, spec.d);
  Matrix y(n, spec.k);
  for (std::size_t i = 0; i < n; ++i) {
    for (double& v : x.row(i)) v = normal(rng);
    const auto b = draw_noise(spec, rng);
    const auto yi = response(spec, x.row(i), b);
    std::copy(yi.begin(), yi.end(), y.row(i).begin());
  }
  return Dataset(std::move(x), std::move(y));
}

Matrix sample_conditional(const GeneratorSpec& spec, std::span<const double> x, std::size_t m,
                          std::uint64_t stream) {
  check_x(spec, x);
  if (m == 0) throw Error(ErrorCode::TooFewSamples, "sample size must be positive");
  auto rng = make_rng(stream, kConditionalStream);
  const Vector f = f_true(spec, x);
  const Matrix t = transform_T(spec, x);
  Matrix y(m, spec.k);
  for (std::size_t i = 0; i < m; ++i) {
    const auto b = draw_noise(spec, rng);
    const auto tb = matvec(t, std::span<const double>(b));
    for (std::size_t j = 0; j < spec.k; ++j) y(i, j) = f[j] + tb[j];
  }
  return y;
}

nlohmann::json to_json(const GeneratorSpec& spec) {
  auto skews = nlohmann::json::array();
  for (const auto& s : spec.skews) skews.push_back(matrix_to_json(s));
  return {{"format", "synthetic-generator"},
          {"version", 1},
          {"d", spec.d},
          {"k", spec.k},
          {"noise", to_string(spec.noise)},
          {"heteroskedastic", spec.heteroskedastic},
          {"noise_scales", spec.noise_scales},
          {"anchors", matrix_to_json(spec.anchors)},
          {"skews", skews},
          {"v", spec.v},
          {"beta", matrix_to_json(spec.beta)}};
}

GeneratorSpec generator_from_json(const nlohmann::json& j) {
  try {
    GeneratorSpec spec;
    spec.d = j.at("d").get<std::size_t>();
    spec.k = j.at("k").get<std::size_t>();
    spec.noise = noise_kind_from_string(j.at("noise").get<std::string>());
    spec.heteroskedastic = j.at("heteroskedastic").get<bool>();
    spec.noise_scales = j.at("noise_scales").get<Vector>();
    spec.anchors = matrix_from_json(j.at("anchors"));
    for (const auto& s : j.at("skews")) spec.skews.push_back(matrix_from_json(s));
    spec.v = j.at("v").get<Vector>();
    spec.beta = matrix_from_json(j.at("beta"));
    spec.validate();
    return spec;
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::Config, std::string("malformed generator spec: ") + e.what());
  }
}

}  // namespace gcp
