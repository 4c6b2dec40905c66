#pragma once

// Heteroskedastic synthetic regression data  Y = f(X) + T(X) B,  X ~ N(0, I_d).
//
//   f(x) = 2 (sin(x^T beta) + tanh((x * x)^T beta) + x^T J2)
//   T(x) = r(x) exp(sum_i w_i(x) S_i),   r(x) = |x| / 2 + x^T v + 0.15
//
// S_i are skew-symmetric generators of fixed rotations, blended with weights
// inversely proportional to the fourth power of the distance to K anchors.

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "gcp/dataset.hpp"
#include "gcp/linalg.hpp"

namespace gcp {

enum class NoiseKind { Gaussian, Exponential };

std::string to_string(NoiseKind n);
NoiseKind noise_kind_from_string(const std::string& s);

struct GeneratorOptions {
  std::size_t d = 5;
  std::size_t k = 4;
  std::size_t anchors = 5;
  NoiseKind noise = NoiseKind::Gaussian;
  bool heteroskedastic = true;
  /// Per-component scale of B; empty means all ones.
  Vector noise_scales;
  /// Standard deviation of the skew generator entries.
  double skew_std = 0.5;
  /// Standard deviation of the entries of v is v_scale / sqrt(d).
  double v_scale = 0.25;
};

struct GeneratorSpec {
  std::size_t d = 0;
  std::size_t k = 0;
  Matrix anchors;              // K x d
  std::vector<Matrix> skews;   // K matrices, k x k, skew-symmetric
  Vector v;                    // d
  Matrix beta;                 // d x k
  NoiseKind noise = NoiseKind::Gaussian;
  bool heteroskedastic = true;
  Vector noise_scales;         // k

  std::size_t anchor_count() const noexcept { return anchors.rows(); }
  void validate() const;
};

/// Draws anchors ~ N(0, I), skew entries ~ N(0, skew_std^2), beta ~ N(0, 1)
/// and v ~ N(0, v_scale^2 / d).
GeneratorSpec make_generator(const GeneratorOptions& options, std::uint64_t seed);

Vector weights(const GeneratorSpec& spec, std::span<const double> x);
double radius_fn(const GeneratorSpec& spec, std::span<const double> x);
Matrix transform_T(const GeneratorSpec& spec, std::span<const double> x);
Vector f_true(const GeneratorSpec& spec, std::span<const double> x);

/// E[Y | x] and Cov[Y | x].
Vector conditional_mean(const GeneratorSpec& spec, std::span<const double> x);
Matrix conditional_covariance(const GeneratorSpec& spec, std::span<const double> x);

/// Reproducible draws; `stream` selects an independent random stream.
Dataset sample(const GeneratorSpec& spec, std::size_t n, std::uint64_t stream);
Matrix sample_features(const GeneratorSpec& spec, std::size_t n, std::uint64_t stream);
/// m draws of Y | x, one per row.
Matrix sample_conditional(const GeneratorSpec& spec, std::span<const double> x, std::size_t m,
                          std::uint64_t stream);

nlohmann::json to_json(const GeneratorSpec& spec);
GeneratorSpec generator_from_json(const nlohmann::json& j);

}  // namespace gcp
