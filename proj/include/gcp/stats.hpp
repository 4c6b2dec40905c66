#pragma once

#include <cstddef>
#include <limits>
#include <span>
#include <vector>

#include "gcp/linalg.hpp"

namespace gcp {

inline constexpr double kInfinity = std::numeric_limits<double>::infinity();

/// Regularized lower incomplete gamma P(a, x).
double regularized_gamma_p(double a, double x);

/// CDF of the chi-squared distribution with k degrees of freedom.
double chi2_cdf(double x, int k);

/// Inverse of chi2_cdf in x. p must lie in [0, 1); p = 0 gives 0.
double chi2_quantile(double p, int k);

double normal_cdf(double x);

/// Standard normal quantile, accurate to ~1e-15 after one Newton refinement.
double normal_quantile(double p);

/// The ceil((1 - alpha)(n + 1))-th smallest score, or +infinity when that
/// rank exceeds n (the prediction set is then the whole space).
double conformal_quantile(std::span<const double> scores, double alpha);

/// Volume of the unit ball in R^k.
double unit_ball_volume(int k);

/// Per-column rank transform to standard normal scores. Reference values are
/// the sorted fit data; ranks use the Hazen plotting position (r - 0.5) / n.
/// NaN entries are skipped at fit time and passed through unchanged.
class QuantileTransform {
 public:
  static constexpr std::size_t kMinReferences = 10;

  QuantileTransform() = default;
  explicit QuantileTransform(std::vector<std::vector<double>> references);

  static QuantileTransform fit(const Matrix& data);

  std::size_t dims() const noexcept { return references_.size(); }
  const std::vector<std::vector<double>>& references() const noexcept { return references_; }

  double forward(std::size_t column, double x) const;
  double inverse(std::size_t column, double z) const;

  Vector apply(std::span<const double> row) const;
  Vector apply_inverse(std::span<const double> row) const;
  Matrix apply(const Matrix& data) const;
  Matrix apply_inverse(const Matrix& data) const;

 private:
  std::vector<std::vector<double>> references_;
};

}  // namespace gcp
