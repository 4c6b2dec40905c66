#pragma once

// Nonconformity scores built on a Gaussian prediction, and the Gaussian
// algebra (conditioning, linear maps) they rely on.
//
// Every quadratic form goes through a Whitener, a triangular factor whose
// application to a residual has the Mahalanobis norm. Scores and set
// membership share the same Whitener so the two can never drift apart.

#include <cstddef>
#include <span>

#include "gcp/gaussian_model.hpp"
#include "gcp/linalg.hpp"

namespace gcp {

class Whitener {
 public:
  enum class Kind {
    PrecisionRoot,  // W = A A^T given the factor A
    Covariance,     // W = C^{-1/2}, applied as L^{-1} with C = L L^T
  };

  Whitener() = default;
  static Whitener precision_root(LowerTriangular a);
  /// Throws NotPositiveDefinite when `covariance` fails Cholesky.
  static Whitener from_covariance(const Matrix& covariance);
  static Whitener from_covariance_factor(LowerTriangular l);

  Kind kind() const noexcept { return kind_; }
  std::size_t dim() const noexcept { return factor_.dim(); }
  const LowerTriangular& factor() const noexcept { return factor_; }

  /// A vector whose Euclidean norm is |W r|.
  Vector apply(std::span<const double> r) const;
  double norm(std::span<const double> r) const;
  /// log det W
  double log_det() const;
  /// W as a dense symmetric matrix.
  Matrix shape() const;
  /// W^{-2}
  Matrix covariance() const;

 private:
  Whitener(Kind kind, LowerTriangular factor) : kind_(kind), factor_(std::move(factor)) {}
  Kind kind_ = Kind::PrecisionRoot;
  LowerTriangular factor_;
};

Vector difference(std::span<const double> y, std::span<const double> center);

/// |Lambda (y - mean)|
double s_mah(const Prediction& p, std::span<const double> y);
/// chi2_cdf(s_mah^2, k)
double s_hdp_gaussian(const Prediction& p, std::span<const double> y);
/// Negative density -(2 pi)^{-k/2} det(Lambda) exp(-s_mah^2 / 2).
double s_nl(const Prediction& p, std::span<const double> y);
/// log of (2 pi)^{-k/2} det(Lambda), the peak log-density.
double log_peak_density(const Prediction& p);

/// Global residual covariance (divisor n) and its whitener.
struct EcmState {
  Matrix covariance;
  Whitener whitener;
  double ridge = 0.0;  // added to the diagonal when plain Cholesky failed
};

/// Residuals as rows. Needs at least k + 1 rows.
EcmState ecm_fit(const Matrix& residuals);
EcmState ecm_from_covariance(Matrix covariance);
double s_ecm(const EcmState& state, std::span<const double> residual);

/// Squared Mahalanobis norm of the observed block: r_O^T Sigma_O^{-1} r_O.
double observed_quadratic(const Prediction& p, std::span<const double> y, std::span<const std::size_t> observed);
/// chi2_cdf(observed_quadratic, |O|)
double s_miss(const Prediction& p, std::span<const double> y, std::span<const std::size_t> observed);
/// Indices of the non-NaN entries of y.
Index observed_entries(std::span<const double> y);

/// Law of the hidden block given revealed values.
struct ConditionedGaussian {
  Index revealed;
  Index hidden;
  Vector mean;
  Matrix covariance;
  Whitener whitener;
  /// |Sigma_rr^{-1/2}(y_r - mean_r)|^2, the revealed part of the full
  /// squared Mahalanobis distance.
  double revealed_quadratic = 0.0;
};

/// `revealed_values` holds y_r in the order of `revealed`. Throws SingularBlock
/// when Sigma_rr or the Schur complement fails Cholesky.
ConditionedGaussian condition(std::span<const double> mean, const Matrix& covariance,
                              std::span<const std::size_t> revealed, std::span<const double> revealed_values);
ConditionedGaussian condition(const Prediction& p, std::span<const std::size_t> revealed,
                              std::span<const double> revealed_values);
double s_revealed(const ConditionedGaussian& c, std::span<const double> y_hidden);

struct TransformedGaussian {
  Matrix transform;
  Vector mean;        // M mu
  Matrix covariance;  // M Sigma M^T
  Whitener whitener;
};

/// Throws RankDeficientTransform if M Sigma M^T fails Cholesky.
TransformedGaussian transform_gaussian(const Prediction& p, const Matrix& m);
/// v lives in the transformed space.
double s_lin_trans(const TransformedGaussian& t, std::span<const double> v);

}  // namespace gcp
