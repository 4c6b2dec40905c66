#pragma once

// Conditional Gaussian density N(mean(x), Sigma(x)).
//
// The covariance is parameterized through the precision root
// Lambda = Sigma^{-1/2} = A A^T, where A is lower triangular with a positive
// diagonal produced by a second network. The negative log-likelihood is
//   -log det Lambda + 1/2 |Lambda (y - mean)|^2     (up to a constant).

#include <algorithm>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

#include <json.hpp>

#include "gcp/dataset.hpp"
#include "gcp/linalg.hpp"
#include "gcp/mlp.hpp"

namespace gcp {

inline constexpr double kFactorLogClamp = 10.0;

inline std::size_t factor_size(std::size_t k) { return k * (k + 1) / 2; }

/// Output dimension k such that factor_size(k) == n; throws if none exists.
std::size_t factor_dim(std::size_t n);

inline double clamp_raw(double v) { return std::clamp(v, -kFactorLogClamp, kFactorLogClamp); }
inline Var clamp_raw(const Var& v) { return clamp(v, -kFactorLogClamp, kFactorLogClamp); }

/// Packed raw outputs -> lower-triangular A. Off-diagonal entries are copied,
/// diagonal entries become exp(clamp(raw, -10, 10)).
template <class T>
BasicLowerTriangular<T> assemble_factor(std::span<const T> raw) {
  const std::size_t k = factor_dim(raw.size());
  using std::exp;
  std::vector<T> packed(raw.begin(), raw.end());
  for (std::size_t i = 0; i < k; ++i) {
    T& d = packed[i * (i + 1) / 2 + i];
    d = exp(clamp_raw(d));
  }
  return BasicLowerTriangular<T>(k, std::move(packed));
}

template <class T>
std::vector<T> residual(std::span<const double> y, std::span<const T> mean) {
  std::vector<T> r(mean.size());
  for (std::size_t i = 0; i < mean.size(); ++i) r[i] = T(y[i]) - mean[i];
  return r;
}

/// -log det(A A^T) + 1/2 |A A^T (y - mean)|^2
template <class T>
T nll_loss(std::span<const T> mean, const BasicLowerTriangular<T>& a, std::span<const double> y) {
  if (y.size() != mean.size() || a.dim() != mean.size()) {
    throw Error(ErrorCode::ShapeMismatch, "nll_loss dimensions");
  }
  const auto r = residual(y, mean);
  const auto z = lower_transpose_times(a, std::span<const T>(r));
  const auto w = lower_times(a, std::span<const T>(z));
  return -logdet(a) + squared_norm(std::span<const T>(w)) * 0.5;
}

/// Likelihood of the observed block: with Sigma = (A A^T)^{-2} and S its
/// submatrix on `observed`,  1/2 log det S + 1/2 r_O^T S^{-1} r_O.
template <class T>
T masked_nll_loss(std::span<const T> mean, const BasicLowerTriangular<T>& a, std::span<const double> y,
                  std::span<const std::size_t> observed) {
  if (y.size() != mean.size() || a.dim() != mean.size()) {
    throw Error(ErrorCode::ShapeMismatch, "masked_nll_loss dimensions");
  }
  validate_index(observed, mean.size());
  const BasicMatrix<T> lambda_inv = spd_inverse(a);
  const BasicMatrix<T> sigma = matmul(lambda_inv, lambda_inv);
  const auto chol = cholesky(submatrix(sigma, observed));
  const auto r = residual(y, std::span<const T>(mean));
  const auto r_obs = subvector(std::span<const T>(r), observed);
  const auto z = tri_solve(chol, std::span<const T>(r_obs));
  return logdet(chol) * 0.5 + squared_norm(std::span<const T>(z)) * 0.5;
}

/// Model output at one x: mean, factor A, and derived Lambda = A A^T and
/// Sigma = Lambda^{-2}.
class Prediction {
 public:
  Prediction(Vector mean, LowerTriangular factor);

  std::size_t dim() const noexcept { return mean_.size(); }
  const Vector& mean() const noexcept { return mean_; }
  const LowerTriangular& factor() const noexcept { return factor_; }
  const Matrix& precision_root() const noexcept { return lambda_; }
  const Matrix& covariance() const noexcept { return sigma_; }
  /// log det Lambda = 2 * sum log diag(A)
  double log_det_precision_root() const { return logdet(factor_); }

 private:
  Vector mean_;
  LowerTriangular factor_;
  Matrix lambda_;
  Matrix sigma_;
};

double nll_loss(const Prediction& p, std::span<const double> y);
double masked_nll_loss(const Prediction& p, std::span<const double> y, std::span<const std::size_t> observed);

struct NetworkConfig {
  std::vector<std::size_t> mean_hidden{256};
  std::vector<std::size_t> factor_hidden{256};
  Activation activation = Activation::Relu;
};

class GaussianDensityModel {
 public:
  GaussianDensityModel() = default;
  GaussianDensityModel(Mlp mean_net, Mlp factor_net);

  /// Fresh model. The factor network's last layer starts at zero, so the
  /// initial factor is the identity.
  static GaussianDensityModel create(std::size_t input_dim, std::size_t output_dim,
                                     const NetworkConfig& config, std::uint64_t seed);

  std::size_t input_dim() const noexcept { return mean_net_.spec().input_dim; }
  std::size_t output_dim() const noexcept { return mean_net_.spec().output_dim; }

  const Mlp& mean_net() const noexcept { return mean_net_; }
  const Mlp& factor_net() const noexcept { return factor_net_; }
  Mlp& mean_net() noexcept { return mean_net_; }
  Mlp& factor_net() noexcept { return factor_net_; }

  Vector predict_mean(std::span<const double> x) const;
  Prediction predict(std::span<const double> x) const;

 private:
  Mlp mean_net_;
  Mlp factor_net_;
};

nlohmann::json to_json(const GaussianDensityModel& model);
GaussianDensityModel model_from_json(const nlohmann::json& j);
void save_model(const GaussianDensityModel& model, const std::filesystem::path& path);
GaussianDensityModel load_model(const std::filesystem::path& path);

// ---------------------------------------------------------------------------
// Training

enum class TrainMode {
  Joint,           // mean and covariance networks together on the Gaussian loss
  CovarianceOnly,  // mean network frozen
  MeanOnly,        // mean network on squared error (point-predictor pretraining)
};

enum class MissingMode { None, Impute, Adapted };
enum class Imputation { Predicted, ColumnMean };

struct TrainOptions {
  TrainConfig config;
  TrainMode mode = TrainMode::Joint;
  MissingMode missing = MissingMode::None;
  Imputation imputation = Imputation::Predicted;
};

struct EpochRecord {
  std::size_t epoch;
  double train_loss;
  double val_loss;
};

struct TrainResult {
  std::vector<EpochRecord> history;
  std::size_t best_epoch = 0;
  double best_val_loss = 0.0;
};

/// Mean validation loss of the objective selected by `options`.
double validation_loss(const GaussianDensityModel& model, const Dataset& data, const TrainOptions& options);

/// Adam with the configured schedule; keeps the parameters with the lowest
/// validation loss. Throws NonFiniteLoss with the epoch and batch on divergence.
TrainResult train_model(GaussianDensityModel& model, const Dataset& train_data, const Dataset& val_data,
                  const TrainOptions& options);

}  // namespace gcp
