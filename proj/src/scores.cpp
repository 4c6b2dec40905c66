#include "gcp/scores.hpp"

#include <cmath>
#include <numbers>
#include <string>

#include "gcp/stats.hpp"

namespace gcp {

Whitener Whitener::precision_root(LowerTriangular a) { return Whitener(Kind::PrecisionRoot, std::move(a)); }

Whitener Whitener::from_covariance(const Matrix& covariance) {
  return Whitener(Kind::Covariance, cholesky(covariance));
}

Whitener Whitener::from_covariance_factor(LowerTriangular l) { return Whitener(Kind::Covariance, std::move(l)); }

Vector Whitener::apply(std::span<const double> r) const {
  if (r.size() != dim()) throw Error(ErrorCode::ShapeMismatch, "whitener input length");
  if (kind_ == Kind::PrecisionRoot) {
    const auto z = lower_transpose_times(factor_, r);
    return lower_times(factor_, std::span<const double>(z));
  }
  return tri_solve(factor_, r);
}

double Whitener::norm(std::span<const double> r) const {
  const auto w = apply(r);
  return std::sqrt(squared_norm(std::span<const double>(w)));
}

double Whitener::log_det() const {
  // precision root: det W = det(A)^2; covariance: det W = det(L)^{-1}
  return kind_ == Kind::PrecisionRoot ? logdet(factor_) : -0.5 * logdet(factor_);
}

Matrix Whitener::shape() const {
  if (kind_ == Kind::PrecisionRoot) return gram_lower(factor_);
  return spd_power(gram_lower(factor_), -0.5);
}

Matrix Whitener::covariance() const {
  if (kind_ == Kind::Covariance) return gram_lower(factor_);
  const Matrix inv = spd_inverse(factor_);
  return symmetrize(matmul(inv, inv));
}

Vector difference(std::span<const double> y, std::span<const double> center) {
  if (y.size() != center.size()) {
    throw Error(ErrorCode::ShapeMismatch,
                "response length " + std::to_string(y.size()) + " != " + std::to_string(center.size()));
  }
  Vector r(y.size());
  for (std::size_t i = 0; i < y.size(); ++i) r[i] = y[i] - center[i];
  return r;
}

namespace {

double mah_squared(const Prediction& p, std::span<const double> y) {
  const auto r = difference(y, p.mean());
  const auto z = lower_transpose_times(p.factor(), std::span<const double>(r));
  const auto w = lower_times(p.factor(), std::span<const double>(z));
  return squared_norm(std::span<const double>(w));
}

}  // namespace

double s_mah(const Prediction& p, std::span<const double> y) {
  return Whitener::precision_root(p.factor()).norm(difference(y, p.mean()));
}

double s_hdp_gaussian(const Prediction& p, std::span<const double> y) {
  return chi2_cdf(mah_squared(p, y), static_cast<int>(p.dim()));
}

double log_peak_density(const Prediction& p) {
  const double k = static_cast<double>(p.dim());
  return -0.5 * k * std::log(2.0 * std::numbers::pi) + p.log_det_precision_root();
}

double s_nl(const Prediction& p, std::span<const double> y) {
  return -std::exp(log_peak_density(p) - 0.5 * mah_squared(p, y));
}

EcmState ecm_from_covariance(Matrix covariance) {
  EcmState state;
  try {
    state.whitener = Whitener::from_covariance(covariance);
  } catch (const Error& e) {
    if (e.code() != ErrorCode::NotPositiveDefinite) throw;
    const std::size_t k = covariance.rows();
    double trace = 0.0;
    for (std::size_t i = 0; i < k; ++i) trace += covariance(i, i);
    state.ridge = 1e-8 * trace / static_cast<double>(k);
    Matrix ridged = covariance;
    for (std::size_t i = 0; i < k; ++i) ridged(i, i) += state.ridge;
    try {
      state.whitener = Whitener::from_covariance(ridged);
    } catch (const Error&) {
      throw Error(ErrorCode::DegenerateCovariance, "residual covariance is singular even after ridge");
    }
  }
  state.covariance = std::move(covariance);
  return state;
}

EcmState ecm_fit(const Matrix& residuals) {
  const std::size_t n = residuals.rows();
  const std::size_t k = residuals.cols();
  if (k == 0) throw Error(ErrorCode::ShapeMismatch, "residuals have no columns");
  if (n < k + 1) {
    throw Error(ErrorCode::TooFewSamples,
                "need at least " + std::to_string(k + 1) + " residuals, got " + std::to_string(n));
  }
  Vector mean(k, 0.0);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < k; ++j) mean[j] += residuals(i, j);
  for (double& m : mean) m /= static_cast<double>(n);
  Matrix cov(k, k);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t a = 0; a < k; ++a) {
      const double da = residuals(i, a) - mean[a];
      for (std::size_t b = 0; b <= a; ++b) cov(a, b) += da * (residuals(i, b) - mean[b]);
    }
  }
  for (std::size_t a = 0; a < k; ++a) {
    for (std::size_t b = 0; b <= a; ++b) {
      cov(a, b) /= static_cast<double>(n);
      cov(b, a) = cov(a, b);
    }
  }
  return ecm_from_covariance(std::move(cov));
}

double s_ecm(const EcmState& state, std::span<const double> residual) { return state.whitener.norm(residual); }

Index observed_entries(std::span<const double> y) {
  Index idx;
  for (std::size_t j = 0; j < y.size(); ++j)
    if (!std::isnan(y[j])) idx.push_back(j);
  return idx;
}

double observed_quadratic(const Prediction& p, std::span<const double> y, std::span<const std::size_t> observed) {
  if (observed.empty()) throw Error(ErrorCode::EmptyIndexSet, "no observed responses");
  if (y.size() != p.dim()) throw Error(ErrorCode::ShapeMismatch, "response length");
  validate_index(observed, p.dim());
  if (observed.size() == p.dim()) return mah_squared(p, y);
  const auto chol = cholesky(submatrix(p.covariance(), observed));
  Vector r;
  r.reserve(observed.size());
  for (std::size_t j : observed) r.push_back(y[j] - p.mean()[j]);
  const auto z = tri_solve(chol, std::span<const double>(r));
  return squared_norm(std::span<const double>(z));
}

double s_miss(const Prediction& p, std::span<const double> y, std::span<const std::size_t> observed) {
  return chi2_cdf(observed_quadratic(p, y, observed), static_cast<int>(observed.size()));
}

ConditionedGaussian condition(std::span<const double> mean, const Matrix& covariance,
                              std::span<const std::size_t> revealed, std::span<const double> revealed_values) {
  const std::size_t k = mean.size();
  if (covariance.rows() != k || covariance.cols() != k) throw Error(ErrorCode::ShapeMismatch, "covariance shape");
  if (revealed.empty()) throw Error(ErrorCode::EmptyIndexSet, "no revealed responses");
  validate_index(revealed, k);
  if (revealed.size() == k) throw Error(ErrorCode::EmptyIndexSet, "every response is revealed");
  if (revealed_values.size() != revealed.size()) {
    throw Error(ErrorCode::ShapeMismatch, "revealed values do not match revealed indices");
  }
  ConditionedGaussian c;
  c.revealed.assign(revealed.begin(), revealed.end());
  c.hidden = complement(revealed, k);

  LowerTriangular rr;
  try {
    rr = cholesky(submatrix(covariance, revealed));
  } catch (const Error& e) {
    throw Error(ErrorCode::SingularBlock, std::string("revealed block: ") + e.what());
  }
  Vector dr(revealed.size());
  for (std::size_t i = 0; i < revealed.size(); ++i) dr[i] = revealed_values[i] - mean[revealed[i]];
  // u = L^{-1} dr, so Sigma_rr^{-1} dr = L^{-T} u
  const auto u = tri_solve(rr, std::span<const double>(dr));
  c.revealed_quadratic = squared_norm(std::span<const double>(u));
  const auto gain_rhs = tri_solve(rr, std::span<const double>(u), Transpose::Yes);

  const Matrix hr = submatrix(covariance, c.hidden, revealed);
  const auto shift = matvec(hr, std::span<const double>(gain_rhs));
  c.mean.resize(c.hidden.size());
  for (std::size_t i = 0; i < c.hidden.size(); ++i) c.mean[i] = mean[c.hidden[i]] + shift[i];

  // Schur complement via V = L^{-1} Sigma_rh: Sigma_hh - V^T V
  const std::size_t h = c.hidden.size();
  Matrix v(revealed.size(), h);
  for (std::size_t j = 0; j < h; ++j) {
    Vector col(revealed.size());
    for (std::size_t i = 0; i < revealed.size(); ++i) col[i] = hr(j, i);
    const auto s = tri_solve(rr, std::span<const double>(col));
    for (std::size_t i = 0; i < revealed.size(); ++i) v(i, j) = s[i];
  }
  c.covariance = submatrix(covariance, c.hidden);
  for (std::size_t a = 0; a < h; ++a) {
    for (std::size_t b = 0; b <= a; ++b) {
      double acc = 0.0;
      for (std::size_t i = 0; i < revealed.size(); ++i) acc += v(i, a) * v(i, b);
      c.covariance(a, b) -= acc;
      c.covariance(b, a) = c.covariance(a, b);
    }
  }
  try {
    c.whitener = Whitener::from_covariance(c.covariance);
  } catch (const Error& e) {
    throw Error(ErrorCode::SingularBlock, std::string("conditional covariance: ") + e.what());
  }
  return c;
}

ConditionedGaussian condition(const Prediction& p, std::span<const std::size_t> revealed,
                              std::span<const double> revealed_values) {
  return condition(p.mean(), p.covariance(), revealed, revealed_values);
}

double s_revealed(const ConditionedGaussian& c, std::span<const double> y_hidden) {
  return c.whitener.norm(difference(y_hidden, c.mean));
}

TransformedGaussian transform_gaussian(const Prediction& p, const Matrix& m) {
  if (m.cols() != p.dim()) throw Error(ErrorCode::ShapeMismatch, "transform has wrong column count");
  if (m.rows() == 0 || m.rows() > p.dim()) {
    throw Error(ErrorCode::RankDeficientTransform, "transform must have between 1 and k rows");
  }
  TransformedGaussian t;
  t.transform = m;
  t.mean = matvec(m, std::span<const double>(p.mean()));
  t.covariance = symmetrize(matmul(matmul(m, p.covariance()), transpose(m)));
  try {
    t.whitener = Whitener::from_covariance(t.covariance);
  } catch (const Error& e) {
    throw Error(ErrorCode::RankDeficientTransform, std::string("M Sigma M^T: ") + e.what());
  }
  return t;
}

double s_lin_trans(const TransformedGaussian& t, std::span<const double> v) {
  return t.whitener.norm(difference(v, t.mean));
}

}  // namespace gcp
