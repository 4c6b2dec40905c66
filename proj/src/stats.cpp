#include "gcp/stats.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <string>

namespace gcp {

namespace {

constexpr int kMaxIterations = 500;
constexpr double kEpsilon = 1e-16;

double gamma_series(double a, double x) {
  double term = 1.0 / a;
  double sum = term;
  for (int n = 1; n < kMaxIterations; ++n) {
    term *= x / (a + n);
    sum += term;
    if (std::abs(term) < std::abs(sum) * kEpsilon) break;
  }
  return sum * std::exp(-x + a * std::log(x) - std::lgamma(a));
}

// Lentz evaluation of the continued fraction for Q(a, x).
double gamma_continued_fraction(double a, double x) {
  constexpr double tiny = 1e-300;
  double b = x + 1.0 - a;
  double c = 1.0 / tiny;
  double d = 1.0 / b;
  double h = d;
  for (int i = 1; i < kMaxIterations; ++i) {
    const double an = -i * (i - a);
    b += 2.0;
    d = an * d + b;
    if (std::abs(d) < tiny) d = tiny;
    c = b + an / c;
    if (std::abs(c) < tiny) c = tiny;
    d = 1.0 / d;
    const double delta = d * c;
    h *= delta;
    if (std::abs(delta - 1.0) < kEpsilon) break;
  }
  return std::exp(-x + a * std::log(x) - std::lgamma(a)) * h;
}

}  // namespace

double regularized_gamma_p(double a, double x) {
  if (!(a > 0.0)) throw Error(ErrorCode::DomainError, "gamma shape must be positive");
  if (!(x >= 0.0)) throw Error(ErrorCode::DomainError, "gamma argument must be nonnegative");
  if (x == 0.0) return 0.0;
  if (std::isinf(x)) return 1.0;
  if (x < a + 1.0) return gamma_series(a, x);
  return 1.0 - gamma_continued_fraction(a, x);
}

double chi2_cdf(double x, int k) {
  if (k < 1) throw Error(ErrorCode::DomainError, "chi2 degrees of freedom must be >= 1");
  if (!(x >= 0.0)) throw Error(ErrorCode::DomainError, "chi2 argument must be >= 0");
  return regularized_gamma_p(0.5 * k, 0.5 * x);
}

double chi2_quantile(double p, int k) {
  if (k < 1) throw Error(ErrorCode::DomainError, "chi2 degrees of freedom must be >= 1");
  if (!(p >= 0.0 && p < 1.0)) throw Error(ErrorCode::DomainError, "chi2 quantile level must lie in [0, 1)");
  if (p == 0.0) return 0.0;
  double lo = 0.0;
  double hi = std::max(1.0, static_cast<double>(k));
  while (chi2_cdf(hi, k) < p) {
    lo = hi;
    hi *= 2.0;
    if (hi > 1e300) return kInfinity;
  }
  for (int i = 0; i < 200 && hi - lo > 1e-15 * hi; ++i) {
    const double mid = 0.5 * (lo + hi);
    if (chi2_cdf(mid, k) < p) {
      lo = mid;
    } else {
      hi = mid;
    }
  }
  return 0.5 * (lo + hi);
}

double normal_cdf(double x) { return 0.5 * std::erfc(-x / std::numbers::sqrt2); }

double normal_quantile(double p) {
  if (!(p > 0.0 && p < 1.0)) throw Error(ErrorCode::DomainError, "normal quantile level must lie in (0, 1)");

  // Acklam's rational approximation, then one Newton step on erfc.
  static constexpr double a[] = {-3.969683028665376e+01, 2.209460984245205e+02, -2.759285104469687e+02,
                                 1.383577518672690e+02,  -3.066479806614716e+01, 2.506628277459239e+00};
  static constexpr double b[] = {-5.447609879822406e+01, 1.615858368580409e+02, -1.556989798598866e+02,
                                 6.680131188771972e+01,  -1.328068155288572e+01};
  static constexpr double c[] = {-7.784894002430293e-03, -3.223964580411365e-01, -2.400758277161838e+00,
                                 -2.549732539343734e+00, 4.374664141464968e+00,  2.938163982698783e+00};
  static constexpr double d[] = {7.784695709041462e-03, 3.224671290700398e-01, 2.445134137142996e+00,
                                 3.754408661907416e+00};
  constexpr double p_low = 0.02425;

  double x;
  if (p < p_low) {
    const double q = std::sqrt(-2.0 * std::log(p));
    x = (((((c[0] * q + c[1]) * q + c[2]) * q + c[3]) * q + c[4]) * q + c[5]) /
        ((((d[0] * q + d[1]) * q + d[2]) * q + d[3]) * q + 1.0);
  } else if (p <= 1.0 - p_low) {
    const double q = p - 0.5;
    const double r = q * q;
    x = (((((a[0] * r + a[1]) * r + a[2]) * r + a[3]) * r + a[4]) * r + a[5]) * q /
        (((((b[0] * r + b[1]) * r + b[2]) * r + b[3]) * r + b[4]) * r + 1.0);
  } else {
    const double q = std::sqrt(-2.0 * std::log1p(-p));
    x = -(((((c[0] * q + c[1]) * q + c[2]) * q + c[3]) * q + c[4]) * q + c[5]) /
        ((((d[0] * q + d[1]) * q + d[2]) * q + d[3]) * q + 1.0);
  }

  // Halley refinement (reduces to Newton's step plus a curvature term).
  const double e = normal_cdf(x) - p;
  const double u = e * std::sqrt(2.0 * std::numbers::pi) * std::exp(0.5 * x * x);
  x = x - u / (1.0 + 0.5 * x * u);
  return x;
}

double conformal_quantile(std::span<const double> scores, double alpha) {
  if (scores.empty()) throw Error(ErrorCode::EmptyScores, "no calibration scores");
  if (!(alpha > 0.0 && alpha < 1.0)) throw Error(ErrorCode::DomainError, "alpha must lie in (0, 1)");
  for (double s : scores) {
    if (!std::isfinite(s)) throw Error(ErrorCode::DomainError, "non-finite calibration score");
  }
  const std::size_t n = scores.size();
  // (1 - alpha)(n + 1) with a guard so that e.g. 0.9 * 10 is not rounded up to 10.
  const double level = (1.0 - alpha) * static_cast<double>(n + 1);
  const auto rank = static_cast<std::size_t>(std::ceil(level - 1e-9 * level));
  if (rank > n) return kInfinity;
  std::vector<double> sorted(scores.begin(), scores.end());
  const std::size_t pos = rank == 0 ? 0 : rank - 1;
  std::nth_element(sorted.begin(), sorted.begin() + static_cast<std::ptrdiff_t>(pos), sorted.end());
  return sorted[pos];
}

double unit_ball_volume(int k) {
  return std::exp(0.5 * k * std::log(std::numbers::pi) - std::lgamma(0.5 * k + 1.0));
}

// ---------------------------------------------------------------------------

QuantileTransform::QuantileTransform(std::vector<std::vector<double>> references)
    : references_(std::move(references)) {
  for (auto& column : references_) {
    if (column.size() < kMinReferences) {
      throw Error(ErrorCode::TooFewSamples, "quantile transform needs at least " +
                                                std::to_string(kMinReferences) + " references per column");
    }
    std::sort(column.begin(), column.end());
  }
}

QuantileTransform QuantileTransform::fit(const Matrix& data) {
  std::vector<std::vector<double>> refs(data.cols());
  for (std::size_t i = 0; i < data.rows(); ++i) {
    for (std::size_t j = 0; j < data.cols(); ++j) {
      if (!std::isnan(data(i, j))) refs[j].push_back(data(i, j));
    }
  }
  return QuantileTransform(std::move(refs));
}

double QuantileTransform::forward(std::size_t column, double x) const {
  if (std::isnan(x)) return x;
  const auto& ref = references_.at(column);
  const double n = static_cast<double>(ref.size());
  const double p_min = 0.5 / n;
  const double p_max = 1.0 - 0.5 / n;

  double p;
  if (x <= ref.front()) {
    p = p_min;
  } else if (x >= ref.back()) {
    p = p_max;
  } else {
    const auto lower = std::lower_bound(ref.begin(), ref.end(), x);
    const auto upper = std::upper_bound(ref.begin(), ref.end(), x);
    if (lower != upper) {
      // tie run: average 1-based rank of the run
      const double first = static_cast<double>(lower - ref.begin()) + 1.0;
      const double last = static_cast<double>(upper - ref.begin());
      p = (0.5 * (first + last) - 0.5) / n;
    } else {
      // ref[j-1] < x < ref[j] with 0-based j = upper - begin
      const auto j = static_cast<std::size_t>(upper - ref.begin());
      const double lo = ref[j - 1];
      const double hi = ref[j];
      const double rank = static_cast<double>(j) + (x - lo) / (hi - lo);  // 1-based rank of lo is j
      p = (rank - 0.5) / n;
    }
  }
  return normal_quantile(std::clamp(p, p_min, p_max));
}

double QuantileTransform::inverse(std::size_t column, double z) const {
  if (std::isnan(z)) return z;
  const auto& ref = references_.at(column);
  const double n = static_cast<double>(ref.size());
  const double p = std::clamp(normal_cdf(z), 0.5 / n, 1.0 - 0.5 / n);
  const double rank = p * n + 0.5;  // 1-based fractional rank in [1, n]
  const double pos = std::clamp(rank - 1.0, 0.0, n - 1.0);
  const auto j = static_cast<std::size_t>(std::floor(pos));
  if (j + 1 >= ref.size()) return ref.back();
  const double t = pos - static_cast<double>(j);
  return ref[j] + t * (ref[j + 1] - ref[j]);
}

Vector QuantileTransform::apply(std::span<const double> row) const {
  if (row.size() != dims()) throw Error(ErrorCode::ShapeMismatch, "quantile transform row width");
  Vector out(row.size());
  for (std::size_t j = 0; j < row.size(); ++j) out[j] = forward(j, row[j]);
  return out;
}

Vector QuantileTransform::apply_inverse(std::span<const double> row) const {
  if (row.size() != dims()) throw Error(ErrorCode::ShapeMismatch, "quantile transform row width");
  Vector out(row.size());
  for (std::size_t j = 0; j < row.size(); ++j) out[j] = inverse(j, row[j]);
  return out;
}

Matrix QuantileTransform::apply(const Matrix& data) const {
  Matrix out(data.rows(), data.cols());
  for (std::size_t i = 0; i < data.rows(); ++i) {
    const auto row = apply(data.row(i));
    std::copy(row.begin(), row.end(), out.row(i).begin());
  }
  return out;
}

Matrix QuantileTransform::apply_inverse(const Matrix& data) const {
  Matrix out(data.rows(), data.cols());
  for (std::size_t i = 0; i < data.rows(); ++i) {
    const auto row = apply_inverse(data.row(i));
    std::copy(row.begin(), row.end(), out.row(i).begin());
  }
  return out;
}

}  // namespace gcp
