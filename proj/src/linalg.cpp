#include "gcp/linalg.hpp"

#include <cmath>
#include <numeric>

namespace gcp {

void validate_index(std::span<const std::size_t> idx, std::size_t n) {
  if (idx.empty()) throw Error(ErrorCode::EmptyIndexSet, "index set is empty");
  for (std::size_t i = 0; i < idx.size(); ++i) {
    if (idx[i] >= n) {
      throw Error(ErrorCode::IndexOutOfRange,
                  "index " + std::to_string(idx[i]) + " >= " + std::to_string(n));
    }
    if (i > 0 && idx[i] <= idx[i - 1]) {
      throw Error(ErrorCode::IndexOutOfRange, "index set is not strictly increasing");
    }
  }
}

Index complement(std::span<const std::size_t> idx, std::size_t n) {
  Index out;
  std::size_t p = 0;
  for (std::size_t i = 0; i < n; ++i) {
    if (p < idx.size() && idx[p] == i) {
      ++p;
    } else {
      out.push_back(i);
    }
  }
  return out;
}

Matrix add(const Matrix& a, const Matrix& b) {
  if (a.rows() != b.rows() || a.cols() != b.cols()) throw Error(ErrorCode::ShapeMismatch, "add");
  Matrix c(a.rows(), a.cols());
  for (std::size_t i = 0; i < a.rows(); ++i)
    for (std::size_t j = 0; j < a.cols(); ++j) c(i, j) = a(i, j) + b(i, j);
  return c;
}

Matrix subtract(const Matrix& a, const Matrix& b) {
  if (a.rows() != b.rows() || a.cols() != b.cols()) throw Error(ErrorCode::ShapeMismatch, "subtract");
  Matrix c(a.rows(), a.cols());
  for (std::size_t i = 0; i < a.rows(); ++i)
    for (std::size_t j = 0; j < a.cols(); ++j) c(i, j) = a(i, j) - b(i, j);
  return c;
}

Matrix scale(const Matrix& a, double s) {
  Matrix c = a;
  for (double& v : c.data()) v *= s;
  return c;
}

Matrix symmetrize(const Matrix& m) {
  if (!m.square()) throw Error(ErrorCode::ShapeMismatch, "symmetrize needs a square matrix");
  Matrix s(m.rows(), m.cols());
  for (std::size_t i = 0; i < m.rows(); ++i)
    for (std::size_t j = 0; j < m.cols(); ++j) s(i, j) = 0.5 * (m(i, j) + m(j, i));
  return s;
}

double frobenius_norm(const Matrix& m) {
  double acc = 0.0;
  for (double v : m.data()) acc += v * v;
  return std::sqrt(acc);
}

double max_abs_diff(const Matrix& a, const Matrix& b) {
  if (a.rows() != b.rows() || a.cols() != b.cols()) throw Error(ErrorCode::ShapeMismatch, "max_abs_diff");
  double out = 0.0;
  for (std::size_t i = 0; i < a.data().size(); ++i) out = std::max(out, std::abs(a.data()[i] - b.data()[i]));
  return out;
}

Matrix skew_exp(const Matrix& s) {
  if (!s.square()) throw Error(ErrorCode::NotSkew, "matrix is not square");
  const std::size_t n = s.rows();
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j <= i; ++j) {
      if (std::abs(s(i, j) + s(j, i)) > kSymmetryTolerance) {
        throw Error(ErrorCode::NotSkew, "s + s^T != 0 at (" + std::to_string(i) + "," + std::to_string(j) + ")");
      }
    }
  }
  // scale so that the Frobenius norm is below 0.5
  int squarings = 0;
  double norm = frobenius_norm(s);
  while (norm >= 0.5) {
    norm *= 0.5;
    ++squarings;
  }
  const Matrix scaled = scale(s, std::ldexp(1.0, -squarings));

  Matrix result = Matrix::identity(n);
  Matrix term = Matrix::identity(n);
  for (int p = 1; p <= 12; ++p) {
    term = scale(matmul(term, scaled), 1.0 / p);
    result = add(result, term);
  }
  for (int i = 0; i < squarings; ++i) result = matmul(result, result);
  return result;
}

SymmetricEigen symmetric_eigen(const Matrix& m) {
  check_symmetric(m);
  const std::size_t n = m.rows();
  Matrix a = symmetrize(m);
  Matrix v = Matrix::identity(n);

  for (int sweep = 0; sweep < 100; ++sweep) {
    double off = 0.0;
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = i + 1; j < n; ++j) off += a(i, j) * a(i, j);
    if (off < 1e-30) break;

    for (std::size_t p = 0; p < n; ++p) {
      for (std::size_t q = p + 1; q < n; ++q) {
        if (std::abs(a(p, q)) < 1e-300) continue;
        const double theta = (a(q, q) - a(p, p)) / (2.0 * a(p, q));
        const double t = (theta >= 0 ? 1.0 : -1.0) / (std::abs(theta) + std::sqrt(theta * theta + 1.0));
        const double c = 1.0 / std::sqrt(t * t + 1.0);
        const double sn = t * c;
        for (std::size_t r = 0; r < n; ++r) {
          const double arp = a(r, p);
          const double arq = a(r, q);
          a(r, p) = c * arp - sn * arq;
          a(r, q) = sn * arp + c * arq;
        }
        for (std::size_t r = 0; r < n; ++r) {
          const double apr = a(p, r);
          const double aqr = a(q, r);
          a(p, r) = c * apr - sn * aqr;
          a(q, r) = sn * apr + c * aqr;
        }
        for (std::size_t r = 0; r < n; ++r) {
          const double vrp = v(r, p);
          const double vrq = v(r, q);
          v(r, p) = c * vrp - sn * vrq;
          v(r, q) = sn * vrp + c * vrq;
        }
      }
    }
  }

  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](std::size_t i, std::size_t j) { return a(i, i) < a(j, j); });
  SymmetricEigen out{Vector(n), Matrix(n, n)};
  for (std::size_t c = 0; c < n; ++c) {
    out.values[c] = a(order[c], order[c]);
    for (std::size_t r = 0; r < n; ++r) out.vectors(r, c) = v(r, order[c]);
  }
  return out;
}

Matrix spd_power(const Matrix& m, double p) {
  const auto eig = symmetric_eigen(m);
  const std::size_t n = m.rows();
  Vector powered(n);
  for (std::size_t i = 0; i < n; ++i) {
    if (!(eig.values[i] > kPivotThreshold)) {
      throw Error(ErrorCode::NotPositiveDefinite, "eigenvalue " + std::to_string(eig.values[i]));
    }
    powered[i] = std::pow(eig.values[i], p);
  }
  Matrix out(n, n);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j <= i; ++j) {
      double acc = 0.0;
      for (std::size_t c = 0; c < n; ++c) acc += eig.vectors(i, c) * powered[c] * eig.vectors(j, c);
      out(i, j) = acc;
      out(j, i) = acc;
    }
  }
  return out;
}

}  // namespace gcp
