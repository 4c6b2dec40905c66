#pragma once

// Dense linear algebra for the small (k <= 16) matrices that appear in
// Gaussian conformal prediction. The factorization routines are templates so
// that the same code runs on plain doubles and on autodiff variables.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <initializer_list>
#include <span>
#include <string>
#include <vector>

#include "gcp/error.hpp"

namespace gcp {

inline double value_of(double x) { return x; }

using Vector = std::vector<double>;
using Index = std::vector<std::size_t>;

template <class T>
class BasicMatrix {
 public:
  BasicMatrix() = default;
  BasicMatrix(std::size_t rows, std::size_t cols, T fill = T(0.0))
      : rows_(rows), cols_(cols), data_(rows * cols, fill) {}
  BasicMatrix(std::size_t rows, std::size_t cols, std::vector<T> data)
      : rows_(rows), cols_(cols), data_(std::move(data)) {
    if (data_.size() != rows_ * cols_) {
      throw Error(ErrorCode::ShapeMismatch, "matrix data length " + std::to_string(data_.size()) +
                                                " != " + std::to_string(rows_ * cols_));
    }
  }

  static BasicMatrix identity(std::size_t n) {
    BasicMatrix m(n, n);
    for (std::size_t i = 0; i < n; ++i) m(i, i) = T(1.0);
    return m;
  }

  static BasicMatrix from_rows(std::initializer_list<std::initializer_list<double>> rows) {
    const std::size_t r = rows.size();
    const std::size_t c = r == 0 ? 0 : rows.begin()->size();
    BasicMatrix m(r, c);
    std::size_t i = 0;
    for (const auto& row : rows) {
      if (row.size() != c) throw Error(ErrorCode::ShapeMismatch, "ragged row list");
      std::size_t j = 0;
      for (double v : row) m(i, j++) = T(v);
      ++i;
    }
    return m;
  }

  static BasicMatrix diagonal(std::span<const double> d) {
    BasicMatrix m(d.size(), d.size());
    for (std::size_t i = 0; i < d.size(); ++i) m(i, i) = T(d[i]);
    return m;
  }

  std::size_t rows() const noexcept { return rows_; }
  std::size_t cols() const noexcept { return cols_; }
  bool square() const noexcept { return rows_ == cols_; }

  T& operator()(std::size_t i, std::size_t j) { return data_[i * cols_ + j]; }
  const T& operator()(std::size_t i, std::size_t j) const { return data_[i * cols_ + j]; }

  std::span<T> row(std::size_t i) { return {data_.data() + i * cols_, cols_}; }
  std::span<const T> row(std::size_t i) const { return {data_.data() + i * cols_, cols_}; }

  std::span<const T> data() const noexcept { return data_; }
  std::span<T> data() noexcept { return data_; }

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<T> data_;
};

/// Lower-triangular matrix stored packed by rows: (0,0), (1,0), (1,1), (2,0), ...
template <class T>
class BasicLowerTriangular {
 public:
  BasicLowerTriangular() = default;
  explicit BasicLowerTriangular(std::size_t dim) : dim_(dim), packed_(packed_size(dim), T(0.0)) {}
  BasicLowerTriangular(std::size_t dim, std::vector<T> packed) : dim_(dim), packed_(std::move(packed)) {
    if (packed_.size() != packed_size(dim_)) {
      throw Error(ErrorCode::ShapeMismatch, "packed length " + std::to_string(packed_.size()) +
                                                " != " + std::to_string(packed_size(dim_)));
    }
  }

  static constexpr std::size_t packed_size(std::size_t dim) { return dim * (dim + 1) / 2; }

  static BasicLowerTriangular identity(std::size_t dim) {
    BasicLowerTriangular l(dim);
    for (std::size_t i = 0; i < dim; ++i) l(i, i) = T(1.0);
    return l;
  }

  static BasicLowerTriangular from_dense(const BasicMatrix<T>& m) {
    BasicLowerTriangular l(m.rows());
    for (std::size_t i = 0; i < m.rows(); ++i)
      for (std::size_t j = 0; j <= i; ++j) l(i, j) = m(i, j);
    return l;
  }

  std::size_t dim() const noexcept { return dim_; }

  /// Requires j <= i.
  T& operator()(std::size_t i, std::size_t j) { return packed_[i * (i + 1) / 2 + j]; }
  const T& operator()(std::size_t i, std::size_t j) const { return packed_[i * (i + 1) / 2 + j]; }

  /// Entry access that returns zero above the diagonal.
  T at(std::size_t i, std::size_t j) const { return j <= i ? (*this)(i, j) : T(0.0); }

  std::span<const T> packed() const noexcept { return packed_; }

  BasicMatrix<T> to_dense() const {
    BasicMatrix<T> m(dim_, dim_);
    for (std::size_t i = 0; i < dim_; ++i)
      for (std::size_t j = 0; j <= i; ++j) m(i, j) = (*this)(i, j);
    return m;
  }

 private:
  std::size_t dim_ = 0;
  std::vector<T> packed_;
};

using Matrix = BasicMatrix<double>;
using LowerTriangular = BasicLowerTriangular<double>;

inline constexpr double kSymmetryTolerance = 1e-9;
inline constexpr double kPivotThreshold = 1e-12;
inline constexpr double kSingularDiagonal = 1e-14;

enum class Transpose { No, Yes };

// ---------------------------------------------------------------------------
// Products

template <class T>
BasicMatrix<T> matmul(const BasicMatrix<T>& a, const BasicMatrix<T>& b) {
  if (a.cols() != b.rows()) throw Error(ErrorCode::ShapeMismatch, "matmul inner dimensions differ");
  BasicMatrix<T> c(a.rows(), b.cols());
  for (std::size_t i = 0; i < a.rows(); ++i) {
    for (std::size_t j = 0; j < b.cols(); ++j) {
      T acc = a(i, 0) * b(0, j);
      for (std::size_t p = 1; p < a.cols(); ++p) acc = acc + a(i, p) * b(p, j);
      c(i, j) = acc;
    }
  }
  return c;
}

template <class T>
BasicMatrix<T> transpose(const BasicMatrix<T>& a) {
  BasicMatrix<T> t(a.cols(), a.rows());
  for (std::size_t i = 0; i < a.rows(); ++i)
    for (std::size_t j = 0; j < a.cols(); ++j) t(j, i) = a(i, j);
  return t;
}

template <class T>
std::vector<T> matvec(const BasicMatrix<T>& a, std::span<const T> v) {
  if (a.cols() != v.size()) throw Error(ErrorCode::ShapeMismatch, "matvec dimension mismatch");
  std::vector<T> out(a.rows());
  for (std::size_t i = 0; i < a.rows(); ++i) {
    T acc = a(i, 0) * v[0];
    for (std::size_t j = 1; j < a.cols(); ++j) acc = acc + a(i, j) * v[j];
    out[i] = acc;
  }
  return out;
}

template <class T>
std::vector<T> matvec(const BasicMatrix<T>& a, const std::vector<T>& v) {
  return matvec(a, std::span<const T>(v));
}

/// L * v
template <class T>
std::vector<T> lower_times(const BasicLowerTriangular<T>& l, std::span<const T> v) {
  const std::size_t n = l.dim();
  std::vector<T> out(n);
  for (std::size_t i = 0; i < n; ++i) {
    T acc = l(i, 0) * v[0];
    for (std::size_t j = 1; j <= i; ++j) acc = acc + l(i, j) * v[j];
    out[i] = acc;
  }
  return out;
}

/// L^T * v
template <class T>
std::vector<T> lower_transpose_times(const BasicLowerTriangular<T>& l, std::span<const T> v) {
  const std::size_t n = l.dim();
  std::vector<T> out(n);
  for (std::size_t i = 0; i < n; ++i) {
    T acc = l(i, i) * v[i];
    for (std::size_t j = i + 1; j < n; ++j) acc = acc + l(j, i) * v[j];
    out[i] = acc;
  }
  return out;
}

/// L * L^T as a dense symmetric matrix.
template <class T>
BasicMatrix<T> gram_lower(const BasicLowerTriangular<T>& l) {
  const std::size_t n = l.dim();
  BasicMatrix<T> m(n, n);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j <= i; ++j) {
      T acc = l(i, 0) * l(j, 0);
      for (std::size_t p = 1; p <= j; ++p) acc = acc + l(i, p) * l(j, p);
      m(i, j) = acc;
      m(j, i) = acc;
    }
  }
  return m;
}

template <class T>
T squared_norm(std::span<const T> v) {
  T acc = v[0] * v[0];
  for (std::size_t i = 1; i < v.size(); ++i) acc = acc + v[i] * v[i];
  return acc;
}

// ---------------------------------------------------------------------------
// Factorizations and solves

template <class T>
void check_symmetric(const BasicMatrix<T>& m) {
  if (!m.square()) throw Error(ErrorCode::ShapeMismatch, "matrix is not square");
  for (std::size_t i = 0; i < m.rows(); ++i) {
    for (std::size_t j = 0; j < i; ++j) {
      const double a = value_of(m(i, j));
      const double b = value_of(m(j, i));
      if (std::abs(a - b) > kSymmetryTolerance * std::max(1.0, std::max(std::abs(a), std::abs(b)))) {
        throw Error(ErrorCode::DomainError, "matrix is not symmetric at (" + std::to_string(i) +
                                                "," + std::to_string(j) + ")");
      }
    }
  }
}

/// Cholesky factor of the symmetrized input. Throws NotPositiveDefinite when a
/// pivot falls to kPivotThreshold or below.
template <class T>
BasicLowerTriangular<T> cholesky(const BasicMatrix<T>& m) {
  check_symmetric(m);
  using std::sqrt;
  const std::size_t n = m.rows();
  BasicLowerTriangular<T> l(n);
  for (std::size_t j = 0; j < n; ++j) {
    T pivot = m(j, j);
    for (std::size_t p = 0; p < j; ++p) pivot = pivot - l(j, p) * l(j, p);
    if (!(value_of(pivot) > kPivotThreshold)) {
      throw Error(ErrorCode::NotPositiveDefinite,
                  "pivot " + std::to_string(value_of(pivot)) + " at column " + std::to_string(j));
    }
    const T diag = sqrt(pivot);
    l(j, j) = diag;
    for (std::size_t i = j + 1; i < n; ++i) {
      // symmetrized entry (m_ij + m_ji) / 2
      T acc = (m(i, j) + m(j, i)) * 0.5;
      for (std::size_t p = 0; p < j; ++p) acc = acc - l(i, p) * l(j, p);
      l(i, j) = acc / diag;
    }
  }
  return l;
}

/// Solves L x = b, or L^T x = b when transposed.
template <class T>
std::vector<T> tri_solve(const BasicLowerTriangular<T>& l, std::span<const T> b,
                         Transpose transposed = Transpose::No) {
  const std::size_t n = l.dim();
  if (b.size() != n) throw Error(ErrorCode::ShapeMismatch, "tri_solve rhs length mismatch");
  for (std::size_t i = 0; i < n; ++i) {
    if (std::abs(value_of(l(i, i))) < kSingularDiagonal) {
      throw Error(ErrorCode::SingularTriangular, "diagonal entry " + std::to_string(i));
    }
  }
  std::vector<T> x(b.begin(), b.end());
  if (transposed == Transpose::No) {
    for (std::size_t i = 0; i < n; ++i) {
      T acc = x[i];
      for (std::size_t j = 0; j < i; ++j) acc = acc - l(i, j) * x[j];
      x[i] = acc / l(i, i);
    }
  } else {
    for (std::size_t ii = n; ii-- > 0;) {
      T acc = x[ii];
      for (std::size_t j = ii + 1; j < n; ++j) acc = acc - l(j, ii) * x[j];
      x[ii] = acc / l(ii, ii);
    }
  }
  return x;
}

template <class T>
std::vector<T> tri_solve(const BasicLowerTriangular<T>& l, const std::vector<T>& b,
                         Transpose transposed = Transpose::No) {
  return tri_solve(l, std::span<const T>(b), transposed);
}

/// Inverse of a lower-triangular matrix (itself lower triangular).
template <class T>
BasicLowerTriangular<T> lower_inverse(const BasicLowerTriangular<T>& l) {
  const std::size_t n = l.dim();
  BasicLowerTriangular<T> inv(n);
  for (std::size_t i = 0; i < n; ++i) {
    if (std::abs(value_of(l(i, i))) < kSingularDiagonal) {
      throw Error(ErrorCode::SingularTriangular, "diagonal entry " + std::to_string(i));
    }
  }
  for (std::size_t j = 0; j < n; ++j) {
    inv(j, j) = T(1.0) / l(j, j);
    for (std::size_t i = j + 1; i < n; ++i) {
      T acc = l(i, j) * inv(j, j);
      for (std::size_t p = j + 1; p < i; ++p) acc = acc + l(i, p) * inv(p, j);
      inv(i, j) = -acc / l(i, i);
    }
  }
  return inv;
}

/// (L L^T)^{-1} given the factor L, returned exactly symmetric.
template <class T>
BasicMatrix<T> spd_inverse(const BasicLowerTriangular<T>& l) {
  const auto inv = lower_inverse(l);
  const std::size_t n = l.dim();
  BasicMatrix<T> out(n, n);
  // (L^{-T} L^{-1})_ij = sum_{p >= max(i,j)} inv(p,i) inv(p,j)
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j <= i; ++j) {
      T acc = inv(i, i) * inv(i, j);
      for (std::size_t p = i + 1; p < n; ++p) acc = acc + inv(p, i) * inv(p, j);
      out(i, j) = acc;
      out(j, i) = acc;
    }
  }
  return out;
}

/// log det(L L^T).
template <class T>
T logdet(const BasicLowerTriangular<T>& l) {
  using std::log;
  T acc = log(l(0, 0));
  for (std::size_t i = 1; i < l.dim(); ++i) acc = acc + log(l(i, i));
  return acc * 2.0;
}

// ---------------------------------------------------------------------------
// Index sets

/// Throws unless idx is non-empty, strictly increasing and below n.
void validate_index(std::span<const std::size_t> idx, std::size_t n);

/// Indices in [0, n) not in idx (idx must be valid).
Index complement(std::span<const std::size_t> idx, std::size_t n);

template <class T>
BasicMatrix<T> submatrix(const BasicMatrix<T>& m, std::span<const std::size_t> rows,
                         std::span<const std::size_t> cols) {
  validate_index(rows, m.rows());
  validate_index(cols, m.cols());
  BasicMatrix<T> out(rows.size(), cols.size());
  for (std::size_t i = 0; i < rows.size(); ++i)
    for (std::size_t j = 0; j < cols.size(); ++j) out(i, j) = m(rows[i], cols[j]);
  return out;
}

template <class T>
BasicMatrix<T> submatrix(const BasicMatrix<T>& m, std::span<const std::size_t> idx) {
  return submatrix(m, idx, idx);
}

template <class T>
std::vector<T> subvector(std::span<const T> v, std::span<const std::size_t> idx) {
  validate_index(idx, v.size());
  std::vector<T> out;
  out.reserve(idx.size());
  for (std::size_t i : idx) out.push_back(v[i]);
  return out;
}

template <class T>
std::vector<T> subvector(const std::vector<T>& v, std::span<const std::size_t> idx) {
  return subvector(std::span<const T>(v), idx);
}

// ---------------------------------------------------------------------------
// Double-only routines

Matrix add(const Matrix& a, const Matrix& b);
Matrix subtract(const Matrix& a, const Matrix& b);
Matrix scale(const Matrix& a, double s);
Matrix symmetrize(const Matrix& m);
double frobenius_norm(const Matrix& m);
double max_abs_diff(const Matrix& a, const Matrix& b);

/// exp(s) for skew-symmetric s by scaling and squaring with a 12-term Taylor
/// series. The result is a rotation.
Matrix skew_exp(const Matrix& s);

struct SymmetricEigen {
  Vector values;   // ascending
  Matrix vectors;  // column j is the eigenvector of values[j]
};

/// Cyclic Jacobi eigendecomposition of a symmetric matrix.
SymmetricEigen symmetric_eigen(const Matrix& m);

/// m^p for symmetric positive definite m (e.g. p = -0.5 for the inverse root).
Matrix spd_power(const Matrix& m, double p);

}  // namespace gcp
