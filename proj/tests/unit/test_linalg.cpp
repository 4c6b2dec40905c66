#include <doctest.h>

#include <cmath>
#include <numbers>
#include <random>

#include "gcp/linalg.hpp"
#include "oracles.hpp"

using namespace gcp;

namespace {

void check_error(ErrorCode expected, auto&& fn) {
  try {
    fn();
    FAIL("expected an error");
  } catch (const Error& e) {
    CHECK(e.code() == expected);
  }
}

}  // namespace

TEST_SUITE("linalg") {

TEST_CASE("cholesky of a 2x2 matrix") {
  const auto l = cholesky(Matrix::from_rows({{4, 2}, {2, 3}}));
  CHECK(l(0, 0) == doctest::Approx(2.0));
  CHECK(l(1, 0) == doctest::Approx(1.0));
  CHECK(l(1, 1) == doctest::Approx(std::sqrt(2.0)));
}

TEST_CASE("cholesky rejects indefinite and asymmetric input") {
  check_error(ErrorCode::NotPositiveDefinite, [] { cholesky(Matrix::from_rows({{1, 2}, {2, 1}})); });
  check_error(ErrorCode::DomainError, [] { cholesky(Matrix::from_rows({{2, 1}, {0, 2}})); });
  check_error(ErrorCode::ShapeMismatch, [] { cholesky(Matrix(2, 3)); });
}

TEST_CASE("cholesky identity is identity") {
  const auto l = cholesky(Matrix::identity(5));
  CHECK(max_abs_diff(l.to_dense(), Matrix::identity(5)) == 0.0);
}

TEST_CASE("cholesky reconstructs random SPD matrices") {
  std::mt19937_64 rng(1);
  for (int t = 0; t < 200; ++t) {
    const std::size_t n = 1 + t % 8;
    const Matrix m = oracle::random_spd(n, rng);
    const auto l = cholesky(m);
    const Matrix ld = l.to_dense();
    CHECK(oracle::max_abs(oracle::product(ld, oracle::transposed(ld)), m) < 1e-9 * (1.0 + frobenius_norm(m)));
    for (std::size_t i = 0; i < n; ++i) CHECK(l(i, i) > 0.0);
  }
}

TEST_CASE("triangular solves") {
  LowerTriangular l(2, {2.0, 1.0, std::sqrt(2.0)});
  const Vector b{2.0, 1.0 + std::sqrt(2.0)};
  const auto x = tri_solve(l, b);
  CHECK(x[0] == doctest::Approx(1.0));
  CHECK(x[1] == doctest::Approx(1.0));

  CHECK(tri_solve(LowerTriangular::identity(3), Vector{1, 2, 3}) == Vector{1, 2, 3});

  // L^T x = b against the dense oracle
  const auto xt = tri_solve(l, b, Transpose::Yes);
  const Matrix lt = oracle::transposed(l.to_dense());
  CHECK(lt(0, 0) * xt[0] + lt(0, 1) * xt[1] == doctest::Approx(b[0]));
  CHECK(lt(1, 1) * xt[1] == doctest::Approx(b[1]));

  check_error(ErrorCode::SingularTriangular, [] {
    LowerTriangular z(2, {1.0, 0.0, 0.0});
    tri_solve(z, Vector{1, 1});
  });
}

TEST_CASE("spd_inverse of a diagonal matrix") {
  const auto inv = spd_inverse(cholesky(Matrix::from_rows({{4, 0}, {0, 1}})));
  CHECK(inv(0, 0) == doctest::Approx(0.25));
  CHECK(inv(1, 1) == doctest::Approx(1.0));
  CHECK(inv(0, 1) == 0.0);
}

TEST_CASE("spd_inverse on 1000 random SPD matrices") {
  std::mt19937_64 rng(2);
  double worst = 0.0;
  for (int t = 0; t < 1000; ++t) {
    const std::size_t n = 1 + t % 6;
    const Matrix m = oracle::random_spd(n, rng);
    const Matrix inv = spd_inverse(cholesky(m));
    worst = std::max(worst, oracle::max_abs(oracle::product(m, inv), Matrix::identity(n)));
  }
  CHECK(worst < 1e-7);
}

TEST_CASE("spd_inverse agrees with Gauss-Jordan") {
  std::mt19937_64 rng(3);
  for (int t = 0; t < 100; ++t) {
    const Matrix m = oracle::random_spd(4, rng, 0.5);
    const Matrix a = spd_inverse(cholesky(m));
    const Matrix b = oracle::inverse(m);
    CHECK(oracle::max_abs(a, b) < 1e-8 * (1.0 + frobenius_norm(b)));
  }
}

TEST_CASE("logdet") {
  CHECK(logdet(cholesky(Matrix::from_rows({{2, 0}, {0, 8}}))) == doctest::Approx(std::log(16.0)));
  CHECK(logdet(cholesky(Matrix::from_rows({{std::numbers::e, 0}, {0, std::numbers::e}}))) ==
        doctest::Approx(2.0));
  CHECK(logdet(cholesky(Matrix::identity(6))) == 0.0);
}

TEST_CASE("logdet matches Jacobi eigenvalues") {
  std::mt19937_64 rng(4);
  for (int t = 0; t < 80; ++t) {
    const std::size_t n = 1 + t % 8;
    const Matrix m = oracle::random_spd(n, rng, 0.1);
    double expected = 0.0;
    for (double ev : oracle::jacobi_eigenvalues(m)) expected += std::log(ev);
    CHECK(std::abs(logdet(cholesky(m)) - expected) < 1e-6);
  }
}

TEST_CASE("lower_inverse") {
  std::mt19937_64 rng(5);
  const auto l = cholesky(oracle::random_spd(5, rng));
  const Matrix prod = oracle::product(l.to_dense(), lower_inverse(l).to_dense());
  CHECK(oracle::max_abs(prod, Matrix::identity(5)) < 1e-9);
}

TEST_CASE("products") {
  const Matrix a = Matrix::from_rows({{1, 2}, {3, 4}});
  const Matrix b = Matrix::from_rows({{0, 1}, {1, 0}});
  CHECK(max_abs_diff(matmul(a, b), Matrix::from_rows({{2, 1}, {4, 3}})) == 0.0);
  CHECK(max_abs_diff(transpose(a), Matrix::from_rows({{1, 3}, {2, 4}})) == 0.0);
  CHECK(matvec(a, Vector{1, 1}) == Vector{3, 7});

  LowerTriangular l(2, {1.0, 2.0, 3.0});
  CHECK(lower_times(l, std::span<const double>(Vector{1, 1})) == Vector{1, 5});
  CHECK(lower_transpose_times(l, std::span<const double>(Vector{1, 1})) == Vector{3, 3});
  CHECK(max_abs_diff(gram_lower(l), Matrix::from_rows({{1, 2}, {2, 13}})) == 0.0);
  check_error(ErrorCode::ShapeMismatch, [] { matmul(Matrix(2, 3), Matrix(2, 3)); });
}

TEST_CASE("skew_exp of a quarter rotation") {
  const double h = std::numbers::pi / 2.0;
  const Matrix r = skew_exp(Matrix::from_rows({{0, -h}, {h, 0}}));
  CHECK(max_abs_diff(r, Matrix::from_rows({{0, -1}, {1, 0}})) < 1e-12);
  CHECK(max_abs_diff(skew_exp(Matrix(3, 3)), Matrix::identity(3)) == 0.0);
}

TEST_CASE("skew_exp yields rotations") {
  std::mt19937_64 rng(6);
  for (int t = 0; t < 100; ++t) {
    const std::size_t n = 2 + t % 4;
    Matrix s = oracle::random_matrix(n, n, rng, 1.5);
    for (std::size_t i = 0; i < n; ++i) {
      s(i, i) = 0.0;
      for (std::size_t j = 0; j < i; ++j) s(j, i) = -s(i, j);
    }
    const Matrix r = skew_exp(s);
    CHECK(oracle::max_abs(oracle::product(oracle::transposed(r), r), Matrix::identity(n)) < 1e-7);
    CHECK(std::abs(oracle::determinant(r) - 1.0) < 1e-7);
  }
}

TEST_CASE("skew_exp rejects non-skew input") {
  check_error(ErrorCode::NotSkew, [] { skew_exp(Matrix::from_rows({{1, 0}, {0, 0}})); });
}

TEST_CASE("symmetric_eigen and spd_power") {
  std::mt19937_64 rng(7);
  const Matrix m = oracle::random_spd(4, rng, 0.5);
  const auto eig = symmetric_eigen(m);
  auto expected = oracle::jacobi_eigenvalues(m);
  std::sort(expected.begin(), expected.end());
  for (std::size_t i = 0; i < 4; ++i) CHECK(eig.values[i] == doctest::Approx(expected[i]).epsilon(1e-10));
  const Matrix root = spd_power(m, 0.5);
  CHECK(oracle::max_abs(oracle::product(root, root), m) < 1e-9);
  const Matrix inv_root = spd_power(m, -0.5);
  CHECK(oracle::max_abs(oracle::product(oracle::product(inv_root, m), inv_root), Matrix::identity(4)) < 1e-9);
}

TEST_CASE("submatrix and subvector") {
  const Matrix m = Matrix::from_rows({{1, 2, 3}, {4, 5, 6}, {7, 8, 9}});
  const Index idx{0, 2};
  CHECK(max_abs_diff(submatrix(m, idx), Matrix::from_rows({{1, 3}, {7, 9}})) == 0.0);
  CHECK(max_abs_diff(submatrix(m, Index{1}, Index{0, 1, 2}), Matrix::from_rows({{4, 5, 6}})) == 0.0);
  CHECK(subvector(Vector{5, 6, 7}, idx) == Vector{5, 7});
  check_error(ErrorCode::IndexOutOfRange, [&] { submatrix(m, Index{2, 0}); });
  check_error(ErrorCode::IndexOutOfRange, [&] { submatrix(m, Index{0, 3}); });
  check_error(ErrorCode::EmptyIndexSet, [&] { submatrix(m, Index{}); });
  CHECK(complement(idx, 3) == Index{1});
  CHECK(complement(Index{0, 1, 2}, 3).empty());
}

TEST_CASE("matrix construction checks") {
  check_error(ErrorCode::ShapeMismatch, [] { Matrix(2, 2, std::vector<double>{1, 2, 3}); });
  check_error(ErrorCode::ShapeMismatch, [] { LowerTriangular(3, std::vector<double>{1, 2}); });
  CHECK(LowerTriangular(3).packed().size() == 6);
  const LowerTriangular l(2, {1.0, 2.0, 3.0});
  CHECK(l.at(0, 1) == 0.0);
  CHECK(l.at(1, 0) == 2.0);
}

}  // TEST_SUITE
