// SPDX-License-Identifier: Apache-2.0
#include "mona/matrix.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <sstream>

namespace mona {

namespace {

constexpr std::size_t kTileRows = 4;
constexpr std::size_t kTileCols = 16;
constexpr std::size_t kDepthBlock = 256;

// C[i, jj:jj+16] += A[i, k0:k1] * Bpanel for four rows at once. The panel is
// B[k0:k1, jj:jj+16] packed contiguously. Accumulation runs over k in
// ascending order, which is the same per-entry order as the scalar edge path.
inline void micro_kernel(const double* a, std::size_t lda, const double* panel, std::size_t depth,
                         double* c, std::size_t ldc) {
  std::array<std::array<double, kTileCols>, kTileRows> acc;
  for (std::size_t r = 0; r < kTileRows; ++r) {
    for (std::size_t j = 0; j < kTileCols; ++j) acc[r][j] = c[r * ldc + j];
  }
  for (std::size_t k = 0; k < depth; ++k) {
    const double* b = panel + k * kTileCols;
    const double a0 = a[0 * lda + k];
    const double a1 = a[1 * lda + k];
    const double a2 = a[2 * lda + k];
    const double a3 = a[3 * lda + k];
    for (std::size_t j = 0; j < kTileCols; ++j) {
      acc[0][j] += a0 * b[j];
      acc[1][j] += a1 * b[j];
      acc[2][j] += a2 * b[j];
      acc[3][j] += a3 * b[j];
    }
  }
  for (std::size_t r = 0; r < kTileRows; ++r) {
    for (std::size_t j = 0; j < kTileCols; ++j) c[r * ldc + j] = acc[r][j];
  }
}

// C (m x n) += A (m x k) * B (k x n), all row-major. With upper_only, row
// tiles lying entirely below a column strip are skipped.
void gemm_accumulate(const double* a, const double* b, double* c, std::size_t m, std::size_t k,
                     std::size_t n, bool upper_only) {
  std::vector<double> panel(kDepthBlock * kTileCols);
  const std::size_t full_cols = n - n % kTileCols;
  const std::size_t full_rows = m - m % kTileRows;

  for (std::size_t k0 = 0; k0 < k; k0 += kDepthBlock) {
    const std::size_t k1 = std::min(k, k0 + kDepthBlock);
    const std::size_t depth = k1 - k0;

    for (std::size_t jj = 0; jj < full_cols; jj += kTileCols) {
      for (std::size_t kk = 0; kk < depth; ++kk) {
        std::copy_n(b + (k0 + kk) * n + jj, kTileCols, panel.data() + kk * kTileCols);
      }
      const std::size_t row_end = upper_only ? std::min(full_rows, jj + kTileCols) : full_rows;
      std::size_t i = 0;
      for (; i + kTileRows <= row_end; i += kTileRows) {
        micro_kernel(a + i * k + k0, k, panel.data(), depth, c + i * n + jj, n);
      }
      // Leftover rows, including the partial tile at the bottom edge.
      const std::size_t scalar_end = upper_only ? std::min(m, jj + kTileCols) : m;
      for (; i < scalar_end; ++i) {
        double* crow = c + i * n + jj;
        for (std::size_t kk = 0; kk < depth; ++kk) {
          const double av = a[i * k + k0 + kk];
          const double* brow = panel.data() + kk * kTileCols;
          for (std::size_t j = 0; j < kTileCols; ++j) crow[j] += av * brow[j];
        }
      }
    }

    // Right edge columns.
    if (full_cols < n) {
      for (std::size_t i = 0; i < m; ++i) {
        double* crow = c + i * n;
        for (std::size_t kk = k0; kk < k1; ++kk) {
          const double av = a[i * k + kk];
          const double* brow = b + kk * n;
          for (std::size_t j = full_cols; j < n; ++j) crow[j] += av * brow[j];
        }
      }
    }
  }
}

}  // namespace

Matrix::Matrix(std::size_t rows, std::size_t cols, double fill)
    : rows_(rows), cols_(cols), data_(rows * cols, fill) {}

Matrix::Matrix(std::size_t rows, std::size_t cols, std::vector<double> data)
    : rows_(rows), cols_(cols), data_(std::move(data)) {
  if (data_.size() != rows * cols) {
    throw DimensionError("matrix data length " + std::to_string(data_.size()) +
                         " does not match shape " + shape_string());
  }
}

Matrix Matrix::identity(std::size_t n) {
  Matrix m(n, n);
  for (std::size_t i = 0; i < n; ++i) m(i, i) = 1.0;
  return m;
}

Matrix Matrix::diagonal(std::span<const double> values) {
  Matrix m(values.size(), values.size());
  for (std::size_t i = 0; i < values.size(); ++i) m(i, i) = values[i];
  return m;
}

Matrix Matrix::from_rows(std::initializer_list<std::initializer_list<double>> rows) {
  const std::size_t r = rows.size();
  const std::size_t c = r == 0 ? 0 : rows.begin()->size();
  std::vector<double> data;
  data.reserve(r * c);
  for (const auto& row : rows) {
    if (row.size() != c) throw DimensionError("ragged row list");
    data.insert(data.end(), row.begin(), row.end());
  }
  return Matrix(r, c, std::move(data));
}

void Matrix::fill(double value) { std::fill(data_.begin(), data_.end(), value); }

std::string Matrix::shape_string() const {
  return std::to_string(rows_) + "x" + std::to_string(cols_);
}

Matrix& Matrix::operator+=(const Matrix& other) {
  require_same_shape(*this, other, "matrix addition");
  for (std::size_t i = 0; i < data_.size(); ++i) data_[i] += other.data_[i];
  return *this;
}

Matrix& Matrix::operator-=(const Matrix& other) {
  require_same_shape(*this, other, "matrix subtraction");
  for (std::size_t i = 0; i < data_.size(); ++i) data_[i] -= other.data_[i];
  return *this;
}

Matrix& Matrix::operator*=(double s) noexcept {
  for (double& v : data_) v *= s;
  return *this;
}

Matrix operator+(Matrix a, const Matrix& b) { return a += b; }
Matrix operator-(Matrix a, const Matrix& b) { return a -= b; }
Matrix operator*(Matrix a, double s) { return a *= s; }
Matrix operator*(double s, Matrix a) { return a *= s; }

void require_same_shape(const Matrix& a, const Matrix& b, const char* what) {
  if (!a.same_shape(b)) {
    throw DimensionError(std::string(what) + ": shape mismatch " + a.shape_string() + " vs " +
                         b.shape_string());
  }
}

Matrix matmul(const Matrix& a, const Matrix& b) {
  if (a.cols() != b.rows()) {
    throw DimensionError("matmul: inner dimensions differ (" + a.shape_string() + " * " +
                         b.shape_string() + ")");
  }
  Matrix c(a.rows(), b.cols());
  if (a.rows() == 0 || b.cols() == 0 || a.cols() == 0) return c;
  gemm_accumulate(a.data(), b.data(), c.data(), a.rows(), a.cols(), b.cols(), false);
  return c;
}

Matrix gram(const Matrix& a) {
  const std::size_t m = a.rows();
  Matrix c(m, m);
  if (m == 0 || a.cols() == 0) return c;
  const Matrix at = transpose(a);
  gemm_accumulate(a.data(), at.data(), c.data(), m, a.cols(), m, true);
  // Entry (i, j) and (j, i) are the same sum of commuted products, so
  // mirroring the upper triangle reproduces the full product bit for bit.
  for (std::size_t i = 1; i < m; ++i) {
    for (std::size_t j = 0; j < i; ++j) c(i, j) = c(j, i);
  }
  return c;
}

Matrix transpose(const Matrix& a) {
  Matrix t(a.cols(), a.rows());
  constexpr std::size_t kBlock = 32;
  for (std::size_t i0 = 0; i0 < a.rows(); i0 += kBlock) {
    for (std::size_t j0 = 0; j0 < a.cols(); j0 += kBlock) {
      const std::size_t i1 = std::min(a.rows(), i0 + kBlock);
      const std::size_t j1 = std::min(a.cols(), j0 + kBlock);
      for (std::size_t i = i0; i < i1; ++i) {
        for (std::size_t j = j0; j < j1; ++j) t(j, i) = a(i, j);
      }
    }
  }
  return t;
}

double squared_norm(const Matrix& a) {
  double sum = 0.0;
  for (double v : a.values()) sum += v * v;
  return sum;
}

double frobenius_norm(const Matrix& a) { return std::sqrt(squared_norm(a)); }

double inner(const Matrix& a, const Matrix& b) {
  require_same_shape(a, b, "inner product");
  double sum = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) sum += a[i] * b[i];
  return sum;
}

bool all_finite(const Matrix& a) {
  return std::all_of(a.values().begin(), a.values().end(),
                     [](double v) { return std::isfinite(v); });
}

double max_abs_diff(const Matrix& a, const Matrix& b) {
  require_same_shape(a, b, "max_abs_diff");
  double worst = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) worst = std::max(worst, std::abs(a[i] - b[i]));
  return worst;
}

Matrix random_normal(std::size_t rows, std::size_t cols, std::mt19937_64& rng) {
  std::normal_distribution<double> dist(0.0, 1.0);
  Matrix m(rows, cols);
  for (double& v : m.values()) v = dist(rng);
  return m;
}

Matrix random_uniform(std::size_t rows, std::size_t cols, double lo, double hi,
                      std::mt19937_64& rng) {
  std::uniform_real_distribution<double> dist(lo, hi);
  Matrix m(rows, cols);
  for (double& v : m.values()) v = dist(rng);
  return m;
}

Matrix random_orthonormal_columns(std::size_t m, std::size_t r, std::mt19937_64& rng) {
  if (r > m) throw DimensionError("random_orthonormal_columns: r > m");
  Matrix q = random_normal(m, r, rng);
  // Modified Gram-Schmidt, two passes for orthogonality at machine precision.
  for (int pass = 0; pass < 2; ++pass) {
    for (std::size_t j = 0; j < r; ++j) {
      for (std::size_t p = 0; p < j; ++p) {
        double dot = 0.0;
        for (std::size_t i = 0; i < m; ++i) dot += q(i, p) * q(i, j);
        for (std::size_t i = 0; i < m; ++i) q(i, j) -= dot * q(i, p);
      }
      double norm = 0.0;
      for (std::size_t i = 0; i < m; ++i) norm += q(i, j) * q(i, j);
      norm = std::sqrt(norm);
      for (std::size_t i = 0; i < m; ++i) q(i, j) /= norm;
    }
  }
  return q;
}

Matrix random_orthogonal(std::size_t n, std::mt19937_64& rng) {
  return random_orthonormal_columns(n, n, rng);
}

}  // namespace mona
