// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <cstdint>
#include <initializer_list>
#include <random>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace mona {

/// Thrown when operand shapes do not conform.
class DimensionError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Dense row-major matrix of doubles.
///
/// Vectors are represented as n x 1 matrices. A default-constructed matrix is
/// empty (0 x 0) and is used as the "not yet allocated" marker for optimizer
/// state buffers.
class Matrix {
 public:
  Matrix() = default;
  Matrix(std::size_t rows, std::size_t cols, double fill = 0.0);
  Matrix(std::size_t rows, std::size_t cols, std::vector<double> data);

  static Matrix identity(std::size_t n);
  static Matrix diagonal(std::span<const double> values);
  static Matrix from_rows(std::initializer_list<std::initializer_list<double>> rows);

  std::size_t rows() const noexcept { return rows_; }
  std::size_t cols() const noexcept { return cols_; }
  std::size_t size() const noexcept { return data_.size(); }
  bool empty() const noexcept { return data_.empty(); }
  bool same_shape(const Matrix& other) const noexcept {
    return rows_ == other.rows_ && cols_ == other.cols_;
  }

  double& operator()(std::size_t r, std::size_t c) noexcept { return data_[r * cols_ + c]; }
  double operator()(std::size_t r, std::size_t c) const noexcept { return data_[r * cols_ + c]; }
  double& operator[](std::size_t i) noexcept { return data_[i]; }
  double operator[](std::size_t i) const noexcept { return data_[i]; }

  std::span<double> values() noexcept { return data_; }
  std::span<const double> values() const noexcept { return data_; }
  double* data() noexcept { return data_.data(); }
  const double* data() const noexcept { return data_.data(); }

  void fill(double value);
  std::string shape_string() const;

  /// Bitwise equality of shape and every entry.
  friend bool operator==(const Matrix& a, const Matrix& b) = default;

  Matrix& operator+=(const Matrix& other);
  Matrix& operator-=(const Matrix& other);
  Matrix& operator*=(double s) noexcept;

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<double> data_;
};

Matrix operator+(Matrix a, const Matrix& b);
Matrix operator-(Matrix a, const Matrix& b);
Matrix operator*(Matrix a, double s);
Matrix operator*(double s, Matrix a);

/// Matrix product. Every output entry is accumulated over the inner index in
/// ascending order, so results do not depend on blocking or thread count.
Matrix matmul(const Matrix& a, const Matrix& b);

/// a * a^T, exploiting symmetry. Same accumulation order as matmul.
Matrix gram(const Matrix& a);

Matrix transpose(const Matrix& a);

double frobenius_norm(const Matrix& a);
double squared_norm(const Matrix& a);
/// Frobenius inner product <a, b> = sum_ij a_ij b_ij.
double inner(const Matrix& a, const Matrix& b);
bool all_finite(const Matrix& a);
double max_abs_diff(const Matrix& a, const Matrix& b);

void require_same_shape(const Matrix& a, const Matrix& b, const char* what);

/// Entries drawn i.i.d. from N(0, 1).
Matrix random_normal(std::size_t rows, std::size_t cols, std::mt19937_64& rng);
Matrix random_uniform(std::size_t rows, std::size_t cols, double lo, double hi,
                      std::mt19937_64& rng);
/// Haar-ish random n x n orthogonal matrix (Gram-Schmidt on a Gaussian draw).
Matrix random_orthogonal(std::size_t n, std::mt19937_64& rng);
/// m x r matrix with orthonormal columns, r <= m.
Matrix random_orthonormal_columns(std::size_t m, std::size_t r, std::mt19937_64& rng);

}  // namespace mona
