// SPDX-License-Identifier: Apache-2.0
#include "mona/svd.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

namespace mona {

namespace {

constexpr std::size_t kMaxDim = 512;
constexpr int kMaxSweeps = 80;

double column_dot(const Matrix& a, std::size_t p, std::size_t q) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.rows(); ++i) s += a(i, p) * a(i, q);
  return s;
}

void rotate_columns(Matrix& a, std::size_t p, std::size_t q, double c, double s) {
  for (std::size_t i = 0; i < a.rows(); ++i) {
    const double x = a(i, p);
    const double y = a(i, q);
    a(i, p) = c * x - s * y;
    a(i, q) = s * x + c * y;
  }
}

// Replaces column j of u with a unit vector orthogonal to every column in
// `fixed`.
void complete_column(Matrix& u, std::size_t j, const std::vector<std::size_t>& fixed) {
  const std::size_t m = u.rows();
  for (std::size_t e = 0; e < m; ++e) {
    std::vector<double> x(m, 0.0);
    x[e] = 1.0;
    for (int pass = 0; pass < 2; ++pass) {
      for (std::size_t p : fixed) {
        double dot = 0.0;
        for (std::size_t i = 0; i < m; ++i) dot += u(i, p) * x[i];
        for (std::size_t i = 0; i < m; ++i) x[i] -= dot * u(i, p);
      }
    }
    double norm = 0.0;
    for (double v : x) norm += v * v;
    norm = std::sqrt(norm);
    if (norm > 0.5) {
      for (std::size_t i = 0; i < m; ++i) u(i, j) = x[i] / norm;
      return;
    }
  }
}

// Requires a.rows() >= a.cols().
SvdResult jacobi_tall(const Matrix& a) {
  const std::size_t m = a.rows();
  const std::size_t n = a.cols();
  Matrix u = a;
  Matrix v = Matrix::identity(n);
  const double eps = std::numeric_limits<double>::epsilon();

  // Columns at round-off level relative to the whole matrix are treated as
  // null directions and never rotated.
  const double floor = eps * eps * squared_norm(a);

  bool converged = n < 2;
  double worst = 0.0;
  for (int sweep = 0; sweep < kMaxSweeps && !converged; ++sweep) {
    converged = true;
    worst = 0.0;
    for (std::size_t p = 0; p + 1 < n; ++p) {
      for (std::size_t q = p + 1; q < n; ++q) {
        const double alpha = column_dot(u, p, p);
        const double beta = column_dot(u, q, q);
        const double gamma = column_dot(u, p, q);
        if (alpha <= floor || beta <= floor) continue;
        const double off = std::abs(gamma) / std::sqrt(alpha * beta);
        worst = std::max(worst, off);
        if (off <= eps * static_cast<double>(m)) continue;
        converged = false;
        const double zeta = (beta - alpha) / (2.0 * gamma);
        const double t = std::copysign(1.0, zeta) / (std::abs(zeta) + std::sqrt(1.0 + zeta * zeta));
        const double c = 1.0 / std::sqrt(1.0 + t * t);
        const double s = c * t;
        rotate_columns(u, p, q, c, s);
        rotate_columns(v, p, q, c, s);
      }
    }
  }
  if (!converged) {
    throw ConvergenceError("svd_oracle: Jacobi sweeps did not converge (max off-diagonal " +
                               std::to_string(worst) + ")",
                           worst);
  }

  std::vector<double> sigma(n);
  for (std::size_t j = 0; j < n; ++j) sigma[j] = std::sqrt(column_dot(u, j, j));

  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t x, std::size_t y) { return sigma[x] > sigma[y]; });

  SvdResult out{Matrix(m, n), std::vector<double>(n), Matrix(n, n)};
  for (std::size_t j = 0; j < n; ++j) {
    const std::size_t src = order[j];
    out.sigma[j] = sigma[src];
    for (std::size_t i = 0; i < m; ++i) out.u(i, j) = u(i, src);
    for (std::size_t i = 0; i < n; ++i) out.v(i, j) = v(i, src);
  }

  const double smax = n > 0 ? out.sigma[0] : 0.0;
  const double tiny = smax * eps * static_cast<double>(std::max(m, n)) * 4.0;
  std::vector<std::size_t> fixed;
  for (std::size_t j = 0; j < n; ++j) {
    if (out.sigma[j] > tiny && out.sigma[j] > 0.0) {
      for (std::size_t i = 0; i < m; ++i) out.u(i, j) /= out.sigma[j];
      fixed.push_back(j);
    }
  }
  // Null directions carry no information in u; pick any orthonormal completion.
  for (std::size_t j = 0; j < n; ++j) {
    if (std::find(fixed.begin(), fixed.end(), j) == fixed.end()) {
      complete_column(out.u, j, fixed);
      fixed.push_back(j);
    }
  }
  return out;
}

void apply_sign_convention(SvdResult& s) {
  const std::size_t r = s.sigma.size();
  for (std::size_t j = 0; j < r; ++j) {
    for (std::size_t i = 0; i < s.u.rows(); ++i) {
      const double x = s.u(i, j);
      if (std::abs(x) > 1e-12) {
        if (x < 0.0) {
          for (std::size_t k = 0; k < s.u.rows(); ++k) s.u(k, j) = -s.u(k, j);
          for (std::size_t k = 0; k < s.v.rows(); ++k) s.v(k, j) = -s.v(k, j);
        }
        break;
      }
    }
  }
}

}  // namespace

Matrix SvdResult::reconstruct() const {
  Matrix scaled = u;
  for (std::size_t i = 0; i < scaled.rows(); ++i) {
    for (std::size_t j = 0; j < scaled.cols(); ++j) scaled(i, j) *= sigma[j];
  }
  return matmul(scaled, transpose(v));
}

SvdResult svd_oracle(const Matrix& a) {
  if (a.rows() > kMaxDim || a.cols() > kMaxDim) {
    throw DimensionError("svd_oracle: " + a.shape_string() + " exceeds the 512 x 512 oracle limit");
  }
  if (a.empty()) throw DimensionError("svd_oracle: empty matrix");

  SvdResult out;
  if (a.rows() >= a.cols()) {
    out = jacobi_tall(a);
  } else {
    SvdResult t = jacobi_tall(transpose(a));
    out = SvdResult{std::move(t.v), std::move(t.sigma), std::move(t.u)};
  }
  apply_sign_convention(out);
  return out;
}

}  // namespace mona
