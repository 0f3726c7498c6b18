// SPDX-License-Identifier: Apache-2.0
#pragma once

// Test-side reference evaluators. They are written as plain loops over
// nested vectors and share no code with the library, so agreement is
// evidence rather than tautology.

#include <cmath>
#include <cstddef>
#include <utility>
#include <vector>

#include "mona/matrix.hpp"

namespace oracle {

using Grid = std::vector<std::vector<double>>;

inline Grid to_grid(const mona::Matrix& m) {
  Grid g(m.rows(), std::vector<double>(m.cols()));
  for (std::size_t i = 0; i < m.rows(); ++i) {
    for (std::size_t j = 0; j < m.cols(); ++j) g[i][j] = m(i, j);
  }
  return g;
}

inline mona::Matrix to_matrix(const Grid& g) {
  const std::size_t rows = g.size();
  const std::size_t cols = rows ? g[0].size() : 0;
  mona::Matrix m(rows, cols);
  for (std::size_t i = 0; i < rows; ++i) {
    for (std::size_t j = 0; j < cols; ++j) m(i, j) = g[i][j];
  }
  return m;
}

inline Grid mul(const Grid& a, const Grid& b) {
  const std::size_t n = a.size(), k = b.size(), m = k ? b[0].size() : 0;
  Grid c(n, std::vector<double>(m, 0.0));
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < m; ++j) {
      long double s = 0.0L;
      for (std::size_t p = 0; p < k; ++p) s += static_cast<long double>(a[i][p]) * b[p][j];
      c[i][j] = static_cast<double>(s);
    }
  }
  return c;
}

inline Grid transpose(const Grid& a) {
  const std::size_t r = a.size(), c = r ? a[0].size() : 0;
  Grid t(c, std::vector<double>(r));
  for (std::size_t i = 0; i < r; ++i) {
    for (std::size_t j = 0; j < c; ++j) t[j][i] = a[i][j];
  }
  return t;
}

inline double fro(const Grid& a) {
  long double s = 0.0L;
  for (const auto& row : a) {
    for (double v : row) s += static_cast<long double>(v) * v;
  }
  return std::sqrt(static_cast<double>(s));
}

/// Quintic Newton-Schulz, X <- aX + b(XX^T)X + c(XX^T)^2 X, on the original
/// orientation (no transpose trick).
inline mona::Matrix reference_ns(const mona::Matrix& m, int steps = 5, double a = 3.4445,
                                  double b = -4.7750, double c = 2.0315) {
  Grid x = to_grid(m);
  const double norm = fro(x);
  if (norm < 1e-12) return mona::Matrix(m.rows(), m.cols());
  for (auto& row : x) {
    for (double& v : row) v /= norm;
  }
  for (int t = 0; t < steps; ++t) {
    const Grid g = mul(x, transpose(x));
    const Grid gx = mul(g, x);
    const Grid ggx = mul(g, gx);
    for (std::size_t i = 0; i < x.size(); ++i) {
      for (std::size_t j = 0; j < x[i].size(); ++j) x[i][j] = a * x[i][j] + b * gx[i][j] + c * ggx[i][j];
    }
  }
  return to_matrix(x);
}

/// Scalar form of the same polynomial: a diagonal input keeps its
/// normalized entries evolving independently.
inline double ns_scalar(double x, int steps = 5, double a = 3.4445, double b = -4.7750,
                        double c = 2.0315) {
  for (int t = 0; t < steps; ++t) {
    const double x2 = x * x;
    x = a * x + b * x2 * x + c * x2 * x2 * x;
  }
  return x;
}

/// Straight-line MONA / Muon reference on one matrix parameter.
struct MonaReference {
  double lr, mu, beta, alpha, decay, gamma;
  bool accelerate = true;
  mona::Matrix w, m, a, prev;

  void step(const mona::Matrix& g) {
    if (m.empty()) {
      m = mona::Matrix(w.rows(), w.cols());
      a = m;
      prev = m;
    }
    mona::Matrix gt = g;
    if (accelerate) {
      for (std::size_t i = 0; i < g.size(); ++i) {
        a[i] = beta * a[i] + (1.0 - beta) * (g[i] - prev[i]);
        gt[i] = g[i] + alpha * a[i];
      }
      prev = g;
    }
    for (std::size_t i = 0; i < g.size(); ++i) m[i] = mu * m[i] + gt[i];
    const mona::Matrix o = reference_ns(m);
    for (std::size_t i = 0; i < w.size(); ++i) w[i] -= lr * (gamma * o[i] + decay * w[i]);
  }
};

/// Straight-line AdamW (optionally fed G + alpha A).
struct AdamReference {
  AdamReference(mona::Matrix w0, double lr_, double b1_, double b2_, double eps_, double wd_,
                bool accelerate_ = false, double beta_ = 0.99, double alpha_ = 0.0)
      : lr(lr_), b1(b1_), b2(b2_), eps(eps_), wd(wd_), accelerate(accelerate_), beta(beta_),
        alpha(alpha_), w(std::move(w0)) {}

  double lr, b1, b2, eps, wd;
  bool accelerate;
  double beta, alpha;
  mona::Matrix w, m, v, a, prev;
  int t = 0;

  void step(const mona::Matrix& g) {
    if (m.empty()) {
      m = mona::Matrix(w.rows(), w.cols());
      v = m;
      a = m;
      prev = m;
    }
    ++t;
    mona::Matrix u = g;
    if (accelerate) {
      for (std::size_t i = 0; i < g.size(); ++i) {
        a[i] = beta * a[i] + (1.0 - beta) * (g[i] - prev[i]);
        u[i] = g[i] + alpha * a[i];
      }
      prev = g;
    }
    for (std::size_t i = 0; i < w.size(); ++i) {
      m[i] = b1 * m[i] + (1.0 - b1) * u[i];
      v[i] = b2 * v[i] + (1.0 - b2) * u[i] * u[i];
      const double mh = m[i] / (1.0 - std::pow(b1, t));
      const double vh = v[i] / (1.0 - std::pow(b2, t));
      w[i] = w[i] * (1.0 - lr * wd) - lr * mh / (std::sqrt(vh) + eps);
    }
  }
};

/// Central differences of a scalar function of a matrix.
template <typename F>
mona::Matrix central_difference(const mona::Matrix& w, F&& f, double h = 1e-5) {
  mona::Matrix g(w.rows(), w.cols());
  mona::Matrix p = w;
  for (std::size_t i = 0; i < w.size(); ++i) {
    const double keep = p[i];
    p[i] = keep + h;
    const double up = f(p);
    p[i] = keep - h;
    const double down = f(p);
    p[i] = keep;
    g[i] = (up - down) / (2.0 * h);
  }
  return g;
}

}  // namespace oracle
