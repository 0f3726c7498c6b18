// SPDX-License-Identifier: Apache-2.0
#include "mona/orthogonalize.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "mona/svd.hpp"

namespace mona {

void NsConfig::validate() const {
  if (steps < 1) throw std::invalid_argument("NsConfig.steps must be >= 1");
  if (!(epsilon > 0.0)) throw std::invalid_argument("NsConfig.epsilon must be > 0");
  if (!std::isfinite(coeff_a) || !std::isfinite(coeff_b) || !std::isfinite(coeff_c)) {
    throw std::invalid_argument("NsConfig coefficients must be finite");
  }
}

namespace {

// Iterates on a wide (rows <= cols) normalized matrix in place.
void iterate_wide(Matrix& x, const NsConfig& cfg) {
  for (int t = 0; t < cfg.steps; ++t) {
    Matrix a = gram(x);
    // a is symmetric, so a * a == a * a^T.
    const Matrix a2 = gram(a);
    for (std::size_t i = 0; i < a.size(); ++i) a[i] = cfg.coeff_b * a[i] + cfg.coeff_c * a2[i];
    const Matrix bx = matmul(a, x);
    for (std::size_t i = 0; i < x.size(); ++i) x[i] = cfg.coeff_a * x[i] + bx[i];
  }
}

}  // namespace

NsResult newton_schulz(const Matrix& m, const NsConfig& cfg) {
  if (m.empty()) throw DimensionError("newton_schulz: empty input");
  const double norm = frobenius_norm(m);
  if (!(norm >= cfg.epsilon)) {
    return NsResult{Matrix(m.rows(), m.cols()), true};
  }

  const bool tall = m.rows() > m.cols();
  Matrix x = tall ? transpose(m) : m;
  const double inv = 1.0 / norm;
  x *= inv;
  iterate_wide(x, cfg);
  return NsResult{tall ? transpose(x) : std::move(x), false};
}

NsReport ns_diagnostics(const Matrix& m, const NsConfig& cfg) {
  NsResult ns = newton_schulz(m, cfg);
  NsReport report;
  report.degenerate = ns.degenerate;

  const SvdResult out_svd = svd_oracle(ns.output);
  const SvdResult in_svd = svd_oracle(m);

  const double smax_in = in_svd.sigma.empty() ? 0.0 : in_svd.sigma.front();
  const double rank_tol = smax_in * 1e-10;
  for (double s : in_svd.sigma) {
    if (s > rank_tol && s > 0.0) ++report.rank;
  }

  if (report.rank > 0) {
    // Singular values of O on the input's rank subspace are ||O v_i||.
    report.sv_min = out_svd.sigma.front();
    report.sv_max = 0.0;
    double err_sq = 0.0;
    double min_cos = 1.0;
    double max_angle = 0.0;
    // Angle between vector w and unit vector e, via atan2 so small angles
    // keep full relative precision.
    auto angle_to = [](const std::vector<double>& w, auto unit_at) {
      double dot = 0.0;
      for (std::size_t k = 0; k < w.size(); ++k) dot += w[k] * unit_at(k);
      double perp = 0.0;
      for (std::size_t k = 0; k < w.size(); ++k) {
        const double d = w[k] - dot * unit_at(k);
        perp += d * d;
      }
      return std::atan2(std::sqrt(perp), dot);
    };
    const std::size_t m_rows = m.rows();
    const std::size_t n_cols = m.cols();
    for (std::size_t i = 0; i < report.rank; ++i) {
      std::vector<double> ov(m_rows, 0.0);
      for (std::size_t r = 0; r < m_rows; ++r) {
        double s = 0.0;
        for (std::size_t c = 0; c < n_cols; ++c) s += ns.output(r, c) * in_svd.v(c, i);
        ov[r] = s;
      }
      std::vector<double> otu(n_cols, 0.0);
      for (std::size_t c = 0; c < n_cols; ++c) {
        double s = 0.0;
        for (std::size_t r = 0; r < m_rows; ++r) s += ns.output(r, c) * in_svd.u(r, i);
        otu[c] = s;
      }
      double ov_norm = 0.0;
      double ov_dot = 0.0;
      for (std::size_t r = 0; r < m_rows; ++r) {
        ov_norm += ov[r] * ov[r];
        ov_dot += ov[r] * in_svd.u(r, i);
      }
      double otu_norm = 0.0;
      double otu_dot = 0.0;
      for (std::size_t c = 0; c < n_cols; ++c) {
        otu_norm += otu[c] * otu[c];
        otu_dot += otu[c] * in_svd.v(c, i);
      }
      ov_norm = std::sqrt(ov_norm);
      otu_norm = std::sqrt(otu_norm);
      const double cos_left = ov_norm > 0.0 ? ov_dot / ov_norm : 0.0;
      const double cos_right = otu_norm > 0.0 ? otu_dot / otu_norm : 0.0;
      min_cos = std::min({min_cos, cos_left, cos_right});
      max_angle = std::max({max_angle, angle_to(ov, [&](std::size_t k) { return in_svd.u(k, i); }),
                            angle_to(otu, [&](std::size_t k) { return in_svd.v(k, i); })});
      report.sv_min = std::min(report.sv_min, ov_norm);
      report.sv_max = std::max(report.sv_max, ov_norm);
      err_sq += (ov_norm * ov_norm - 1.0) * (ov_norm * ov_norm - 1.0);
    }
    report.ns_error = std::sqrt(err_sq);
    report.min_alignment_cosine = min_cos;
    report.max_principal_angle = max_angle;
  }
  report.output = std::move(ns.output);
  return report;
}

}  // namespace mona
