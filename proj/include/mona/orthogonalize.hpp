// SPDX-License-Identifier: Apache-2.0
#pragma once

#include "mona/matrix.hpp"

namespace mona {

/// Quintic Newton-Schulz settings. The default coefficients do not converge to
/// exactly 1; they pull every normalized singular value in (0, 1] into a band
/// around 1 within a handful of steps.
struct NsConfig {
  int steps = 5;
  double coeff_a = 3.4445;
  double coeff_b = -4.7750;
  double coeff_c = 2.0315;
  double epsilon = 1e-12;

  void validate() const;
};

struct NsResult {
  Matrix output;
  /// Set when ||m||_F < epsilon; output is then all zeros.
  bool degenerate = false;
};

/// Approximate polar factor U V^T of m.
///
/// X0 = m / ||m||_F, then X <- a X + (b XX^T + c (XX^T)^2) X for cfg.steps
/// iterations. Tall inputs are transposed so the Gram products are formed at
/// the smaller dimension.
NsResult newton_schulz(const Matrix& m, const NsConfig& cfg = {});

struct NsReport {
  Matrix output;
  bool degenerate = false;
  double sv_min = 0.0;
  double sv_max = 0.0;
  /// ||O^T O - I_r||_F with O restricted to the input's rank-r singular
  /// subspace: sqrt(sum_i (s_i^2 - 1)^2) over the nonzero input directions.
  double ns_error = 0.0;
  /// Smallest cosine between O v_i and u_i (and O^T u_i and v_i) over the
  /// input's nonzero singular triples; 1 means perfectly preserved.
  double min_alignment_cosine = 1.0;
  /// Largest of those angles, in radians.
  double max_principal_angle = 0.0;
  std::size_t rank = 0;
};

/// Runs newton_schulz and measures its output against svd_oracle.
NsReport ns_diagnostics(const Matrix& m, const NsConfig& cfg = {});

}  // namespace mona
