// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <stdexcept>
#include <vector>

#include "mona/matrix.hpp"

namespace mona {

class ConvergenceError : public std::runtime_error {
 public:
  ConvergenceError(const std::string& what, double residual)
      : std::runtime_error(what), residual_(residual) {}
  double residual() const noexcept { return residual_; }

 private:
  double residual_;
};

/// Thin SVD a = u * diag(sigma) * v^T with r = min(rows, cols).
struct SvdResult {
  Matrix u;                    // rows x r, orthonormal columns
  std::vector<double> sigma;   // descending, non-negative
  Matrix v;                    // cols x r, orthonormal columns

  Matrix reconstruct() const;
};

/// One-sided Jacobi SVD for desk-scale matrices (both dimensions <= 512).
///
/// Used as an independent reference for the Newton-Schulz tests; never on an
/// optimizer path. Sign convention: the first entry of each u column with
/// magnitude above round-off is non-negative.
SvdResult svd_oracle(const Matrix& a);

}  // namespace mona
