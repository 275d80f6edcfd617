#pragma once

#include <vector>

#include "illama/tensor.hpp"

namespace illama {

struct SvdOptions {
  int max_sweeps = 100;
  /// Off-diagonal threshold, relative to the squared Frobenius norm.
  double tolerance = 1e-12;
};

/// Singular values of a 2-D matrix by one-sided (Hestenes) Jacobi, in double
/// precision. Returns min(m,n) values sorted descending. Throws
/// ConvergenceError when the sweep cap is hit.
template <Real T>
std::vector<double> svd_singular_values(const Tensor<T>& a, SvdOptions options = {});

}  // namespace illama
