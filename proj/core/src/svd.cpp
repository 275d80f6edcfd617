#include "illama/svd.hpp"

#include <algorithm>
#include <cmath>
#include <functional>

#include "illama/errors.hpp"

namespace illama {

template <Real T>
std::vector<double> svd_singular_values(const Tensor<T>& a, SvdOptions options) {
  if (a.rank() != 2) {
    throw ShapeError("svd_singular_values: expected a matrix, got " +
                     shape_to_string(a.shape()));
  }
  if (!a.all_finite()) throw RangeError("svd_singular_values: non-finite entry");
  const std::size_t rows = a.dim(0), cols = a.dim(1);
  // Orthogonalise the shorter side: work on n columns of length m with n <= m.
  const bool transpose = cols > rows;
  const std::size_t m = transpose ? cols : rows;
  const std::size_t n = transpose ? rows : cols;

  std::vector<std::vector<double>> col(n, std::vector<double>(m));
  double frob2 = 0;
  for (std::size_t r = 0; r < rows; ++r) {
    for (std::size_t c = 0; c < cols; ++c) {
      const double v = static_cast<double>(a.at(r, c));
      frob2 += v * v;
      if (transpose) {
        col[r][c] = v;
      } else {
        col[c][r] = v;
      }
    }
  }

  const double abs_tol = options.tolerance * frob2;
  double residual = 0;
  bool converged = frob2 == 0;
  for (int sweep = 0; sweep < options.max_sweeps && !converged; ++sweep) {
    bool rotated = false;
    residual = 0;
    for (std::size_t i = 0; i + 1 < n; ++i) {
      for (std::size_t j = i + 1; j < n; ++j) {
        auto& ci = col[i];
        auto& cj = col[j];
        double alpha = 0, beta = 0, gamma = 0;
        for (std::size_t k = 0; k < m; ++k) {
          alpha += ci[k] * ci[k];
          beta += cj[k] * cj[k];
          gamma += ci[k] * cj[k];
        }
        const double off = std::abs(gamma);
        if (frob2 > 0) residual = std::max(residual, off / frob2);
        if (off <= abs_tol || off <= options.tolerance * std::sqrt(alpha * beta)) {
          continue;
        }
        rotated = true;
        const double zeta = (beta - alpha) / (2.0 * gamma);
        const double t = std::copysign(1.0, zeta) / (std::abs(zeta) + std::sqrt(1.0 + zeta * zeta));
        const double c = 1.0 / std::sqrt(1.0 + t * t);
        const double s = c * t;
        for (std::size_t k = 0; k < m; ++k) {
          const double x = ci[k], y = cj[k];
          ci[k] = c * x - s * y;
          cj[k] = s * x + c * y;
        }
      }
    }
    converged = !rotated;
  }
  if (!converged) {
    throw ConvergenceError("one-sided Jacobi SVD did not converge in " +
                               std::to_string(options.max_sweeps) + " sweeps",
                           residual);
  }

  std::vector<double> sigma(n);
  for (std::size_t i = 0; i < n; ++i) {
    double s2 = 0;
    for (double v : col[i]) s2 += v * v;
    sigma[i] = std::sqrt(s2);
  }
  std::sort(sigma.begin(), sigma.end(), std::greater<>());
  return sigma;
}

template std::vector<double> svd_singular_values(const Tensor<float>&, SvdOptions);
template std::vector<double> svd_singular_values(const Tensor<double>&, SvdOptions);

}  // namespace illama
