#pragma once

#include <cstddef>
#include <functional>
#include <span>

#include "illama/tape.hpp"
#include "illama/tensor.hpp"

namespace illama {

/// Scalar-valued function of one tensor, expressed on a tape so the analytic
/// gradient comes from backward().
using ScalarFn = std::function<Var<double>(Tape<double>&, const Var<double>&)>;

/// Scalar-valued function that reads some caller-owned tensor through
/// Tape::leaf (a model parameter, typically).
using ClosureFn = std::function<Var<double>(Tape<double>&)>;

/// Max over the checked coordinates of
///   |analytic - central| / max(|analytic|, |central|, 1e-8)
/// where central = (f(x + eps e_i) - f(x - eps e_i)) / (2 eps).
/// An empty coordinate list checks every coordinate. Throws OracleError if two
/// evaluations at the same point differ.
double finite_diff_check(const ScalarFn& f, const Tensor<double>& x, double eps,
                         std::span<const std::size_t> coordinates = {});

/// Same check where f reads `target` itself; target is perturbed in place and
/// restored. target.requires_grad() is set for the analytic pass.
double finite_diff_check(const ClosureFn& f, Tensor<double>& target, double eps,
                         std::span<const std::size_t> coordinates = {});

}  // namespace illama
