#include "illama/gradcheck.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <vector>

#include "illama/errors.hpp"

namespace illama {

namespace {

double evaluate(const ClosureFn& f) {
  Tape<double> tape;
  return f(tape).value()[0];
}

}  // namespace

double finite_diff_check(const ClosureFn& f, Tensor<double>& target, double eps,
                         std::span<const std::size_t> coordinates) {
  if (!(eps > 0)) throw RangeError("finite_diff_check: eps must be positive");

  const bool had_flag = target.requires_grad();
  const std::vector<double> saved_grad(target.grad().begin(), target.grad().end());
  target.set_requires_grad(true);
  target.zero_grad();
  {
    Tape<double> tape;
    Var<double> loss = f(tape);
    if (loss.numel() != 1) throw RankError("finite_diff_check: f must return a scalar");
    tape.backward(loss);
  }
  std::vector<double> analytic(target.numel(), 0.0);
  if (target.has_grad()) std::copy(target.grad().begin(), target.grad().end(), analytic.begin());
  target.set_requires_grad(had_flag);
  if (saved_grad.empty()) {
    target.zero_grad();
  } else {
    std::copy(saved_grad.begin(), saved_grad.end(), target.grad_mut().begin());
  }

  const double f0 = evaluate(f);
  if (evaluate(f) != f0) throw OracleError("finite_diff_check: f is not deterministic");

  std::vector<std::size_t> all;
  if (coordinates.empty()) {
    all.resize(target.numel());
    std::iota(all.begin(), all.end(), std::size_t{0});
    coordinates = all;
  }

  double worst = 0;
  for (std::size_t i : coordinates) {
    if (i >= target.numel()) throw RangeError("finite_diff_check: coordinate out of range");
    const double x0 = target[i];
    target[i] = x0 + eps;
    const double up = evaluate(f);
    target[i] = x0 - eps;
    const double down = evaluate(f);
    target[i] = x0;
    const double central = (up - down) / (2 * eps);
    const double denom = std::max({std::abs(analytic[i]), std::abs(central), 1e-8});
    worst = std::max(worst, std::abs(analytic[i] - central) / denom);
  }
  return worst;
}

double finite_diff_check(const ScalarFn& f, const Tensor<double>& x, double eps,
                         std::span<const std::size_t> coordinates) {
  Tensor<double> point = x.reshaped(x.shape());
  return finite_diff_check(
      ClosureFn([&](Tape<double>& tape) { return f(tape, tape.leaf(point)); }), point, eps,
      coordinates);
}

}  // namespace illama
