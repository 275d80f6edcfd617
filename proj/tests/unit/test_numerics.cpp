#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <string>

#include "illama/errors.hpp"
#include "illama/gradcheck.hpp"
#include "illama/loss.hpp"
#include "illama/ops.hpp"
#include "illama/svd.hpp"
#include "test_util.hpp"

using namespace illama;
using illama::testing::naive_matmul;
using illama::testing::random_tensor;

namespace {

// Contracts an arbitrary-shaped value with fixed random weights so every
// output element reaches the loss with a distinct coefficient.
Var<double> probe(Tape<double>& tape, const Var<double>& y, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  return sum(mul(y, tape.constant(random_tensor<double>(y.shape(), rng))));
}

constexpr double kEps = 1e-5;
constexpr double kTol = 1e-4;
constexpr int kInstances = 100;

}  // namespace

TEST_CASE("tensor construction validates shapes") {
  CHECK_THROWS_AS(Tensor<float>({2, 0}), ShapeError);
  CHECK_THROWS_AS(Tensor<float>({2, 2}, std::vector<float>(3)), ShapeError);
  Tensor<double> t({2, 3}, 1.5);
  CHECK(t.numel() == 6);
  CHECK(t.rank() == 2);
  CHECK(t.at(1, 2) == 1.5);
  CHECK(t.all_finite());
  t[0] = kMasked<double>;
  CHECK_FALSE(t.all_finite());
  CHECK(t.reshaped({3, 2}).shape() == Shape{3, 2});
  CHECK_THROWS_AS(t.reshaped({4, 2}), ShapeError);
}

TEST_CASE("matmul agrees with the triple-loop reference") {
  std::mt19937_64 rng(1);
  std::uniform_int_distribution<std::size_t> dim(1, 40);
  for (int i = 0; i < 50; ++i) {
    const std::size_t m = dim(rng), k = dim(rng), n = dim(rng);
    auto a = random_tensor<double>({m, k}, rng);
    auto b = random_tensor<double>({k, n}, rng);
    CHECK(illama::testing::max_abs_diff(matmul(a, b), naive_matmul(a, b)) < 1e-12);
    auto af = a.cast<float>();
    auto bf = b.cast<float>();
    CHECK(illama::testing::max_abs_diff(matmul(af, bf), naive_matmul(af, bf)) < 1e-4);
  }
  CHECK_THROWS_AS(matmul(Tensor<float>({2, 3}), Tensor<float>({4, 2})), ShapeError);
}

TEST_CASE("softmax rows: masked entries are exact zeros, rows sum to one") {
  Tensor<double> a({2, 3}, std::vector<double>{1, kMasked<double>, 2, 0, 0, 0});
  auto s = softmax_rows(a);
  CHECK(s.at(0, 1) == 0.0);
  CHECK(s.at(0, 0) + s.at(0, 2) == doctest::Approx(1.0).epsilon(1e-15));
  CHECK(s.at(0, 2) / s.at(0, 0) == doctest::Approx(std::exp(1.0)));
  CHECK(s.at(1, 0) == doctest::Approx(1.0 / 3));

  Tensor<double> dead({2, 2}, std::vector<double>{0, 0, kMasked<double>, kMasked<double>});
  try {
    softmax_rows(dead);
    FAIL("expected DegenerateRowError");
  } catch (const DegenerateRowError& e) {
    CHECK(e.row() == 1);
  }

  // NaN scores are a numerical failure, not a masking one: they propagate.
  Tensor<double> nan_row({1, 3}, std::vector<double>{std::nan(""), kMasked<double>, std::nan("")});
  CHECK(std::isnan(softmax_rows(nan_row)[0]));
  Tensor<double> mixed({1, 2}, std::vector<double>{1.0, std::nan("")});
  CHECK(std::isnan(softmax_rows(mixed)[0]));
}

TEST_CASE("tape backward: scalar loss required, leaves accumulate") {
  Tape<double> tape;
  Tensor<double> x({2}, std::vector<double>{1, 2});
  x.set_requires_grad(true);
  auto vx = tape.leaf(x);
  CHECK_THROWS_AS(tape.backward(vx), RankError);
  auto loss = sum(mul(vx, vx));
  tape.backward(loss);
  CHECK(x.grad()[0] == 2.0);
  CHECK(x.grad()[1] == 4.0);
  tape.backward(loss);
  CHECK(x.grad()[1] == 8.0);
  x.zero_grad();
  CHECK(x.grad()[1] == 0.0);

  Tape<double> other;
  CHECK_THROWS_AS(add(vx, other.constant(Tensor<double>({2}))), ContractError);
}

TEST_CASE("constants receive no gradient and leave leaves untouched") {
  Tape<double> tape;
  Tensor<double> w({2}, std::vector<double>{3, 4});
  auto c = tape.constant(Tensor<double>({2}, std::vector<double>{1, 1}));
  auto loss = sum(mul(tape.leaf(w), c));
  tape.backward(loss);
  CHECK_FALSE(w.has_grad());
}

TEST_CASE("finite differences: every tape op, 100 random instances each") {
  std::mt19937_64 rng(7);
  std::uniform_int_distribution<std::size_t> dim(1, 6);
  auto check = [&](const std::string& name, auto make_shape, auto op) {
    double worst = 0;
    for (int i = 0; i < kInstances; ++i) {
      const Shape shape = make_shape();
      auto x = random_tensor<double>(shape, rng);
      const std::uint64_t seed = rng();
      auto err = finite_diff_check(
          [&](Tape<double>& t, const Var<double>& v) { return probe(t, op(t, v, seed), seed + 1); },
          x, kEps);
      worst = std::max(worst, err);
    }
    INFO(name << " worst relative error " << worst);
    CHECK(worst < kTol);
  };
  auto mat = [&] { return Shape{dim(rng), dim(rng)}; };

  check("matmul(x, W)", mat, [](Tape<double>& t, const Var<double>& v, std::uint64_t s) {
    std::mt19937_64 r(s);
    return matmul(v, t.constant(random_tensor<double>({v.shape()[1], 3}, r)));
  });
  check("matmul(W, x)", mat, [](Tape<double>& t, const Var<double>& v, std::uint64_t s) {
    std::mt19937_64 r(s);
    return matmul(t.constant(random_tensor<double>({2, v.shape()[0]}, r)), v);
  });
  check("bmm", [&] { return Shape{2, dim(rng), dim(rng)}; },
        [](Tape<double>& t, const Var<double>& v, std::uint64_t s) {
          std::mt19937_64 r(s);
          auto b = t.constant(random_tensor<double>({2, v.shape()[2], 3}, r));
          return bmm(v, b, false, 0.7);
        });
  check("bmm transposed, both sides", [&] { return Shape{3, dim(rng), 4}; },
        [](Tape<double>&, const Var<double>& v, std::uint64_t) { return bmm(v, v, true, 0.5); });
  check("add", mat, [](Tape<double>& t, const Var<double>& v, std::uint64_t s) {
    std::mt19937_64 r(s);
    return add(v, t.constant(random_tensor<double>(v.shape(), r)));
  });
  check("mul (self)", mat, [](Tape<double>&, const Var<double>& v, std::uint64_t) { return mul(v, v); });
  check("scale", mat, [](Tape<double>&, const Var<double>& v, std::uint64_t) { return scale(v, -1.7); });
  check("add_tiled", [&] { return Shape{3, 4}; }, [](Tape<double>& t, const Var<double>& v, std::uint64_t) {
    return add_tiled(t.constant(Tensor<double>({6, 4}, 0.25)), v);
  });
  check("mul_tiled", [&] { return Shape{2, 3}; }, [](Tape<double>& t, const Var<double>& v, std::uint64_t s) {
    std::mt19937_64 r(s);
    auto a = t.constant(random_tensor<double>({4, 2, 3}, r));
    return mul_tiled(add(a, a), v);
  });
  check("softmax_rows", mat, [](Tape<double>&, const Var<double>& v, std::uint64_t) { return softmax_rows(v); });
  check("softmax_rows with masked entries", [&] { return Shape{4, 4}; },
        [](Tape<double>& t, const Var<double>& v, std::uint64_t) {
          Tensor<double> mask({4, 4});
          for (std::size_t i = 0; i < 4; ++i)
            for (std::size_t j = i + 1; j < 4; ++j) mask.at(i, j) = kMasked<double>;
          return softmax_rows(add(v, t.constant(mask)));
        });
  check("silu", mat, [](Tape<double>&, const Var<double>& v, std::uint64_t) { return silu(v); });
  check("mean", mat, [](Tape<double>&, const Var<double>& v, std::uint64_t) {
    return mul(mean(v), mean(v));
  });
  check("reshape", [&] { return Shape{2, 6}; },
        [](Tape<double>&, const Var<double>& v, std::uint64_t) { return reshape(v, Shape{3, 4}); });
  check("gather_rows", [&] { return Shape{5, 3}; },
        [](Tape<double>&, const Var<double>& v, std::uint64_t) {
          return gather_rows(v, std::vector<std::size_t>{4, 0, 4, 2});
        });
  check("scale_row_blocks", [&] { return Shape{6, 2}; },
        [](Tape<double>&, const Var<double>& v, std::uint64_t) {
          return scale_row_blocks(v, std::vector<double>{0.0, 2.0, -1.0});
        });
}

TEST_CASE("finite-difference oracle rejects nondeterministic functions") {
  Tensor<double> x({3}, 1.0);
  int calls = 0;
  ScalarFn flaky = [&](Tape<double>&, const Var<double>& v) {
    ++calls;
    return scale(sum(v), 1.0 + 0.01 * calls);
  };
  CHECK_THROWS_AS(finite_diff_check(flaky, x, 1e-6), OracleError);
}

TEST_CASE("svd: known spectra") {
  auto eye = Tensor<double>({4, 4});
  for (std::size_t i = 0; i < 4; ++i) eye.at(i, i) = 1;
  for (double s : svd_singular_values(eye)) CHECK(s == doctest::Approx(1.0).epsilon(1e-14));

  Tensor<double> d({2, 2}, std::vector<double>{1, 0, 0, 3});
  auto sd = svd_singular_values(d);
  CHECK(sd[0] == doctest::Approx(3.0));
  CHECK(sd[1] == doctest::Approx(1.0));

  // u v^T has the single singular value |u||v|.
  Tensor<double> r1({3, 2}, std::vector<double>{1, 2, 2, 4, 3, 6});
  auto s1 = svd_singular_values(r1);
  CHECK(s1[0] == doctest::Approx(std::sqrt(14.0) * std::sqrt(5.0)));
  CHECK(std::abs(s1[1]) < 1e-12);
}

TEST_CASE("svd: Frobenius identity and transpose invariance on random matrices") {
  std::mt19937_64 rng(11);
  std::uniform_int_distribution<std::size_t> dim(1, 24);
  for (int i = 0; i < 40; ++i) {
    const std::size_t m = dim(rng), n = dim(rng);
    auto a = random_tensor<double>({m, n}, rng);
    auto s = svd_singular_values(a);
    CHECK(s.size() == std::min(m, n));
    CHECK(std::is_sorted(s.rbegin(), s.rend()));
    double fro = 0, ss = 0;
    for (double v : a.data()) fro += v * v;
    for (double v : s) ss += v * v;
    CHECK(std::abs(fro - ss) <= 1e-10 * fro);

    Tensor<double> at({n, m});
    for (std::size_t r = 0; r < m; ++r)
      for (std::size_t c = 0; c < n; ++c) at.at(c, r) = a.at(r, c);
    auto st = svd_singular_values(at);
    for (std::size_t k = 0; k < s.size(); ++k) CHECK(st[k] == doctest::Approx(s[k]).epsilon(1e-10));
  }
}

TEST_CASE("svd: errors") {
  Tensor<double> bad({2, 2}, std::vector<double>{1, std::nan(""), 0, 1});
  CHECK_THROWS_AS(svd_singular_values(bad), RangeError);
  std::mt19937_64 rng(3);
  auto a = random_tensor<double>({30, 30}, rng);
  CHECK_THROWS_AS(svd_singular_values(a, SvdOptions{1, 1e-12}), ConvergenceError);
}

TEST_CASE("matmul: identity and permutation examples") {
  Tensor<double> eye({2, 2}, std::vector<double>{1, 0, 0, 1});
  Tensor<double> a({2, 2}, std::vector<double>{1, 2, 3, 4});
  Tensor<double> p({2, 2}, std::vector<double>{0, 1, 1, 0});
  CHECK(illama::testing::bitwise_equal(matmul(eye, a), a));
  CHECK(illama::testing::bitwise_equal(matmul(eye, p), p));
}

TEST_CASE("softmax rows: worked examples") {
  auto s = softmax_rows(Tensor<double>({1, 3}, std::vector<double>{1, 2, 3}));
  CHECK(s[0] == doctest::Approx(0.09003057).epsilon(1e-7));
  CHECK(s[1] == doctest::Approx(0.24472847).epsilon(1e-7));
  CHECK(s[2] == doctest::Approx(0.66524096).epsilon(1e-7));
  auto one = softmax_rows(Tensor<double>({1, 3}, std::vector<double>{0, kMasked<double>, kMasked<double>}));
  CHECK(one[0] == 1.0);
  CHECK(one[1] == 0.0);
  CHECK(one[2] == 0.0);
}

TEST_CASE("softmax rows: unit row sums and column-permutation equivariance") {
  std::mt19937_64 rng(21);
  std::uniform_int_distribution<std::size_t> dim(1, 30);
  for (int i = 0; i < 100; ++i) {
    const std::size_t m = dim(rng), n = dim(rng);
    auto a = random_tensor<float>({m, n}, rng);
    for (auto& v : a.data()) v *= 20.0f;
    std::vector<std::size_t> perm(n);
    std::iota(perm.begin(), perm.end(), std::size_t{0});
    std::shuffle(perm.begin(), perm.end(), rng);
    Tensor<float> ap({m, n});
    for (std::size_t r = 0; r < m; ++r)
      for (std::size_t c = 0; c < n; ++c) ap.at(r, c) = a.at(r, perm[c]);
    auto s = softmax_rows(a);
    auto sp = softmax_rows(ap);
    for (std::size_t r = 0; r < m; ++r) {
      double total = 0;
      for (std::size_t c = 0; c < n; ++c) {
        total += s.at(r, c);
        CHECK(sp.at(r, c) == doctest::Approx(s.at(r, perm[c])).epsilon(1e-6));
      }
      CHECK(std::abs(total - 1.0) <= 1e-6);
    }
  }
}

TEST_CASE("backward examples: sum gives ones, sum of squares gives 2x") {
  Tape<double> tape;
  Tensor<double> x({2, 3, 2}, 0.3);
  x.set_requires_grad(true);
  tape.backward(sum(tape.leaf(x)));
  for (double g : x.grad()) CHECK(g == 1.0);

  Tape<double> t2;
  Tensor<double> y({3}, std::vector<double>{1, 2, 3});
  y.set_requires_grad(true);
  auto vy = t2.leaf(y);
  t2.backward(sum(mul(vy, vy)));
  CHECK(y.grad()[0] == 2.0);
  CHECK(y.grad()[1] == 4.0);
  CHECK(y.grad()[2] == 6.0);
}

TEST_CASE("finite_diff_check examples") {
  std::mt19937_64 rng(5);
  auto x = random_tensor<double>({4, 3}, rng);
  CHECK(finite_diff_check([](Tape<double>&, const Var<double>& v) { return sum(v); }, x, 1e-5) <= 1e-9);
  Tensor<double> xy({2}, std::vector<double>{1, 2});
  CHECK(finite_diff_check([](Tape<double>&, const Var<double>& v) { return sum(mul(v, v)); }, xy, 1e-5) <= 1e-8);

  auto logits = random_tensor<double>({5, 4}, rng);
  Tensor<double> targets({5, 4});
  for (std::size_t r = 0; r < 5; ++r) targets.at(r, r % 4) = 1.0;
  auto ce = [&](Tape<double>&, const Var<double>& v) { return cross_entropy_smoothed(v, targets, 0.0); };
  CHECK(finite_diff_check(ce, logits, 1e-5) <= 1e-6);
}

TEST_CASE("svd: small examples") {
  Tensor<double> d({3, 3}, std::vector<double>{3, 0, 0, 0, 2, 0, 0, 0, 1});
  auto s = svd_singular_values(d);
  CHECK(s[0] == doctest::Approx(3.0));
  CHECK(s[1] == doctest::Approx(2.0));
  CHECK(s[2] == doctest::Approx(1.0));
  auto n = svd_singular_values(Tensor<double>({2, 2}, std::vector<double>{0, 2, 0, 0}));
  CHECK(n[0] == doctest::Approx(2.0));
  CHECK(n[1] == 0.0);
}

TEST_CASE("svd: Frobenius identity holds at 256x256") {
  std::mt19937_64 rng(99);
  for (std::size_t side : {64u, 256u}) {
    auto a = random_tensor<double>({side, side / 2 + 1}, rng);
    auto s = svd_singular_values(a);
    double fro = 0, ss = 0;
    for (double v : a.data()) fro += v * v;
    for (double v : s) ss += v * v;
    CHECK(std::abs(fro - ss) <= 1e-8 * fro);
  }
  auto sq = random_tensor<double>({256, 256}, rng);
  auto s = svd_singular_values(sq);
  double fro = 0, ss = 0;
  for (double v : sq.data()) fro += v * v;
  for (double v : s) ss += v * v;
  CHECK(std::abs(fro - ss) <= 1e-8 * fro);
}

TEST_CASE("operations are bitwise deterministic") {
  std::mt19937_64 r1(8), r2(8);
  auto a1 = random_tensor<float>({33, 17}, r1);
  auto b1 = random_tensor<float>({17, 9}, r1);
  auto a2 = random_tensor<float>({33, 17}, r2);
  auto b2 = random_tensor<float>({17, 9}, r2);
  CHECK(illama::testing::bitwise_equal(matmul(a1, b1), matmul(a2, b2)));
  CHECK(illama::testing::bitwise_equal(softmax_rows(a1), softmax_rows(a2)));
}
