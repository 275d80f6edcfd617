#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <random>

#include "illama/analysis.hpp"
#include "illama/attention.hpp"
#include "illama/errors.hpp"
#include "illama/ops.hpp"
#include "illama/svd.hpp"
#include "test_util.hpp"

using namespace illama;
using illama::testing::random_tensor;

namespace {

Tensor<double> identity(std::size_t n) {
  Tensor<double> t({n, n});
  for (std::size_t i = 0; i < n; ++i) t.at(i, i) = 1;
  return t;
}

// Softmax rows of a random matrix: a plausible attention map.
Tensor<float> random_attention(std::size_t n, std::mt19937_64& rng) {
  auto a = random_tensor<float>({n, n}, rng, 2.0);
  return softmax_rows(a);
}

}  // namespace

TEST_CASE("rank_spectrum examples") {
  auto id = rank_spectrum(identity(4));
  REQUIRE(id.cumulative.size() == 4);
  for (std::size_t k = 0; k < 4; ++k) CHECK(id.cumulative[k] == doctest::Approx(0.25 * (k + 1)).epsilon(1e-12));

  Tensor<double> r1({3, 3});
  for (std::size_t i = 0; i < 3; ++i)
    for (std::size_t j = 0; j < 3; ++j) r1.at(i, j) = double(i + 1) * double(j + 2);
  auto s1 = rank_spectrum(r1);
  for (double c : s1.cumulative) CHECK(c == doctest::Approx(1.0).epsilon(1e-9));

  auto d = rank_spectrum(Tensor<double>({2, 2}, std::vector<double>{3, 0, 0, 1}));
  CHECK(d.cumulative[0] == doctest::Approx(0.75));
  CHECK(d.cumulative[1] == doctest::Approx(1.0));

  CHECK_THROWS_AS(rank_spectrum(Tensor<double>({3, 3})), UndefinedError);
  CHECK_THROWS_AS(rank_spectrum(Tensor<double>({3, 2}, 1.0)), ShapeError);
}

TEST_CASE("rank_spectrum agrees with svd and is normalised") {
  std::mt19937_64 rng(1);
  for (int trial = 0; trial < 50; ++trial) {
    const std::size_t n = 2 + rng() % 30;
    auto a = random_attention(n, rng);
    auto s = rank_spectrum(a);
    const auto sv = svd_singular_values(a.cast<double>());
    double total = 0;
    for (double v : sv) total += v;
    double running = 0;
    for (std::size_t k = 0; k < n; ++k) {
      running += sv[k];
      CHECK(s.singular_values[k] == sv[k]);
      CHECK(s.cumulative[k] == doctest::Approx(running / total).epsilon(1e-12));
      if (k) CHECK(s.cumulative[k] >= s.cumulative[k - 1]);
    }
    CHECK(std::abs(s.cumulative.back() - 1.0) <= 1e-9);
  }
}

TEST_CASE("effective_rank_index examples") {
  CHECK(effective_rank_index(rank_spectrum(identity(197)), 0.8) == 158);
  CHECK(effective_rank_index(rank_spectrum(identity(10)), 1.0) == 10);
  Tensor<double> r1({4, 4}, 0.25);
  CHECK(effective_rank_index(rank_spectrum(r1)) == 1);
  const std::vector<double> c{0.5, 0.8, 1.0};
  CHECK(effective_rank_index(c, 0.8) == 2);
  CHECK(effective_rank_index(c, 0.5) == 1);
  CHECK(effective_rank_index(c, 0.81) == 3);
  CHECK_THROWS_AS(effective_rank_index(c, 0.0), RangeError);
  CHECK_THROWS_AS(effective_rank_index(c, 1.1), RangeError);
}

TEST_CASE("effective rank: nondecreasing in the threshold, invariant to positive scaling") {
  std::mt19937_64 rng(2);
  for (int trial = 0; trial < 30; ++trial) {
    const std::size_t n = 3 + rng() % 40;
    auto a = random_attention(n, rng).cast<double>();
    const auto s = rank_spectrum(a);
    std::size_t prev = 0;
    for (double t = 0.05; t <= 1.0; t += 0.05) {
      const std::size_t k = effective_rank_index(s, t);
      CHECK(k >= prev);
      prev = k;
    }
    auto scaled = a;
    const double c = std::uniform_real_distribution<double>(0.01, 50.0)(rng);
    for (auto& v : scaled.data()) v *= c;
    for (double t : {0.5, 0.8, 0.95}) CHECK(effective_rank_index(rank_spectrum(scaled), t) == effective_rank_index(s, t));
  }
}

TEST_CASE("attention_flops examples") {
  CHECK(attention_flops(197, 192, FlopsKind::Bidirectional) == 43951488ull);
  CHECK(attention_flops(197, 192, FlopsKind::Causal) == 40225920ull);
  for (std::uint64_t d : {1ull, 7ull, 192ull, 1024ull}) {
    CHECK(attention_flops(1, d, FlopsKind::Bidirectional) == 4 * d * d + 2 * d);
    CHECK(attention_flops(1, d, FlopsKind::Causal) == 4 * d * d + 2 * d);
  }
}

TEST_CASE("attention_flops: causal saves more as sequences grow") {
  for (std::uint64_t d : {1ull, 64ull, 192ull}) {
    std::uint64_t prev_gap = 0;
    for (std::uint64_t n = 1; n <= 600; ++n) {
      const auto bi = attention_flops(n, d, FlopsKind::Bidirectional);
      const auto ca = attention_flops(n, d, FlopsKind::Causal);
      CHECK(bi == 4 * n * d * d + 2 * n * n * d);
      CHECK(ca <= bi);
      if (n == 1) CHECK(ca == bi);
      else CHECK(ca < bi);
      CHECK(bi - ca >= prev_gap);
      prev_gap = bi - ca;
      CHECK(ca - 4 * n * d * d - n * n * d == (n * n / 2 + 1) * d);
    }
  }
}

TEST_CASE("ece examples") {
  const std::vector<double> ones{1.0, 1.0, 1.0};
  CHECK(ece(ones, {true, true, true}).ece == 0.0);
  const std::vector<double> one{1.0};
  CHECK(ece(one, {false}).ece == doctest::Approx(1.0));
  const std::vector<double> pair{0.8, 0.8};
  CHECK(ece(pair, {true, false}).ece == doctest::Approx(0.3).epsilon(1e-12));
  const std::vector<double> none;
  CHECK_THROWS_AS(ece(none, {}), UndefinedError);
  const std::vector<double> bad{1.5};
  CHECK_THROWS_AS(ece(bad, {true}), RangeError);
  CHECK_THROWS(ece(pair, {true}));
}

TEST_CASE("ece: bins partition the samples; a calibrated predictor scores zero") {
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> u(0, 1);
  for (int trial = 0; trial < 20; ++trial) {
    const std::size_t s = 1 + rng() % 500;
    std::vector<double> conf(s);
    std::vector<bool> correct(s);
    for (std::size_t i = 0; i < s; ++i) {
      conf[i] = u(rng);
      correct[i] = u(rng) < 0.5;
    }
    const auto r = ece(conf, correct);
    std::size_t total = 0;
    double direct = 0;
    for (const auto& b : r.bins) {
      total += b.count;
      direct += double(b.count) / s * std::abs(b.accuracy - b.confidence);
    }
    CHECK(r.bins.size() == 15);
    CHECK(total == s);
    CHECK(r.samples == s);
    CHECK(r.ece >= 0.0);
    CHECK(r.ece <= 1.0);
    CHECK(r.ece == doctest::Approx(direct).epsilon(1e-12));
  }

  // Ten samples at confidence 0.6 with six correct, ten at 0.2 with two correct.
  std::vector<double> conf;
  std::vector<bool> correct;
  for (int i = 0; i < 10; ++i) {
    conf.push_back(0.6);
    correct.push_back(i < 6);
    conf.push_back(0.2);
    correct.push_back(i < 2);
  }
  CHECK(ece(conf, correct).ece <= 1e-12);
}

TEST_CASE("analyze_dumps: identity dumps, averaging, and bitwise agreement with memory") {
  const auto dir = illama::testing::scratch_dir("analysis");
  std::mt19937_64 rng(4);
  AttentionRecord id;
  id.layer = 1;
  id.head = 1;
  id.matrix = identity(20).cast<float>();
  write_attention_dump(dir / "id.atnr", id);
  auto ids = analyze_dumps({dir / "id.atnr"});
  REQUIRE(ids.size() == 1);
  CHECK(ids[0].effective_rank == 16);

  std::vector<std::filesystem::path> files;
  std::vector<RankSpectrum> memory;
  for (std::size_t i = 0; i < 3; ++i) {
    for (std::size_t head : {2u, 1u}) {
      AttentionRecord r;
      r.layer = 4;
      r.head = head;
      r.matrix = random_attention(9, rng);
      const auto p = dir / ("r" + std::to_string(i) + "_" + std::to_string(head) + ".atnr");
      write_attention_dump(p, r);
      files.push_back(p);
      if (head == 1) memory.push_back(rank_spectrum(r.matrix));
    }
  }
  const auto single = analyze_dumps({files[1]});
  CHECK(single[0].cumulative == memory[0].cumulative);

  const auto heads = analyze_dumps(files);
  REQUIRE(heads.size() == 2);
  CHECK(heads[0].layer == 4);
  CHECK(heads[0].head == 1);
  CHECK(heads[1].head == 2);
  CHECK(heads[0].count == 3);
  for (std::size_t k = 0; k < 9; ++k) {
    const double mean = (memory[0].cumulative[k] + memory[1].cumulative[k] + memory[2].cumulative[k]) / 3;
    CHECK(heads[0].cumulative[k] == doctest::Approx(mean).epsilon(1e-15));
  }
  CHECK(heads[0].effective_rank == effective_rank_index(heads[0].cumulative, 0.8));

  const std::string summary = effective_rank_csv(heads);
  CHECK(summary.rfind("layer,head,effective_rank_0.8\n", 0) == 0);
  CHECK(summary.find("\n4,1," + std::to_string(heads[0].effective_rank) + "\n") != std::string::npos);
  const std::string curves = spectrum_csv(heads);
  CHECK(curves.rfind("layer,head,k,cumulative\n", 0) == 0);
  std::size_t rows = 0;
  for (char ch : curves) rows += ch == '\n';
  CHECK(rows == 1 + 2 * 9);
  // 17 significant digits reproduce the doubles exactly.
  const auto at = curves.find("\n4,1,3,");
  REQUIRE(at != std::string::npos);
  const double parsed = std::stod(curves.substr(at + 7, curves.find('\n', at + 1) - at - 7));
  CHECK(parsed == heads[0].cumulative[2]);

  AttentionRecord other;
  other.layer = 4;
  other.head = 1;
  other.matrix = random_attention(5, rng);
  write_attention_dump(dir / "odd.atnr", other);
  auto mismatched = files;
  mismatched.push_back(dir / "odd.atnr");
  CHECK_THROWS_AS(analyze_dumps(mismatched), FormatError);
}
