#include <doctest.h>

#include <cmath>
#include <numeric>
#include <random>
#include <sstream>

#include "illama/augment.hpp"
#include "illama/errors.hpp"
#include "illama/evaluate.hpp"
#include "illama/gradcheck.hpp"
#include "illama/loss.hpp"
#include "illama/optim.hpp"
#include "illama/schedule.hpp"
#include "illama/training.hpp"
#include "test_util.hpp"

using namespace illama;
using illama::testing::bitwise_equal;
using illama::testing::random_tensor;
using illama::testing::synthetic_dataset;
using illama::testing::tiny_test_config;

namespace {

TrainConfig quick_config() {
  TrainConfig cfg;
  cfg.epochs = 2;
  cfg.batch_size = 16;
  cfg.base_lr = 3e-3;
  cfg.warmup_epochs = 0.5;
  cfg.seed = 4;
  cfg.eval_batch = 32;
  return cfg;
}

std::vector<Tensor<float>> snapshot(Model<float>& m) {
  std::vector<Tensor<float>> out;
  for_each_parameter(m, [&](const std::string&, Tensor<float>& t) { out.push_back(t); });
  return out;
}

}  // namespace

TEST_CASE("alpha_at examples") {
  SoftMaskSchedule linear{SoftMaskScheme::Linear, 50, 1.0};
  CHECK(alpha_at(linear, 25) == doctest::Approx(0.5));
  CHECK(alpha_at(linear, 0) == 1.0);
  CHECK(alpha_at(linear, 50) == 0.0);
  SoftMaskSchedule constant{SoftMaskScheme::Constant, 50, 1.0};
  CHECK(alpha_at(constant, 49) == 1.0);
  CHECK(alpha_at(constant, 50) == 0.0);
  CHECK(alpha_at(constant, 500) == 0.0);
  SoftMaskSchedule off{SoftMaskScheme::Linear, 0, 1.0};
  CHECK(alpha_at(off, 0) == 0.0);
  SoftMaskSchedule half{SoftMaskScheme::Constant, 3, 0.5};
  CHECK(alpha_at(half, 2) == 0.5);
  CHECK(parse_softmask_scheme("linear") == SoftMaskScheme::Linear);
  CHECK(parse_softmask_scheme(to_string(SoftMaskScheme::Constant)) == SoftMaskScheme::Constant);
  CHECK_THROWS_AS(parse_softmask_scheme("cubic"), ConfigError);
}

TEST_CASE("alpha_at is nonincreasing and zero from the cutoff") {
  for (auto scheme : {SoftMaskScheme::Linear, SoftMaskScheme::Constant}) {
    for (std::size_t cutoff : {1u, 2u, 7u, 50u}) {
      SoftMaskSchedule s{scheme, cutoff, 1.0};
      double prev = 1.0;
      for (std::size_t e = 0; e < cutoff + 10; ++e) {
        const double a = alpha_at(s, e);
        CHECK(a <= prev);
        CHECK(a >= 0.0);
        if (e >= cutoff) CHECK(a == 0.0);
        prev = a;
      }
    }
  }
}

TEST_CASE("lr_at examples and continuity") {
  LrSchedule s{1e-3, 5.0, 25.0};
  CHECK(lr_at(s, 0.0) == 0.0);
  CHECK(lr_at(s, 2.5) == doctest::Approx(0.5e-3));
  CHECK(lr_at(s, 5.0) == doctest::Approx(1e-3).epsilon(1e-12));
  CHECK(lr_at(s, 25.0) <= 1e-6 * 1e-3);
  CHECK(std::abs(lr_at(s, 15.0) - 0.5e-3) <= 1e-9);
  CHECK(std::abs(lr_at(s, 5.0 - 1e-9) - lr_at(s, 5.0 + 1e-9)) < 1e-10);
  CHECK(lr_at(s, 30.0) == lr_at(s, 25.0));
  double prev = lr_at(s, 5.0);
  for (double e = 5.0; e <= 25.0; e += 0.25) {
    CHECK(lr_at(s, e) <= prev + 1e-18);
    prev = lr_at(s, e);
  }
  LrSchedule no_warm{1e-3, 0.0, 10.0};
  CHECK(lr_at(no_warm, 0.0) == doctest::Approx(1e-3));
}

TEST_CASE("cross_entropy_smoothed examples") {
  Tensor<double> uniform({2, 10});
  std::vector<std::uint8_t> labels{3, 7};
  auto t = one_hot<double>(labels, 10);
  CHECK(t.at(0, 3) == 1.0);
  CHECK(t.at(1, 7) == 1.0);
  CHECK(cross_entropy_smoothed(uniform, t, 0.0) == doctest::Approx(std::log(10.0)).epsilon(1e-12));
  CHECK(cross_entropy_smoothed(uniform, t, 0.1) == doctest::Approx(std::log(10.0)).epsilon(1e-12));
  Tensor<double> sure({1, 3}, std::vector<double>{30, 0, 0});
  std::vector<std::uint8_t> zero{0};
  CHECK(cross_entropy_smoothed(sure, one_hot<double>(zero, 3), 0.0) <= 1e-9 + 2 * std::exp(-30.0));
}

TEST_CASE("cross_entropy_smoothed matches a direct log-sum-exp evaluation and its gradient") {
  std::mt19937_64 rng(1);
  for (int trial = 0; trial < 100; ++trial) {
    const std::size_t b = 1 + rng() % 5, k = 2 + rng() % 6;
    auto logits = random_tensor<double>({b, k}, rng);
    Tensor<double> targets({b, k});
    for (std::size_t r = 0; r < b; ++r) {
      targets.at(r, rng() % k) += 0.7;
      targets.at(r, rng() % k) += 0.3;
    }
    const double s = 0.1 * (trial % 3);
    long double ref = 0;
    for (std::size_t r = 0; r < b; ++r) {
      long double mx = -1e300, z = 0;
      for (std::size_t j = 0; j < k; ++j) mx = std::max<long double>(mx, logits.at(r, j));
      for (std::size_t j = 0; j < k; ++j) z += std::exp(logits.at(r, j) - mx);
      for (std::size_t j = 0; j < k; ++j) {
        const long double tj = (1 - s) * targets.at(r, j) + s / k;
        ref -= tj * (logits.at(r, j) - mx - std::log(z));
      }
    }
    ref /= b;
    CHECK(cross_entropy_smoothed(logits, targets, s) == doctest::Approx((double)ref).epsilon(1e-12));
    const double err = finite_diff_check(
        [&](Tape<double>&, const Var<double>& v) { return cross_entropy_smoothed(v, targets, s); }, logits, 1e-5);
    CHECK(err <= 1e-6);
  }
}

TEST_CASE("sample_beta and random_pairing") {
  std::mt19937_64 rng(2);
  double total = 0;
  for (int i = 0; i < 4000; ++i) {
    const double l = sample_beta(0.1, rng);
    CHECK(l >= 0.0);
    CHECK(l <= 1.0);
    total += l;
  }
  CHECK(total / 4000 == doctest::Approx(0.5).epsilon(0.1));
  auto pair = random_pairing(10, rng);
  auto sorted = pair;
  std::sort(sorted.begin(), sorted.end());
  for (std::size_t i = 0; i < 10; ++i) CHECK(sorted[i] == i);
}

TEST_CASE("mixup examples") {
  std::mt19937_64 rng(3);
  auto images = random_tensor<float>({2, 1, 4, 4}, rng);
  std::vector<std::uint8_t> labels{0, 2};
  auto targets = one_hot<float>(labels, 3);
  const std::vector<std::size_t> swap{1, 0};

  auto same = images;
  auto same_t = targets;
  mixup_with(same, same_t, swap, 1.0);
  CHECK(bitwise_equal(same, images));
  CHECK(bitwise_equal(same_t, targets));

  auto half = images;
  auto half_t = targets;
  mixup_with(half, half_t, swap, 0.5);
  for (std::size_t i = 0; i < 16; ++i) {
    CHECK(half[i] == doctest::Approx((images[i] + images[16 + i]) / 2));
    CHECK(half[16 + i] == doctest::Approx((images[i] + images[16 + i]) / 2));
  }
  CHECK(half_t.at(0, 0) == 0.5f);
  CHECK(half_t.at(0, 2) == 0.5f);
}

TEST_CASE("cutmix examples") {
  std::mt19937_64 rng(4);
  auto images = random_tensor<float>({2, 2, 4, 4}, rng);
  std::vector<std::uint8_t> labels{0, 1};
  auto targets = one_hot<float>(labels, 2);
  const std::vector<std::size_t> swap{1, 0};

  auto same = images;
  auto same_t = targets;
  CHECK(cutmix_with(same, same_t, swap, CutBox{}) == 1.0);
  CHECK(bitwise_equal(same, images));
  CHECK(bitwise_equal(same_t, targets));

  auto full = images;
  auto full_t = targets;
  CHECK(cutmix_with(full, full_t, swap, CutBox{0, 4, 0, 4}) == 0.0);
  for (std::size_t i = 0; i < 32; ++i) CHECK(full[i] == images[32 + i]);
  CHECK(full_t.at(0, 1) == 1.0f);
  CHECK(full_t.at(1, 0) == 1.0f);

  auto part = images;
  auto part_t = targets;
  const double lambda = cutmix_with(part, part_t, swap, CutBox{1, 3, 0, 2});
  CHECK(lambda == 1.0 - 4.0 / 16.0);
  CHECK(part_t.at(0, 0) == doctest::Approx(0.75));
  for (std::size_t c = 0; c < 2; ++c)
    for (std::size_t y = 0; y < 4; ++y)
      for (std::size_t x = 0; x < 4; ++x) {
        const std::size_t i = (c * 4 + y) * 4 + x;
        const bool inside = y >= 1 && y < 3 && x < 2;
        CHECK(part[i] == (inside ? images[32 + i] : images[i]));
      }
}

TEST_CASE("sampled boxes realise their area and mixed labels stay normalised") {
  std::mt19937_64 rng(5);
  for (int trial = 0; trial < 200; ++trial) {
    const double lambda = std::uniform_real_distribution<double>(0, 1)(rng);
    const auto box = sample_cut_box(32, 24, lambda, rng);
    CHECK(box.y0 <= box.y1);
    CHECK(box.y1 <= 32);
    CHECK(box.x0 <= box.x1);
    CHECK(box.x1 <= 24);
    CHECK(box.y1 - box.y0 <= std::lround(std::sqrt(1 - lambda) * 32));

    auto images = random_tensor<float>({6, 1, 32, 24}, rng);
    std::vector<std::uint8_t> labels{0, 1, 2, 3, 4, 0};
    auto targets = one_hot<float>(labels, 5);
    mix_batch(images, targets, trial % 3 ? 0.1 : 0.0, trial % 2 ? 1.0 : 0.0, rng);
    for (std::size_t r = 0; r < 6; ++r) {
      double s = 0;
      for (std::size_t k = 0; k < 5; ++k) {
        CHECK(targets.at(r, k) >= 0.0f);
        s += targets.at(r, k);
      }
      CHECK(std::abs(s - 1.0) <= 1e-6);
    }
  }
}

TEST_CASE("mix_batch with both disabled leaves the batch untouched") {
  std::mt19937_64 rng(6);
  auto images = random_tensor<float>({4, 1, 4, 4}, rng);
  std::vector<std::uint8_t> labels{0, 1, 0, 1};
  auto targets = one_hot<float>(labels, 2);
  auto i2 = images;
  auto t2 = targets;
  mix_batch(i2, t2, 0.0, 0.0, rng);
  CHECK(bitwise_equal(i2, images));
  CHECK(bitwise_equal(t2, targets));
}

TEST_CASE("adamw examples") {
  AdamWOptions no_decay;
  no_decay.weight_decay = 0;
  Tensor<double> x({1}, 1.0);
  x.set_requires_grad(true);
  AdamW<double> opt(no_decay);
  opt.add_param(x, true);
  x.grad_mut()[0] = 1.0;  // d/dx of f(x) = x
  opt.step(0.1);
  CHECK(x[0] == doctest::Approx(0.9).epsilon(1e-8));
  CHECK(opt.steps() == 1);

  Tensor<double> still({3}, 2.0);
  still.set_requires_grad(true);
  AdamW<double> quiet(no_decay);
  quiet.add_param(still, true);
  quiet.step(0.1);
  for (double v : still.data()) CHECK(v == 2.0);

  AdamWOptions decay;
  decay.weight_decay = 0.05;
  Tensor<double> w({2, 2}, 3.0);
  w.set_requires_grad(true);
  AdamW<double> shrink(decay);
  shrink.add_param(w, true);
  shrink.step(0.1);
  for (double v : w.data()) CHECK(v == doctest::Approx(3.0 * (1 - 0.1 * 0.05)).epsilon(1e-15));
}

TEST_CASE("adamw matches a hand-written Adam over several steps") {
  std::mt19937_64 rng(7);
  AdamWOptions o;
  o.weight_decay = 0.01;
  for (int trial = 0; trial < 20; ++trial) {
    auto p = random_tensor<double>({3, 4}, rng);
    p.set_requires_grad(true);
    auto ref = p;
    std::vector<double> m(12, 0), v(12, 0);
    AdamW<double> opt(o);
    opt.add_param(p, true);
    for (int step = 1; step <= 5; ++step) {
      auto g = random_tensor<double>({3, 4}, rng);
      std::copy(g.data().begin(), g.data().end(), p.grad_mut().begin());
      const double lr = 0.01 * step;
      opt.step(lr);
      for (std::size_t i = 0; i < 12; ++i) {
        ref[i] -= lr * o.weight_decay * ref[i];
        m[i] = o.beta1 * m[i] + (1 - o.beta1) * g[i];
        v[i] = o.beta2 * v[i] + (1 - o.beta2) * g[i] * g[i];
        const double mh = m[i] / (1 - std::pow(o.beta1, step));
        const double vh = v[i] / (1 - std::pow(o.beta2, step));
        ref[i] -= lr * mh / (std::sqrt(vh) + o.eps);
      }
    }
    CHECK(illama::testing::max_abs_diff(p, ref) <= 1e-10);
  }
}

TEST_CASE("weight decay selection") {
  CHECK(decays("blocks.0.attn.w_q", {16, 16}));
  CHECK(decays("lpe", {5, 16}));
  CHECK(decays("head.weight", {16, 3}));
  CHECK_FALSE(decays("head.bias", {3}));
  CHECK_FALSE(decays("blocks.0.norm1.gamma", {16}));
  CHECK_FALSE(decays("cls_token", {16}));
}

TEST_CASE("train config validation and per-epoch masks") {
  TrainConfig cfg = quick_config();
  CHECK_NOTHROW(cfg.validate());
  cfg.batch_size = 0;
  cfg.label_smoothing = 1.5;
  CHECK_THROWS_AS(cfg.validate(), ConfigError);

  TrainConfig s = quick_config();
  s.softmask = {SoftMaskScheme::Linear, 2, 1.0};
  auto model = tiny_test_config();
  CHECK(training_mask(s, model, 0) == MaskKind::soft(1.0));
  CHECK(training_mask(s, model, 1) == MaskKind::soft(0.5));
  CHECK(training_mask(s, model, 2) == MaskKind::causal());
  model.mask = MaskKind::modified_causal();
  CHECK(training_mask(s, model, 5) == MaskKind::modified_causal());
}

TEST_CASE("training is bit-reproducible under a fixed seed") {
  const auto c = tiny_test_config();
  const auto train_set = synthetic_dataset(64, 1, 8, 3, 1);
  const auto test_set = synthetic_dataset(30, 1, 8, 3, 2);
  TrainConfig cfg = quick_config();
  cfg.softmask = {SoftMaskScheme::Constant, 1, 1.0};
  auto a = build_model<float>(c, 1), b = build_model<float>(c, 1);
  const auto ha = train(a, train_set, test_set, cfg);
  const auto hb = train(b, train_set, test_set, cfg);
  CHECK(metrics_csv(ha) == metrics_csv(hb));
  const auto sa = snapshot(a), sb = snapshot(b);
  for (std::size_t i = 0; i < sa.size(); ++i) CHECK(bitwise_equal(sa[i], sb[i]));
  REQUIRE(ha.size() == 2);
  CHECK(ha[0].alpha == 1.0);
  CHECK(ha[1].alpha == 0.0);
  CHECK(ha[0].epoch == 0);
  CHECK(ha[0].lr == 0.0);

  cfg.seed = 5;
  auto other = build_model<float>(c, 1);
  CHECK(metrics_csv(train(other, train_set, test_set, cfg)) != metrics_csv(ha));
}

TEST_CASE("training learns the synthetic task") {
  const auto c = tiny_test_config();
  const auto train_set = synthetic_dataset(192, 1, 8, 3, 3);
  const auto test_set = synthetic_dataset(60, 1, 8, 3, 4);
  TrainConfig cfg = quick_config();
  cfg.epochs = 6;
  cfg.mixup_alpha = 0;
  cfg.cutmix_alpha = 0;
  auto m = build_model<float>(c, 2);
  const auto h = train(m, train_set, test_set, cfg);
  CHECK(h.back().train_loss < h.front().train_loss);
  CHECK(h.back().test_acc >= 0.9);
  const auto r = evaluate(m, test_set, c.mask, 7);
  CHECK(r.accuracy == doctest::Approx(h.back().test_acc).epsilon(1e-12));
  CHECK(r.loss == doctest::Approx(h.back().test_loss).epsilon(1e-9));
}

TEST_CASE("cutoff 0 trains causally; lr 0 leaves parameters untouched") {
  const auto c = tiny_test_config();
  const auto data = synthetic_dataset(32, 1, 8, 3, 5);
  TrainConfig cfg = quick_config();
  cfg.softmask = {SoftMaskScheme::Linear, 0, 1.0};
  auto m = build_model<float>(c, 3);
  for (const auto& e : train(m, data, data, cfg)) CHECK(e.alpha == 0.0);

  cfg.epochs = 1;
  cfg.base_lr = 0;
  cfg.weight_decay = 0;
  auto still = build_model<float>(c, 3);
  const auto before = snapshot(still);
  const auto h = train(still, data, data, cfg);
  CHECK(h.size() == 1);
  const auto after = snapshot(still);
  for (std::size_t i = 0; i < before.size(); ++i) CHECK(bitwise_equal(before[i], after[i]));
}

TEST_CASE("non-finite loss aborts with a divergence error after reporting finished epochs") {
  const auto c = tiny_test_config();
  auto data = synthetic_dataset(32, 1, 8, 3, 6);
  TrainConfig cfg = quick_config();
  cfg.base_lr = 1e30;
  cfg.warmup_epochs = 0;
  cfg.epochs = 5;
  auto m = build_model<float>(c, 4);
  std::size_t seen = 0;
  TrainHooks hooks;
  hooks.on_epoch = [&](const Model<float>&, const EpochMetrics&) { ++seen; };
  CHECK_THROWS_AS(train(m, data, data, cfg, hooks), DivergenceError);
  CHECK(seen < 5);

  auto poisoned = data;
  poisoned.images[5] = std::nanf("");
  auto fresh = build_model<float>(c, 4);
  cfg.base_lr = 1e-3;
  CHECK_THROWS_AS(train(fresh, poisoned, data, cfg), DivergenceError);
}

TEST_CASE("collapse configuration: patch embedding gets no gradient and a warning is logged") {
  const auto data = synthetic_dataset(32, 1, 8, 3, 7);
  auto c = tiny_test_config();
  c.cls_placement = ClsPlacement::Front;
  std::vector<std::string> lines;
  TrainHooks hooks;
  hooks.log = [&](const std::string& s) { lines.push_back(s); };
  TrainConfig cfg = quick_config();
  cfg.epochs = 1;
  cfg.weight_decay = 0;
  auto m = build_model<float>(c, 5);
  const auto proj = m.patch_embed.projection;
  train(m, data, data, cfg, hooks);
  CHECK(bitwise_equal(proj, m.patch_embed.projection));
  bool warned = false;
  for (const auto& l : lines) warned = warned || l.rfind("warning: attention collapse", 0) == 0;
  CHECK(warned);

  c.cls_placement = ClsPlacement::PostSequence;
  lines.clear();
  auto post = build_model<float>(c, 5);
  const auto proj_post = post.patch_embed.projection;
  train(post, data, data, cfg, hooks);
  CHECK_FALSE(bitwise_equal(proj_post, post.patch_embed.projection));
  for (const auto& l : lines) CHECK(l.rfind("warning", 0) != 0);
}

TEST_CASE("metrics csv format") {
  std::vector<EpochMetrics> h{{0, 1.0, 0.0, 2.302585093, 2.1, 0.25}, {1, 0.0, 0.004, 1.5, 1.25, 0.5}};
  const std::string csv = metrics_csv(h);
  CHECK(csv == std::string(kMetricsHeader) + "\n0,1,0,2.30259,2.1,0.25\n1,0,0.004,1.5,1.25,0.5\n");
}

TEST_CASE("evaluate reports hard-label loss, accuracy and confidences") {
  const auto data = synthetic_dataset(20, 1, 8, 3, 8);
  auto m = build_model<double>(tiny_test_config(), 6);
  const auto r = evaluate(m, data, MaskKind::causal(), 6);
  REQUIRE(r.predictions.size() == 20);
  auto logits = predict(m, data.images.cast<double>(), MaskKind::causal());
  double loss = 0;
  std::size_t hits = 0;
  for (std::size_t i = 0; i < 20; ++i) {
    double mx = -1e300, z = 0;
    std::size_t arg = 0;
    for (std::size_t k = 0; k < 3; ++k)
      if (logits.at(i, k) > mx) mx = logits.at(i, k), arg = k;
    for (std::size_t k = 0; k < 3; ++k) z += std::exp(logits.at(i, k) - mx);
    loss += std::log(z) - (logits.at(i, data.labels[i]) - mx);
    hits += arg == data.labels[i];
    CHECK(r.predictions[i] == arg);
    CHECK(r.correct[i] == (arg == data.labels[i]));
    CHECK(r.confidences[i] == doctest::Approx(1.0 / z).epsilon(1e-12));
  }
  CHECK(r.loss == doctest::Approx(loss / 20).epsilon(1e-12));
  CHECK(r.accuracy == doctest::Approx(hits / 20.0));
  CHECK(evaluate(m, data, MaskKind::causal(), 256, 5).predictions.size() == 5);
}
