#include "illama/training.hpp"

#include <cmath>
#include <cstdio>
#include <numeric>
#include <random>

#include "illama/augment.hpp"
#include "illama/errors.hpp"
#include "illama/evaluate.hpp"
#include "illama/loss.hpp"
#include "illama/optim.hpp"

namespace illama {

void TrainConfig::validate() const {
  std::vector<std::string> v;
  if (epochs == 0) v.push_back("epochs must be positive");
  if (batch_size == 0) v.push_back("batch_size must be positive");
  if (eval_batch == 0) v.push_back("eval_batch must be positive");
  if (!(base_lr >= 0)) v.push_back("base_lr must be non-negative");
  if (!(warmup_epochs >= 0)) v.push_back("warmup_epochs must be non-negative");
  if (!(weight_decay >= 0)) v.push_back("weight_decay must be non-negative");
  if (!(beta1 >= 0 && beta1 < 1)) v.push_back("beta1 must lie in [0,1)");
  if (!(beta2 >= 0 && beta2 < 1)) v.push_back("beta2 must lie in [0,1)");
  if (!(adam_eps > 0)) v.push_back("adam_eps must be positive");
  if (!(label_smoothing >= 0 && label_smoothing < 1)) v.push_back("label_smoothing must lie in [0,1)");
  if (!(mixup_alpha >= 0)) v.push_back("mixup_alpha must be non-negative");
  if (!(cutmix_alpha >= 0)) v.push_back("cutmix_alpha must be non-negative");
  if (!(drop_path >= 0 && drop_path < 1)) v.push_back("drop_path must lie in [0,1)");
  if (!(softmask.alpha0 >= 0 && softmask.alpha0 <= 1)) v.push_back("softmask alpha0 must lie in [0,1]");
  if (v.empty()) return;
  std::string msg = "invalid training config:";
  for (const auto& s : v) msg += "\n  - " + s;
  throw ConfigError(msg);
}

MaskKind training_mask(const TrainConfig& cfg, const ModelConfig& model, std::size_t epoch) {
  const double alpha = alpha_at(cfg.softmask, epoch);
  return alpha > 0.0 ? MaskKind::soft(alpha) : model.mask;
}

namespace {

double grad_norm(const Tensor<float>& t) {
  if (!t.has_grad()) return 0.0;
  double s = 0.0;
  for (float g : t.grad()) s += static_cast<double>(g) * g;
  return std::sqrt(s);
}

}  // namespace

std::vector<EpochMetrics> train(Model<float>& model, const Dataset& train_set,
                                const Dataset& test_set, const TrainConfig& cfg,
                                const TrainHooks& hooks) {
  cfg.validate();
  if (train_set.size() == 0) throw ConfigError("training set is empty");
  const auto& mc = model.config;
  if (train_set.channels() != mc.in_channels || train_set.height() != mc.image_size ||
      train_set.width() != mc.image_size || train_set.num_classes != mc.num_classes) {
    throw ConfigError("training set " + shape_to_string(train_set.images.shape()) +
                      " does not match the model input");
  }
  auto log = [&](const std::string& s) {
    if (hooks.log) hooks.log(s);
  };

  std::mt19937_64 rng(cfg.seed);
  AdamW<float> opt({cfg.beta1, cfg.beta2, cfg.adam_eps, cfg.weight_decay});
  for_each_parameter(model, [&](const std::string& name, Tensor<float>& t) {
    opt.add_param(t, decays(name, t.shape()));
  });

  const LrSchedule lrs = cfg.lr_schedule();
  const std::size_t n = train_set.size();
  const std::size_t steps = (n + cfg.batch_size - 1) / cfg.batch_size;
  std::vector<std::size_t> order(n);
  std::vector<EpochMetrics> history;

  for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
    EpochMetrics em;
    em.epoch = epoch;
    em.alpha = alpha_at(cfg.softmask, epoch);
    em.lr = lr_at(lrs, static_cast<double>(epoch));
    const MaskKind mask = training_mask(cfg, mc, epoch);

    std::iota(order.begin(), order.end(), std::size_t{0});
    std::shuffle(order.begin(), order.end(), rng);
    double loss_sum = 0.0;
    for (std::size_t step = 0; step < steps; ++step) {
      const std::size_t begin = step * cfg.batch_size;
      const std::size_t end = std::min(n, begin + cfg.batch_size);
      std::vector<std::size_t> idx(order.begin() + begin, order.begin() + end);
      Tensor<float> images = gather_images(train_set, idx);
      std::vector<std::uint8_t> labels(idx.size());
      for (std::size_t i = 0; i < idx.size(); ++i) labels[i] = train_set.labels[idx[i]];
      Tensor<float> targets = one_hot<float>(labels, mc.num_classes);
      mix_batch(images, targets, cfg.mixup_alpha, cfg.cutmix_alpha, rng);

      Tape<float> tape;
      ForwardOptions fo;
      fo.mask = mask;
      fo.drop_path = cfg.drop_path;
      fo.rng = &rng;
      Var<float> logits = forward(model, tape.constant(std::move(images)), fo);
      Var<float> loss = cross_entropy_smoothed(logits, targets, cfg.label_smoothing);
      const double lv = static_cast<double>(loss.value()[0]);
      if (!std::isfinite(lv)) {
        log("non-finite loss at epoch " + std::to_string(epoch) + " step " + std::to_string(step));
        throw DivergenceError(epoch, step);
      }
      model.zero_grad();
      tape.backward(loss);
      if (step == 0 && grad_norm(model.patch_embed.projection) == 0.0) {
        log("warning: attention collapse at epoch " + std::to_string(epoch) +
            ": the patch-embedding gradient is exactly zero, so the class token reads no image "
            "token (cls=" + to_string(mc.cls_placement) + ", mask=" + mask.to_string() + ")");
      }
      const double frac = static_cast<double>(epoch) +
                          static_cast<double>(step) / static_cast<double>(steps);
      opt.step(lr_at(lrs, frac));
      loss_sum += lv * static_cast<double>(idx.size());
    }
    em.train_loss = loss_sum / static_cast<double>(n);

    const EvalResult ev = evaluate(model, test_set, mask, cfg.eval_batch);
    em.test_loss = ev.loss;
    em.test_acc = ev.accuracy;
    history.push_back(em);
    char line[256];
    std::snprintf(line, sizeof line,
                  "epoch %zu/%zu alpha %.3g lr %.4g train_loss %.4f test_loss %.4f test_acc %.4f",
                  epoch + 1, cfg.epochs, em.alpha, em.lr, em.train_loss, em.test_loss, em.test_acc);
    log(line);
    if (hooks.on_epoch) hooks.on_epoch(model, em);
  }
  return history;
}

std::string metrics_csv(const std::vector<EpochMetrics>& history) {
  std::string out = std::string(kMetricsHeader) + "\n";
  char buf[256];
  for (const auto& m : history) {
    std::snprintf(buf, sizeof buf, "%zu,%.6g,%.6g,%.6g,%.6g,%.6g\n", m.epoch, m.alpha, m.lr,
                  m.train_loss, m.test_loss, m.test_acc);
    out += buf;
  }
  return out;
}

}  // namespace illama
