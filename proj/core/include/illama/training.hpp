#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "illama/dataset.hpp"
#include "illama/model.hpp"
#include "illama/schedule.hpp"

namespace illama {

struct TrainConfig {
  std::size_t epochs = 20;
  std::size_t batch_size = 128;
  double base_lr = 4e-3;
  double warmup_epochs = 5.0;
  double weight_decay = 0.05;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double adam_eps = 1e-8;
  double label_smoothing = 0.1;
  double mixup_alpha = 0.1;
  double cutmix_alpha = 0.1;
  double drop_path = 0.0;
  std::uint64_t seed = 0;
  SoftMaskSchedule softmask;
  std::size_t eval_batch = 256;

  LrSchedule lr_schedule() const {
    return {base_lr, warmup_epochs, static_cast<double>(epochs)};
  }
  /// ConfigError naming every violation.
  void validate() const;

  bool operator==(const TrainConfig&) const = default;
};

/// Mask used for an epoch: Soft(alpha) while alpha > 0, then the model's
/// inference mask.
MaskKind training_mask(const TrainConfig& cfg, const ModelConfig& model, std::size_t epoch);

struct EpochMetrics {
  std::size_t epoch = 0;  // 0-based
  double alpha = 0.0;
  double lr = 0.0;        // at the first step of the epoch
  double train_loss = 0.0;
  double test_loss = 0.0;
  double test_acc = 0.0;
};

struct TrainHooks {
  std::function<void(const std::string&)> log;
  /// Called after every finished epoch with the updated model.
  std::function<void(const Model<float>&, const EpochMetrics&)> on_epoch;
};

/// Runs cfg.epochs epochs. Each epoch evaluates on `test` with that epoch's
/// mask. Throws DivergenceError on a non-finite loss; by then on_epoch has
/// seen every completed epoch.
std::vector<EpochMetrics> train(Model<float>& model, const Dataset& train_set,
                                const Dataset& test_set, const TrainConfig& cfg,
                                const TrainHooks& hooks = {});

/// Header plus one row per epoch, 6 significant digits.
std::string metrics_csv(const std::vector<EpochMetrics>& history);
inline constexpr const char* kMetricsHeader = "epoch,alpha,lr,train_loss,test_loss,test_acc";

}  // namespace illama
