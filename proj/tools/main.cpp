#include <cstdio>
#include <exception>

#include <CLI11.hpp>

#include "commands.hpp"
#include "illama/errors.hpp"

namespace {

// Adds `--flag value` as a config override under `key`.
void override_option(CLI::App* app, illama::cli::TrainArgs& args, const std::string& flag,
                     const std::string& key, const std::string& help) {
  app->add_option_function<std::string>(
      flag, [&args, key](const std::string& v) { args.overrides.emplace_back(key, v); }, help);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"iLLaMA: a LLaMA-style causal vision transformer"};
  app.require_subcommand(1);

  illama::cli::TrainArgs train;
  auto* tr = app.add_subcommand("train", "Train a model; writes run.cfg, metrics.csv, final.ckpt");
  tr->add_option("--config", train.config_file, "key=value config file");
  override_option(tr, train, "--preset", "preset", "micro|tiny|small|base|large");
  override_option(tr, train, "--dataset", "dataset", "mnist|cifar10");
  override_option(tr, train, "--data-dir", "data_dir", "dataset directory (default $ILLAMA_DATA_ROOT/<dataset>)");
  override_option(tr, train, "--out", "out", "output directory");
  override_option(tr, train, "--epochs", "epochs", "training epochs");
  override_option(tr, train, "--batch-size", "batch_size", "batch size");
  override_option(tr, train, "--lr", "lr", "base learning rate");
  override_option(tr, train, "--warmup", "warmup_epochs", "linear warmup epochs");
  override_option(tr, train, "--weight-decay", "weight_decay", "decoupled weight decay");
  override_option(tr, train, "--seed", "seed", "random seed");
  override_option(tr, train, "--cls", "cls", "class-token placement: front|post");
  override_option(tr, train, "--mask", "mask", "mask after the soft-mask phase: causal|modified|bidirectional");
  override_option(tr, train, "--softmask", "softmask_scheme", "soft-mask scheme: linear|constant");
  override_option(tr, train, "--cutoff", "cutoff_epochs", "soft-mask cutoff epoch (0 disables)");
  override_option(tr, train, "--mixup", "mixup", "mixup Beta alpha (0 disables)");
  override_option(tr, train, "--cutmix", "cutmix", "cutmix Beta alpha (0 disables)");
  override_option(tr, train, "--drop-path", "drop_path", "stochastic depth rate");
  override_option(tr, train, "--init-std", "init_std", "truncated-normal init std");
  override_option(tr, train, "--train-limit", "train_limit", "use the first N training images");
  override_option(tr, train, "--test-limit", "test_limit", "use the first N test images");
  tr->add_option_function<std::vector<std::string>>(
      "--set",
      [&train](const std::vector<std::string>& kvs) {
        for (const auto& s : kvs) {
          const auto eq = s.find('=');
          if (eq == std::string::npos) throw CLI::ValidationError("--set", "expected key=value");
          train.overrides.emplace_back(s.substr(0, eq), s.substr(eq + 1));
        }
      },
      "extra key=value overrides");
  tr->add_flag("--quiet", train.quiet, "only log warnings");

  illama::cli::EvalArgs eval;
  auto* ev = app.add_subcommand("eval", "Evaluate a checkpoint: accuracy, loss, ECE");
  ev->add_option("checkpoint", eval.checkpoint, "checkpoint file")->required();
  ev->add_option("--dataset", eval.dataset, "mnist|cifar10");
  ev->add_option("--data-dir", eval.data_dir, "dataset directory");
  ev->add_option("--mask", eval.mask, "override the inference mask");
  ev->add_option("--limit", eval.limit, "evaluate the first N test images");
  ev->add_option("--batch", eval.batch, "evaluation batch size");
  ev->add_option("--dump-attn", eval.dump_spec, "e.g. \"layers=1 heads=all samples=30\"");
  ev->add_option("--dump-dir", eval.dump_dir, "directory for attention dumps");
  ev->add_option("--seed", eval.seed, "seed for choosing dumped samples");
  ev->add_option("--calibration-csv", eval.calibration_csv, "write per-bin calibration table");

  illama::cli::AnalyzeArgs analyze;
  auto* an = app.add_subcommand("analyze", "Rank spectra of attention dumps");
  an->add_option("paths", analyze.paths, "dump files or directories")->required();
  an->add_option("--out", analyze.out_dir, "directory for spectrum.csv and effective_rank.csv");
  an->add_option("--threshold", analyze.threshold, "cumulative threshold for the effective rank");

  std::uint64_t n = 0, d = 0;
  auto* fl = app.add_subcommand("flops", "Attention FLOPs, bidirectional vs causal");
  fl->add_option("--n", n, "sequence length")->required();
  fl->add_option("--d", d, "embedding dimension")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e);
  }

  try {
    if (*tr) return illama::cli::cmd_train(train);
    if (*ev) return illama::cli::cmd_eval(eval);
    if (*an) return illama::cli::cmd_analyze(analyze);
    if (*fl) return illama::cli::cmd_flops(n, d);
  } catch (const illama::DivergenceError& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 3;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  }
  return 0;
}
