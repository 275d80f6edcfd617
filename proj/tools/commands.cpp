#include "commands.hpp"

#include <algorithm>
#include <chrono>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <numeric>
#include <random>
#include <sstream>

#include "illama/illama.hpp"

namespace fs = std::filesystem;

namespace illama::cli {

namespace {

std::vector<std::size_t> parse_index_list(const std::string& key, const std::string& value) {
  std::vector<std::size_t> out;
  if (value == "all") return out;
  std::stringstream ss(value);
  std::string item;
  while (std::getline(ss, item, ',')) {
    std::size_t v = 0;
    try {
      v = std::stoul(item);
    } catch (const std::exception&) {
      throw ConfigError("--dump-attn " + key + ": bad index '" + item + "'");
    }
    if (v == 0) throw ConfigError("--dump-attn " + key + ": indices are 1-based");
    out.push_back(v);
  }
  return out;
}

std::string dump_name(std::size_t sample, std::size_t layer, std::size_t head) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "attn_s%05zu_l%02zu_h%02zu.atnr", sample, layer, head);
  return buf;
}

}  // namespace

DumpSpec parse_dump_spec(const std::string& text) {
  DumpSpec spec;
  std::stringstream ss(text);
  std::string tok;
  while (ss >> tok) {
    const auto eq = tok.find('=');
    if (eq == std::string::npos) throw ConfigError("--dump-attn: expected key=value, got '" + tok + "'");
    const std::string k = tok.substr(0, eq);
    const std::string v = tok.substr(eq + 1);
    if (k == "layers") {
      spec.layers = parse_index_list(k, v);
    } else if (k == "heads") {
      spec.heads = parse_index_list(k, v);
    } else if (k == "samples") {
      try {
        spec.samples = std::stoul(v);
      } catch (const std::exception&) {
        throw ConfigError("--dump-attn samples: bad count '" + v + "'");
      }
    } else {
      throw ConfigError("--dump-attn: unknown key '" + k + "'");
    }
  }
  return spec;
}

int cmd_train(const TrainArgs& args) {
  KeyValues kv;
  if (!args.config_file.empty()) kv = read_key_values(args.config_file);
  for (const auto& o : args.overrides) kv.push_back(o);
  const ExperimentConfig e = experiment_from(kv);

  const fs::path out = e.out_dir;
  fs::create_directories(out);
  atomic_write_file(out / "run.cfg", experiment_to_text(e));
  std::ofstream logf(out / "train.log", std::ios::trunc);
  auto log = [&](const std::string& s) {
    const bool warning = s.rfind("warning", 0) == 0;
    if (!args.quiet || warning) std::fprintf(stderr, "%s\n", s.c_str());
    logf << s << '\n' << std::flush;
  };

  DatasetPair data = load_dataset(e.dataset, resolve_data_dir(e));
  const Dataset train_set = head(data.train, e.train_limit);
  const Dataset test_set = head(data.test, e.test_limit);
  {
    std::ostringstream os;
    os << e.dataset << ": " << train_set.size() << " train / " << test_set.size()
       << " test images; channel mean/std";
    for (std::size_t c = 0; c < data.train.mean.size(); ++c) {
      os << ' ' << data.train.mean[c] << '/' << data.train.std[c];
    }
    log(os.str());
  }
  data = {};

  Model<float> model = build_model<float>(e.model, e.train.seed);
  log("model " + e.model.name + ": " + std::to_string(param_count(e.model)) + " parameters, " +
      std::to_string(e.model.num_tokens()) + " tokens, cls=" + to_string(e.model.cls_placement) +
      ", mask=" + e.model.mask.to_string());

  const auto started = std::chrono::steady_clock::now();
  std::vector<EpochMetrics> history;
  TrainHooks hooks;
  hooks.log = log;
  hooks.on_epoch = [&](const Model<float>& m, const EpochMetrics& em) {
    history.push_back(em);
    atomic_write_file(out / "metrics.csv", metrics_csv(history));
    save_checkpoint(out / "last.ckpt", m, em.epoch + 1);
  };
  train(model, train_set, test_set, e.train, hooks);
  save_checkpoint(out / "final.ckpt", model, e.train.epochs);

  const EvalResult r = evaluate(model, test_set, e.model.mask, e.train.eval_batch);
  const CalibrationReport cal = ece(r.confidences, r.correct);
  char line[160];
  std::snprintf(line, sizeof line, "final (%s mask): test_acc %.6g test_loss %.6g ece %.6g",
                e.model.mask.to_string().c_str(), r.accuracy, r.loss, cal.ece);
  log(line);
  const std::chrono::duration<double> wall = std::chrono::steady_clock::now() - started;
  std::snprintf(line, sizeof line, "wall time %.1f s", wall.count());
  log(line);
  return 0;
}

int cmd_eval(const EvalArgs& args) {
  Checkpoint ck = load_checkpoint(args.checkpoint);
  const MaskKind mask = args.mask.empty() ? ck.model.config.mask : MaskKind::parse(args.mask);

  ExperimentConfig where;
  where.dataset = args.dataset;
  where.data_dir = args.data_dir;
  DatasetPair data = load_dataset(args.dataset, resolve_data_dir(where));
  const Dataset test = head(data.test, args.limit);
  data = {};

  const EvalResult r = evaluate(ck.model, test, mask, args.batch);
  const CalibrationReport cal = ece(r.confidences, r.correct);
  std::printf("checkpoint %s (epoch %zu), %s mask, %zu images\n", args.checkpoint.c_str(),
              ck.epoch, mask.to_string().c_str(), test.size());
  std::printf("accuracy %.6g\nloss %.6g\nece %.6g\n", r.accuracy, r.loss, cal.ece);

  if (!args.calibration_csv.empty()) {
    std::string csv = "bin,lower,upper,count,accuracy,confidence\n";
    char buf[160];
    for (std::size_t b = 0; b < cal.bins.size(); ++b) {
      const auto& bin = cal.bins[b];
      std::snprintf(buf, sizeof buf, "%zu,%.6g,%.6g,%zu,%.6g,%.6g\n", b, bin.lower, bin.upper,
                    bin.count, bin.accuracy, bin.confidence);
      csv += buf;
    }
    atomic_write_file(args.calibration_csv, csv);
  }

  if (!args.dump_spec.empty()) {
    const DumpSpec spec = parse_dump_spec(args.dump_spec);
    for (std::size_t l : spec.layers) {
      if (l > ck.model.config.depth) throw ConfigError("--dump-attn: layer " + std::to_string(l) + " exceeds depth");
    }
    for (std::size_t h : spec.heads) {
      if (h > ck.model.config.num_heads) throw ConfigError("--dump-attn: head " + std::to_string(h) + " exceeds head count");
    }
    std::vector<std::size_t> idx(test.size());
    std::iota(idx.begin(), idx.end(), std::size_t{0});
    std::mt19937_64 rng(args.seed);
    std::shuffle(idx.begin(), idx.end(), rng);
    idx.resize(std::min(spec.samples, idx.size()));
    std::sort(idx.begin(), idx.end());

    std::vector<AttentionRecord> records;
    ForwardOptions fo;
    fo.mask = mask;
    fo.capture = &records;
    fo.capture_layers = spec.layers;
    Tape<float> tape;
    forward(ck.model, tape.constant(gather_images(test, idx)), fo);
    std::size_t written = 0;
    for (const auto& rec : records) {
      if (!spec.heads.empty() &&
          std::find(spec.heads.begin(), spec.heads.end(), rec.head) == spec.heads.end()) {
        continue;
      }
      write_attention_dump(fs::path(args.dump_dir) / dump_name(idx[rec.sample], rec.layer, rec.head), rec);
      ++written;
    }
    std::printf("wrote %zu attention dumps for %zu images to %s\n", written, idx.size(),
                args.dump_dir.c_str());
  }
  return 0;
}

int cmd_analyze(const AnalyzeArgs& args) {
  std::vector<fs::path> files;
  for (const auto& p : args.paths) {
    if (fs::is_directory(p)) {
      std::vector<fs::path> found;
      for (const auto& entry : fs::directory_iterator(p)) {
        if (entry.path().extension() == ".atnr") found.push_back(entry.path());
      }
      std::sort(found.begin(), found.end());
      files.insert(files.end(), found.begin(), found.end());
    } else {
      files.emplace_back(p);
    }
  }
  if (files.empty()) throw ConfigError("analyze: no attention dumps given");
  const auto heads = analyze_dumps(files, args.threshold);
  const fs::path out = args.out_dir;
  atomic_write_file(out / "spectrum.csv", spectrum_csv(heads));
  const std::string summary = effective_rank_csv(heads, args.threshold);
  atomic_write_file(out / "effective_rank.csv", summary);
  std::fputs(summary.c_str(), stdout);
  return 0;
}

int cmd_flops(std::uint64_t n, std::uint64_t d) {
  const std::uint64_t bi = attention_flops(n, d, FlopsKind::Bidirectional);
  const std::uint64_t ca = attention_flops(n, d, FlopsKind::Causal);
  std::printf("n=%llu d=%llu\n", static_cast<unsigned long long>(n), static_cast<unsigned long long>(d));
  std::printf("bidirectional %llu\n", static_cast<unsigned long long>(bi));
  std::printf("causal        %llu\n", static_cast<unsigned long long>(ca));
  std::printf("difference    %llu\n", static_cast<unsigned long long>(bi - ca));
  return 0;
}

}  // namespace illama::cli
