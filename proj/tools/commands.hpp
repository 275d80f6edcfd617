#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

namespace illama::cli {

struct TrainArgs {
  std::string config_file;
  std::vector<std::pair<std::string, std::string>> overrides;  // flag order, applied last
  bool quiet = false;
};

struct EvalArgs {
  std::string checkpoint;
  std::string dataset = "mnist";
  std::string data_dir;
  std::string mask;  // empty: the checkpoint's inference mask
  std::size_t limit = 0;
  std::size_t batch = 256;
  std::string dump_spec;  // "layers=1 heads=all samples=30"
  std::string dump_dir = "attn_dumps";
  std::uint64_t seed = 0;
  std::string calibration_csv;
};

struct AnalyzeArgs {
  std::vector<std::string> paths;
  std::string out_dir = ".";
  double threshold = 0.8;
};

int cmd_train(const TrainArgs& args);
int cmd_eval(const EvalArgs& args);
int cmd_analyze(const AnalyzeArgs& args);
int cmd_flops(std::uint64_t n, std::uint64_t d);

/// Parsed --dump-attn specification. Empty layer/head lists mean "all".
struct DumpSpec {
  std::vector<std::size_t> layers;
  std::vector<std::size_t> heads;
  std::size_t samples = 30;
};
DumpSpec parse_dump_spec(const std::string& text);

}  // namespace illama::cli
