#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "illama/tensor.hpp"

namespace illama {

struct RankSpectrum {
  std::vector<double> singular_values;  // descending
  std::vector<double> cumulative;       // c_k = sum_{i<=k} s_i / sum s_i
};

/// UndefinedError for an all-zero matrix; ShapeError unless square.
template <Real T>
RankSpectrum rank_spectrum(const Tensor<T>& attn);

/// Smallest 1-based k with cumulative[k-1] >= threshold; threshold in (0,1].
std::size_t effective_rank_index(const RankSpectrum& s, double threshold = 0.8);
std::size_t effective_rank_index(std::span<const double> cumulative, double threshold = 0.8);

enum class FlopsKind { Bidirectional, Causal };

/// Bidirectional: 4nd^2 + 2n^2 d. Causal: 4nd^2 + n^2 d + (floor(n^2/2) + 1) d.
std::uint64_t attention_flops(std::uint64_t n, std::uint64_t d, FlopsKind kind);

struct CalibrationBin {
  double lower = 0.0;
  double upper = 0.0;
  std::size_t count = 0;
  double accuracy = 0.0;    // 0 when empty
  double confidence = 0.0;  // mean, 0 when empty
};

struct CalibrationReport {
  std::vector<CalibrationBin> bins;
  std::size_t samples = 0;
  double ece = 0.0;
};

/// Equal-width bins over [0,1]; confidence c falls in bin min(floor(c*n), n-1).
CalibrationReport ece(std::span<const double> confidences, const std::vector<bool>& correct,
                      std::size_t n_bins = 15);

/// Spectra of dumps sharing a (layer, head), averaged over files.
struct HeadSpectrum {
  std::size_t layer = 0;
  std::size_t head = 0;
  std::size_t count = 0;  // dumps averaged
  std::vector<double> cumulative;
  std::size_t effective_rank = 0;
};

/// Reads every dump, groups by (layer, head) in ascending order and averages
/// the cumulative curves. FormatError when sizes disagree within a group.
std::vector<HeadSpectrum> analyze_dumps(const std::vector<std::filesystem::path>& paths,
                                        double threshold = 0.8);

/// "layer,head,k,cumulative" rows.
std::string spectrum_csv(const std::vector<HeadSpectrum>& heads);
/// "layer,head,effective_rank_0.8" rows (column named after the threshold).
std::string effective_rank_csv(const std::vector<HeadSpectrum>& heads, double threshold = 0.8);

}  // namespace illama
