#include "illama/analysis.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <map>

#include "illama/attention.hpp"
#include "illama/errors.hpp"
#include "illama/svd.hpp"

namespace illama {

template <Real T>
RankSpectrum rank_spectrum(const Tensor<T>& attn) {
  if (attn.rank() != 2 || attn.dim(0) != attn.dim(1)) {
    throw ShapeError("rank_spectrum needs a square matrix, got " + shape_to_string(attn.shape()));
  }
  RankSpectrum s;
  s.singular_values = svd_singular_values(attn);
  double total = 0.0;
  for (double v : s.singular_values) total += v;
  if (!(total > 0.0)) throw UndefinedError("rank_spectrum: zero matrix has no normalised spectrum");
  s.cumulative.resize(s.singular_values.size());
  double acc = 0.0;
  for (std::size_t i = 0; i < s.singular_values.size(); ++i) {
    acc += s.singular_values[i];
    s.cumulative[i] = acc / total;
  }
  return s;
}

std::size_t effective_rank_index(std::span<const double> cumulative, double threshold) {
  if (!(threshold > 0.0 && threshold <= 1.0)) {
    throw RangeError("effective rank threshold must lie in (0,1]");
  }
  if (cumulative.empty()) throw UndefinedError("effective rank of an empty spectrum");
  for (std::size_t k = 0; k < cumulative.size(); ++k) {
    if (cumulative[k] >= threshold) return k + 1;
  }
  return cumulative.size();
}

std::size_t effective_rank_index(const RankSpectrum& s, double threshold) {
  return effective_rank_index(s.cumulative, threshold);
}

std::uint64_t attention_flops(std::uint64_t n, std::uint64_t d, FlopsKind kind) {
  if (n == 0 || d == 0) throw RangeError("attention_flops needs n, d >= 1");
  const std::uint64_t proj = 4 * n * d * d;
  if (kind == FlopsKind::Bidirectional) return proj + 2 * n * n * d;
  return proj + n * n * d + (n * n / 2 + 1) * d;
}

CalibrationReport ece(std::span<const double> confidences, const std::vector<bool>& correct,
                      std::size_t n_bins) {
  if (confidences.empty()) throw UndefinedError("ece of an empty sample");
  if (confidences.size() != correct.size()) {
    throw ShapeError("ece: " + std::to_string(confidences.size()) + " confidences vs " +
                     std::to_string(correct.size()) + " outcomes");
  }
  if (n_bins == 0) throw RangeError("ece needs at least one bin");
  CalibrationReport r;
  r.samples = confidences.size();
  r.bins.resize(n_bins);
  std::vector<double> conf_sum(n_bins, 0.0);
  std::vector<std::size_t> hits(n_bins, 0);
  for (std::size_t i = 0; i < confidences.size(); ++i) {
    const double c = confidences[i];
    if (!(c >= 0.0 && c <= 1.0)) throw RangeError("confidence outside [0,1]");
    const auto b = std::min(static_cast<std::size_t>(c * static_cast<double>(n_bins)), n_bins - 1);
    ++r.bins[b].count;
    conf_sum[b] += c;
    hits[b] += correct[i];
  }
  for (std::size_t b = 0; b < n_bins; ++b) {
    auto& bin = r.bins[b];
    bin.lower = static_cast<double>(b) / static_cast<double>(n_bins);
    bin.upper = static_cast<double>(b + 1) / static_cast<double>(n_bins);
    if (bin.count == 0) continue;
    bin.accuracy = static_cast<double>(hits[b]) / static_cast<double>(bin.count);
    bin.confidence = conf_sum[b] / static_cast<double>(bin.count);
    r.ece += static_cast<double>(bin.count) / static_cast<double>(r.samples) *
             std::abs(bin.accuracy - bin.confidence);
  }
  return r;
}

std::vector<HeadSpectrum> analyze_dumps(const std::vector<std::filesystem::path>& paths,
                                        double threshold) {
  std::map<std::pair<std::size_t, std::size_t>, HeadSpectrum> groups;
  for (const auto& p : paths) {
    const AttentionRecord rec = read_attention_dump(p);
    const RankSpectrum s = rank_spectrum(rec.matrix);
    auto& g = groups[{rec.layer, rec.head}];
    if (g.count == 0) {
      g.layer = rec.layer;
      g.head = rec.head;
      g.cumulative = s.cumulative;
    } else {
      if (g.cumulative.size() != s.cumulative.size()) {
        throw FormatError(p.string() + ": matrix size " + std::to_string(s.cumulative.size()) +
                          " differs from earlier dumps of layer " + std::to_string(rec.layer) +
                          " head " + std::to_string(rec.head));
      }
      for (std::size_t k = 0; k < s.cumulative.size(); ++k) g.cumulative[k] += s.cumulative[k];
    }
    ++g.count;
  }
  std::vector<HeadSpectrum> out;
  for (auto& [key, g] : groups) {
    if (g.count > 1) {
      for (double& c : g.cumulative) c /= static_cast<double>(g.count);
    }
    g.effective_rank = effective_rank_index(g.cumulative, threshold);
    out.push_back(std::move(g));
  }
  return out;
}

std::string spectrum_csv(const std::vector<HeadSpectrum>& heads) {
  std::string out = "layer,head,k,cumulative\n";
  char buf[128];
  for (const auto& h : heads) {
    for (std::size_t k = 0; k < h.cumulative.size(); ++k) {
      std::snprintf(buf, sizeof buf, "%zu,%zu,%zu,%.17g\n", h.layer, h.head, k + 1, h.cumulative[k]);
      out += buf;
    }
  }
  return out;
}

std::string effective_rank_csv(const std::vector<HeadSpectrum>& heads, double threshold) {
  char buf[128];
  std::snprintf(buf, sizeof buf, "layer,head,effective_rank_%g\n", threshold);
  std::string out = buf;
  for (const auto& h : heads) {
    std::snprintf(buf, sizeof buf, "%zu,%zu,%zu\n", h.layer, h.head, h.effective_rank);
    out += buf;
  }
  return out;
}

template RankSpectrum rank_spectrum(const Tensor<float>&);
template RankSpectrum rank_spectrum(const Tensor<double>&);

}  // namespace illama
