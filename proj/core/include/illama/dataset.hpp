#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "illama/tensor.hpp"

namespace illama {

/// Images in [0,1] normalised per channel with the training split's
/// mean/std; labels in [0, num_classes).
struct Dataset {
  std::string name;
  std::string split;
  Tensor<float> images;  // [S,C,H,W]
  std::vector<std::uint8_t> labels;
  std::size_t num_classes = 10;
  std::vector<float> mean;  // per channel
  std::vector<float> std;

  std::size_t size() const { return labels.size(); }
  std::size_t channels() const { return images.dim(1); }
  std::size_t height() const { return images.dim(2); }
  std::size_t width() const { return images.dim(3); }
};

struct DatasetPair {
  Dataset train;
  Dataset test;
};

/// data_batch_{1..5}.bin and test_batch.bin of 3073-byte records.
DatasetPair load_cifar10(const std::filesystem::path& dir);

/// IDX files (train-images-idx3-ubyte etc.); 28x28 digits are centred in a
/// zero 32x32 canvas.
DatasetPair load_mnist(const std::filesystem::path& dir);

/// "cifar10" or "mnist".
DatasetPair load_dataset(std::string_view name, const std::filesystem::path& dir);

/// (channels, side) of a dataset name without loading it.
std::pair<std::size_t, std::size_t> dataset_geometry(std::string_view name);

/// First `limit` samples (all when limit is 0 or larger than the set).
Dataset head(const Dataset& d, std::size_t limit);

/// Copies the given samples into a batch [idx.size(),C,H,W].
Tensor<float> gather_images(const Dataset& d, const std::vector<std::size_t>& idx);

// Raw decoders, exposed for tests. Pixels are scaled to [0,1]; no
// normalisation is applied.
void decode_cifar_batch(std::span<const std::uint8_t> bytes, const std::string& what,
                        std::vector<float>& pixels, std::vector<std::uint8_t>& labels);
Tensor<float> decode_idx_images(std::span<const std::uint8_t> bytes, const std::string& what);
std::vector<std::uint8_t> decode_idx_labels(std::span<const std::uint8_t> bytes,
                                            const std::string& what);

/// Computes per-channel mean/std on train and applies them to both splits.
void normalize_pair(DatasetPair& pair);

}  // namespace illama
