#pragma once

#include <cstddef>
#include <random>
#include <vector>

#include "illama/tensor.hpp"

namespace illama {

/// Draw from Beta(alpha, alpha) as a ratio of gamma variates.
double sample_beta(double alpha, std::mt19937_64& rng);

/// Random partner for every sample of a batch.
std::vector<std::size_t> random_pairing(std::size_t batch, std::mt19937_64& rng);

/// Half-open pixel rectangle [y0,y1) x [x0,x1).
struct CutBox {
  std::size_t y0 = 0, y1 = 0, x0 = 0, x1 = 0;
  std::size_t area() const { return (y1 - y0) * (x1 - x0); }
};

/// Box with sides round(sqrt(1-lambda) * side) around a uniform centre,
/// clipped to the image.
CutBox sample_cut_box(std::size_t height, std::size_t width, double lambda, std::mt19937_64& rng);

/// images [B,C,H,W], targets [B,K]; sample i becomes
/// lambda * x_i + (1 - lambda) * x_pair[i].
template <Real T>
void mixup_with(Tensor<T>& images, Tensor<T>& targets, const std::vector<std::size_t>& pair,
                double lambda);

/// Pastes the box from the paired image; labels mix by the realised area.
/// Returns the realised lambda = 1 - area / (H*W).
template <Real T>
double cutmix_with(Tensor<T>& images, Tensor<T>& targets, const std::vector<std::size_t>& pair,
                   const CutBox& box);

/// Sampled variants. Return the lambda actually applied.
template <Real T>
double mixup(Tensor<T>& images, Tensor<T>& targets, double alpha, std::mt19937_64& rng);

template <Real T>
double cutmix(Tensor<T>& images, Tensor<T>& targets, double alpha, std::mt19937_64& rng);

/// Applies mixup or cutmix to a batch. With both enabled, one of the two is
/// chosen per batch with equal probability; with neither, targets are left
/// as given.
template <Real T>
void mix_batch(Tensor<T>& images, Tensor<T>& targets, double mixup_alpha, double cutmix_alpha,
               std::mt19937_64& rng);

}  // namespace illama
