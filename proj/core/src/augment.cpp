#include "illama/augment.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "illama/errors.hpp"

namespace illama {

double sample_beta(double alpha, std::mt19937_64& rng) {
  if (!(alpha > 0.0)) throw RangeError("Beta parameter must be positive");
  std::gamma_distribution<double> gamma(alpha, 1.0);
  const double x = gamma(rng);
  const double y = gamma(rng);
  if (x + y == 0.0) return 1.0;
  return x / (x + y);
}

std::vector<std::size_t> random_pairing(std::size_t batch, std::mt19937_64& rng) {
  std::vector<std::size_t> p(batch);
  std::iota(p.begin(), p.end(), std::size_t{0});
  std::shuffle(p.begin(), p.end(), rng);
  return p;
}

CutBox sample_cut_box(std::size_t height, std::size_t width, double lambda, std::mt19937_64& rng) {
  const double ratio = std::sqrt(std::clamp(1.0 - lambda, 0.0, 1.0));
  const auto ch = static_cast<long>(std::lround(ratio * static_cast<double>(height)));
  const auto cw = static_cast<long>(std::lround(ratio * static_cast<double>(width)));
  std::uniform_int_distribution<long> uy(0, static_cast<long>(height) - 1);
  std::uniform_int_distribution<long> ux(0, static_cast<long>(width) - 1);
  const long cy = uy(rng);
  const long cx = ux(rng);
  auto clip = [](long v, std::size_t hi) {
    return static_cast<std::size_t>(std::clamp(v, 0L, static_cast<long>(hi)));
  };
  CutBox b;
  b.y0 = clip(cy - ch / 2, height);
  b.y1 = clip(cy + ch - ch / 2, height);
  b.x0 = clip(cx - cw / 2, width);
  b.x1 = clip(cx + cw - cw / 2, width);
  return b;
}

namespace {

template <Real T>
void check_batch(const Tensor<T>& images, const Tensor<T>& targets,
                 const std::vector<std::size_t>& pair) {
  if (images.rank() != 4 || targets.rank() != 2 || targets.dim(0) != images.dim(0) ||
      pair.size() != images.dim(0)) {
    throw ShapeError("mix: images " + shape_to_string(images.shape()) + ", targets " +
                     shape_to_string(targets.shape()) + ", pairing of " +
                     std::to_string(pair.size()));
  }
  for (std::size_t p : pair) {
    if (p >= pair.size()) throw RangeError("mix: pairing index out of range");
  }
}

template <Real T>
void mix_targets(Tensor<T>& targets, const std::vector<std::size_t>& pair, double lambda) {
  const Tensor<T> orig = targets;
  const std::size_t k = targets.dim(1);
  for (std::size_t i = 0; i < pair.size(); ++i) {
    for (std::size_t j = 0; j < k; ++j) {
      targets.at(i, j) = static_cast<T>(lambda * orig.at(i, j) + (1.0 - lambda) * orig.at(pair[i], j));
    }
  }
}

}  // namespace

template <Real T>
void mixup_with(Tensor<T>& images, Tensor<T>& targets, const std::vector<std::size_t>& pair,
                double lambda) {
  check_batch(images, targets, pair);
  if (!(lambda >= 0.0 && lambda <= 1.0)) throw RangeError("mixup lambda outside [0,1]");
  const Tensor<T> orig = images;
  const std::size_t per = images.numel() / images.dim(0);
  for (std::size_t i = 0; i < pair.size(); ++i) {
    const T* a = orig.ptr() + i * per;
    const T* b = orig.ptr() + pair[i] * per;
    T* out = images.ptr() + i * per;
    for (std::size_t j = 0; j < per; ++j) {
      out[j] = static_cast<T>(lambda * a[j] + (1.0 - lambda) * b[j]);
    }
  }
  mix_targets(targets, pair, lambda);
}

template <Real T>
double cutmix_with(Tensor<T>& images, Tensor<T>& targets, const std::vector<std::size_t>& pair,
                   const CutBox& box) {
  check_batch(images, targets, pair);
  const std::size_t c = images.dim(1), h = images.dim(2), w = images.dim(3);
  if (box.y0 > box.y1 || box.x0 > box.x1 || box.y1 > h || box.x1 > w) {
    throw RangeError("cutmix box outside the image");
  }
  if (box.area() == 0) return 1.0;
  const Tensor<T> orig = images;
  const std::size_t per = c * h * w;
  for (std::size_t i = 0; i < pair.size(); ++i) {
    for (std::size_t ch = 0; ch < c; ++ch) {
      for (std::size_t y = box.y0; y < box.y1; ++y) {
        const std::size_t off = ch * h * w + y * w;
        std::copy(orig.ptr() + pair[i] * per + off + box.x0, orig.ptr() + pair[i] * per + off + box.x1,
                  images.ptr() + i * per + off + box.x0);
      }
    }
  }
  const double lambda = 1.0 - static_cast<double>(box.area()) / static_cast<double>(h * w);
  mix_targets(targets, pair, lambda);
  return lambda;
}

template <Real T>
double mixup(Tensor<T>& images, Tensor<T>& targets, double alpha, std::mt19937_64& rng) {
  const double lambda = sample_beta(alpha, rng);
  mixup_with(images, targets, random_pairing(images.dim(0), rng), lambda);
  return lambda;
}

template <Real T>
double cutmix(Tensor<T>& images, Tensor<T>& targets, double alpha, std::mt19937_64& rng) {
  const double lambda = sample_beta(alpha, rng);
  const CutBox box = sample_cut_box(images.dim(2), images.dim(3), lambda, rng);
  return cutmix_with(images, targets, random_pairing(images.dim(0), rng), box);
}

template <Real T>
void mix_batch(Tensor<T>& images, Tensor<T>& targets, double mixup_alpha, double cutmix_alpha,
               std::mt19937_64& rng) {
  const bool use_mixup = mixup_alpha > 0.0;
  const bool use_cutmix = cutmix_alpha > 0.0;
  if (!use_mixup && !use_cutmix) return;
  bool pick_cutmix = use_cutmix;
  if (use_mixup && use_cutmix) pick_cutmix = std::bernoulli_distribution(0.5)(rng);
  if (pick_cutmix) {
    cutmix(images, targets, cutmix_alpha, rng);
  } else {
    mixup(images, targets, mixup_alpha, rng);
  }
}

#define ILLAMA_INSTANTIATE_AUGMENT(T)                                                          \
  template void mixup_with(Tensor<T>&, Tensor<T>&, const std::vector<std::size_t>&, double);   \
  template double cutmix_with(Tensor<T>&, Tensor<T>&, const std::vector<std::size_t>&,         \
                              const CutBox&);                                                  \
  template double mixup(Tensor<T>&, Tensor<T>&, double, std::mt19937_64&);                     \
  template double cutmix(Tensor<T>&, Tensor<T>&, double, std::mt19937_64&);                    \
  template void mix_batch(Tensor<T>&, Tensor<T>&, double, double, std::mt19937_64&);

ILLAMA_INSTANTIATE_AUGMENT(float)
ILLAMA_INSTANTIATE_AUGMENT(double)

}  // namespace illama
