#include "illama/dataset.hpp"

#include <algorithm>
#include <cmath>

#include "illama/errors.hpp"
#include "illama/io_util.hpp"

namespace illama {

namespace {

constexpr std::size_t kCifarRecord = 3073;
constexpr std::size_t kCifarPixels = 3072;
constexpr std::size_t kMnistSide = 28;
constexpr std::size_t kPaddedSide = 32;

std::vector<std::uint8_t> read_required(const std::filesystem::path& p) {
  if (!std::filesystem::exists(p)) throw FormatError("missing dataset file " + p.string());
  return read_file(p);
}

Dataset make_dataset(std::string name, std::string split, std::vector<float> pixels,
                     std::vector<std::uint8_t> labels, std::size_t c, std::size_t side) {
  Dataset d;
  d.name = std::move(name);
  d.split = std::move(split);
  d.images = Tensor<float>({labels.size(), c, side, side}, std::move(pixels));
  d.labels = std::move(labels);
  d.num_classes = 10;
  return d;
}

std::filesystem::path first_existing(const std::filesystem::path& dir,
                                     std::initializer_list<const char*> names) {
  for (const char* n : names) {
    if (std::filesystem::exists(dir / n)) return dir / n;
  }
  return dir / *names.begin();
}

}  // namespace

void decode_cifar_batch(std::span<const std::uint8_t> bytes, const std::string& what,
                        std::vector<float>& pixels, std::vector<std::uint8_t>& labels) {
  if (bytes.size() != 10000 * kCifarRecord) {
    throw FormatError(what + ": expected " + std::to_string(10000 * kCifarRecord) +
                      " bytes (10000 records of 3073), found " + std::to_string(bytes.size()));
  }
  for (std::size_t r = 0; r < 10000; ++r) {
    const std::uint8_t* rec = bytes.data() + r * kCifarRecord;
    if (rec[0] > 9) {
      throw FormatError(what + ": record " + std::to_string(r) + " has label " +
                        std::to_string(rec[0]));
    }
    labels.push_back(rec[0]);
    for (std::size_t i = 0; i < kCifarPixels; ++i) pixels.push_back(rec[1 + i] / 255.0f);
  }
}

Tensor<float> decode_idx_images(std::span<const std::uint8_t> bytes, const std::string& what) {
  ByteReader r(bytes, what);
  const std::uint32_t magic = r.u32_be();
  if (magic != 2051) {
    throw FormatError(what + ": bad IDX image magic " + std::to_string(magic) + " (expected 2051)");
  }
  const std::uint32_t count = r.u32_be();
  const std::uint32_t rows = r.u32_be();
  const std::uint32_t cols = r.u32_be();
  if (rows != kMnistSide || cols != kMnistSide) {
    throw FormatError(what + ": expected 28x28 images, found " + std::to_string(rows) + "x" +
                      std::to_string(cols));
  }
  const std::size_t payload = static_cast<std::size_t>(count) * rows * cols;
  if (r.remaining() != payload) {
    throw FormatError(what + ": expected " + std::to_string(payload) + " pixel bytes, found " +
                      std::to_string(r.remaining()));
  }
  if (count == 0) throw FormatError(what + ": no images");
  auto px = r.take(payload);
  const std::size_t off = (kPaddedSide - kMnistSide) / 2;
  Tensor<float> out({count, 1, kPaddedSide, kPaddedSide});
  for (std::size_t i = 0; i < count; ++i) {
    for (std::size_t y = 0; y < kMnistSide; ++y) {
      for (std::size_t x = 0; x < kMnistSide; ++x) {
        out[(i * kPaddedSide + y + off) * kPaddedSide + x + off] =
            px[(i * kMnistSide + y) * kMnistSide + x] / 255.0f;
      }
    }
  }
  return out;
}

std::vector<std::uint8_t> decode_idx_labels(std::span<const std::uint8_t> bytes,
                                            const std::string& what) {
  ByteReader r(bytes, what);
  const std::uint32_t magic = r.u32_be();
  if (magic != 2049) {
    throw FormatError(what + ": bad IDX label magic " + std::to_string(magic) + " (expected 2049)");
  }
  const std::uint32_t count = r.u32_be();
  if (r.remaining() != count) {
    throw FormatError(what + ": header promises " + std::to_string(count) + " labels, found " +
                      std::to_string(r.remaining()));
  }
  auto b = r.take(count);
  std::vector<std::uint8_t> labels(b.begin(), b.end());
  for (auto l : labels) {
    if (l > 9) throw FormatError(what + ": label " + std::to_string(l) + " outside [0,9]");
  }
  return labels;
}

void normalize_pair(DatasetPair& pair) {
  Dataset& tr = pair.train;
  const std::size_t c = tr.channels();
  const std::size_t plane = tr.height() * tr.width();
  std::vector<double> sum(c, 0.0), sq(c, 0.0);
  for (std::size_t i = 0; i < tr.size(); ++i) {
    for (std::size_t ch = 0; ch < c; ++ch) {
      const float* p = tr.images.ptr() + (i * c + ch) * plane;
      for (std::size_t j = 0; j < plane; ++j) {
        sum[ch] += p[j];
        sq[ch] += static_cast<double>(p[j]) * p[j];
      }
    }
  }
  const double count = static_cast<double>(tr.size() * plane);
  std::vector<float> mean(c), std(c);
  for (std::size_t ch = 0; ch < c; ++ch) {
    const double m = sum[ch] / count;
    const double var = std::max(sq[ch] / count - m * m, 1e-12);
    mean[ch] = static_cast<float>(m);
    std[ch] = static_cast<float>(std::sqrt(var));
  }
  for (Dataset* d : {&pair.train, &pair.test}) {
    d->mean = mean;
    d->std = std;
    for (std::size_t i = 0; i < d->size(); ++i) {
      for (std::size_t ch = 0; ch < c; ++ch) {
        float* p = d->images.ptr() + (i * c + ch) * plane;
        for (std::size_t j = 0; j < plane; ++j) p[j] = (p[j] - mean[ch]) / std[ch];
      }
    }
  }
}

DatasetPair load_cifar10(const std::filesystem::path& dir) {
  std::vector<float> px;
  std::vector<std::uint8_t> lb;
  px.reserve(50000 * kCifarPixels);
  for (int i = 1; i <= 5; ++i) {
    const auto p = dir / ("data_batch_" + std::to_string(i) + ".bin");
    decode_cifar_batch(read_required(p), p.string(), px, lb);
  }
  DatasetPair out;
  out.train = make_dataset("cifar10", "train", std::move(px), std::move(lb), 3, 32);
  std::vector<float> tpx;
  std::vector<std::uint8_t> tlb;
  const auto tp = dir / "test_batch.bin";
  decode_cifar_batch(read_required(tp), tp.string(), tpx, tlb);
  out.test = make_dataset("cifar10", "test", std::move(tpx), std::move(tlb), 3, 32);
  normalize_pair(out);
  return out;
}

DatasetPair load_mnist(const std::filesystem::path& dir) {
  auto load = [&](const char* images, const char* images_alt, const char* labels,
                  const char* labels_alt, const char* split) {
    const auto ip = first_existing(dir, {images, images_alt});
    const auto lp = first_existing(dir, {labels, labels_alt});
    Tensor<float> img = decode_idx_images(read_required(ip), ip.string());
    std::vector<std::uint8_t> lab = decode_idx_labels(read_required(lp), lp.string());
    if (lab.size() != img.dim(0)) {
      throw FormatError(lp.string() + ": " + std::to_string(lab.size()) + " labels for " +
                        std::to_string(img.dim(0)) + " images");
    }
    Dataset d;
    d.name = "mnist";
    d.split = split;
    d.images = std::move(img);
    d.labels = std::move(lab);
    return d;
  };
  DatasetPair out;
  out.train = load("train-images-idx3-ubyte", "train-images.idx3-ubyte", "train-labels-idx1-ubyte",
                   "train-labels.idx1-ubyte", "train");
  out.test = load("t10k-images-idx3-ubyte", "t10k-images.idx3-ubyte", "t10k-labels-idx1-ubyte",
                  "t10k-labels.idx1-ubyte", "test");
  normalize_pair(out);
  return out;
}

DatasetPair load_dataset(std::string_view name, const std::filesystem::path& dir) {
  if (name == "cifar10") return load_cifar10(dir);
  if (name == "mnist") return load_mnist(dir);
  throw ConfigError("unknown dataset '" + std::string(name) + "' (expected cifar10 or mnist)");
}

std::pair<std::size_t, std::size_t> dataset_geometry(std::string_view name) {
  if (name == "cifar10") return {3, 32};
  if (name == "mnist") return {1, 32};
  throw ConfigError("unknown dataset '" + std::string(name) + "' (expected cifar10 or mnist)");
}

Dataset head(const Dataset& d, std::size_t limit) {
  if (limit == 0 || limit >= d.size()) return d;
  Dataset out;
  out.name = d.name;
  out.split = d.split;
  out.num_classes = d.num_classes;
  out.mean = d.mean;
  out.std = d.std;
  const std::size_t per = d.images.numel() / d.size();
  Shape s = d.images.shape();
  s[0] = limit;
  out.images = Tensor<float>(s, std::vector<float>(d.images.ptr(), d.images.ptr() + limit * per));
  out.labels.assign(d.labels.begin(), d.labels.begin() + static_cast<std::ptrdiff_t>(limit));
  return out;
}

Tensor<float> gather_images(const Dataset& d, const std::vector<std::size_t>& idx) {
  if (idx.empty()) throw ShapeError("gather_images: empty index list");
  const std::size_t per = d.images.numel() / d.size();
  Shape s = d.images.shape();
  s[0] = idx.size();
  Tensor<float> out(s);
  for (std::size_t i = 0; i < idx.size(); ++i) {
    if (idx[i] >= d.size()) throw RangeError("gather_images: index out of range");
    std::copy_n(d.images.ptr() + idx[i] * per, per, out.ptr() + i * per);
  }
  return out;
}

}  // namespace illama
