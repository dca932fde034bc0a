#pragma once

// Dataset ingestion: big-endian IDX (MNIST/FashionMNIST) and CIFAR-10 binary
// batches. Pixels are scaled to [0,1] at load time; per-channel
// standardization is applied separately from train-split statistics.

#include <cstdint>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <span>
#include <string>
#include <vector>

#include "wcc/data_error.hpp"
#include "wcc/tensor.hpp"

namespace wcc {

struct Dataset {
  long count = 0, channels = 0, height = 0, width = 0;
  std::vector<float> images;  // count*channels*height*width
  std::vector<long> labels;

  long sample_values() const { return channels * height * width; }

  long num_classes() const {
    long m = 0;
    for (long l : labels) m = std::max(m, l);
    return m + 1;
  }

  Dataset subset(long n) const {
    Dataset d = *this;
    if (n >= count || n <= 0) return d;
    d.count = n;
    d.images.resize(static_cast<std::size_t>(n) * sample_values());
    d.labels.resize(static_cast<std::size_t>(n));
    return d;
  }
};

namespace detail {

inline std::uint32_t read_be_u32(std::istream& is, const std::string& what) {
  unsigned char b[4];
  is.read(reinterpret_cast<char*>(b), 4);
  if (!is) throw DataError(DataError::Kind::kTruncated, "idx: truncated " + what);
  return std::uint32_t(b[0]) << 24 | std::uint32_t(b[1]) << 16 | std::uint32_t(b[2]) << 8 |
         std::uint32_t(b[3]);
}

inline std::ifstream open_binary(const std::filesystem::path& p) {
  std::ifstream is(p, std::ios::binary);
  if (!is) throw DataError(DataError::Kind::kMissingFile, "cannot open: " + p.string());
  return is;
}

}  // namespace detail

inline constexpr std::uint32_t kIdxImagesMagic = 0x803;
inline constexpr std::uint32_t kIdxLabelsMagic = 0x801;

inline Dataset load_idx(const std::filesystem::path& images_path,
                        const std::filesystem::path& labels_path) {
  auto is = detail::open_binary(images_path);
  if (detail::read_be_u32(is, "image magic") != kIdxImagesMagic)
    throw DataError(DataError::Kind::kBadMagic, "idx: bad image magic in " + images_path.string());
  const std::uint32_t count = detail::read_be_u32(is, "image count");
  const std::uint32_t rows = detail::read_be_u32(is, "rows");
  const std::uint32_t cols = detail::read_be_u32(is, "cols");
  std::vector<unsigned char> pixels(static_cast<std::size_t>(count) * rows * cols);
  is.read(reinterpret_cast<char*>(pixels.data()), static_cast<std::streamsize>(pixels.size()));
  if (!is) throw DataError(DataError::Kind::kTruncated, "idx: truncated pixels in " + images_path.string());

  auto ls = detail::open_binary(labels_path);
  if (detail::read_be_u32(ls, "label magic") != kIdxLabelsMagic)
    throw DataError(DataError::Kind::kBadMagic, "idx: bad label magic in " + labels_path.string());
  const std::uint32_t lcount = detail::read_be_u32(ls, "label count");
  if (lcount != count)
    throw DataError(DataError::Kind::kCountMismatch,
                    "idx: " + std::to_string(count) + " images but " + std::to_string(lcount) +
                        " labels");
  std::vector<unsigned char> raw_labels(lcount);
  ls.read(reinterpret_cast<char*>(raw_labels.data()), static_cast<std::streamsize>(lcount));
  if (!ls) throw DataError(DataError::Kind::kTruncated, "idx: truncated labels in " + labels_path.string());

  Dataset d;
  d.count = count;
  d.channels = 1;
  d.height = rows;
  d.width = cols;
  d.images.resize(pixels.size());
  for (std::size_t i = 0; i < pixels.size(); ++i) d.images[i] = pixels[i] / 255.0f;
  d.labels.assign(raw_labels.begin(), raw_labels.end());
  return d;
}

inline void write_idx_images(const std::filesystem::path& path, long count, long rows, long cols,
                             std::span<const unsigned char> pixels) {
  check_shape(static_cast<long>(pixels.size()) == count * rows * cols, "write_idx: size mismatch");
  std::ofstream os(path, std::ios::binary);
  if (!os) throw DataError(DataError::Kind::kMissingFile, "cannot open for write: " + path.string());
  auto put_be = [&](std::uint32_t v) {
    unsigned char b[4] = {static_cast<unsigned char>(v >> 24), static_cast<unsigned char>(v >> 16),
                          static_cast<unsigned char>(v >> 8), static_cast<unsigned char>(v)};
    os.write(reinterpret_cast<const char*>(b), 4);
  };
  put_be(kIdxImagesMagic);
  put_be(static_cast<std::uint32_t>(count));
  put_be(static_cast<std::uint32_t>(rows));
  put_be(static_cast<std::uint32_t>(cols));
  os.write(reinterpret_cast<const char*>(pixels.data()), static_cast<std::streamsize>(pixels.size()));
}

inline void write_idx_labels(const std::filesystem::path& path,
                             std::span<const unsigned char> labels) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw DataError(DataError::Kind::kMissingFile, "cannot open for write: " + path.string());
  auto put_be = [&](std::uint32_t v) {
    unsigned char b[4] = {static_cast<unsigned char>(v >> 24), static_cast<unsigned char>(v >> 16),
                          static_cast<unsigned char>(v >> 8), static_cast<unsigned char>(v)};
    os.write(reinterpret_cast<const char*>(b), 4);
  };
  put_be(kIdxLabelsMagic);
  put_be(static_cast<std::uint32_t>(labels.size()));
  os.write(reinterpret_cast<const char*>(labels.data()), static_cast<std::streamsize>(labels.size()));
}

// CIFAR-10 binary batches: records of 1 label byte + 3072 pixel bytes
// (R, G, B planes of a 32x32 image).
inline Dataset load_cifar10(std::span<const std::filesystem::path> batch_files) {
  check_shape(!batch_files.empty(), "cifar10: no batch files given");
  constexpr long kRecord = 3073;
  Dataset d;
  d.channels = 3;
  d.height = 32;
  d.width = 32;
  for (const auto& path : batch_files) {
    auto is = detail::open_binary(path);
    is.seekg(0, std::ios::end);
    const std::streamoff size = is.tellg();
    is.seekg(0);
    if (size <= 0 || size % kRecord != 0)
      throw DataError(DataError::Kind::kBadFormat,
                      "cifar10: " + path.string() + " size " + std::to_string(size) +
                          " is not a multiple of 3073");
    const long records = static_cast<long>(size / kRecord);
    std::vector<unsigned char> buf(static_cast<std::size_t>(size));
    is.read(reinterpret_cast<char*>(buf.data()), size);
    if (!is) throw DataError(DataError::Kind::kTruncated, "cifar10: short read from " + path.string());
    d.images.reserve(d.images.size() + static_cast<std::size_t>(records) * 3072);
    for (long r = 0; r < records; ++r) {
      const unsigned char* rec = buf.data() + r * kRecord;
      if (rec[0] > 9)
        throw DataError(DataError::Kind::kBadFormat,
                        "cifar10: label byte " + std::to_string(int(rec[0])) + " out of range");
      d.labels.push_back(rec[0]);
      for (long i = 0; i < 3072; ++i) d.images.push_back(rec[1 + i] / 255.0f);
    }
    d.count += records;
  }
  return d;
}

struct NormStats {
  std::vector<float> mean, stddev;
};

inline NormStats compute_norm_stats(const Dataset& d) {
  NormStats s;
  s.mean.assign(d.channels, 0.f);
  s.stddev.assign(d.channels, 0.f);
  const long plane = d.height * d.width;
  const double per_channel = double(d.count) * plane;
  for (long c = 0; c < d.channels; ++c) {
    double sum = 0, sq = 0;
    for (long n = 0; n < d.count; ++n) {
      const float* p = d.images.data() + (n * d.channels + c) * plane;
      for (long i = 0; i < plane; ++i) {
        sum += p[i];
        sq += double(p[i]) * p[i];
      }
    }
    const double mu = sum / per_channel;
    double var = sq / per_channel - mu * mu;
    if (var < 1e-12) var = 1e-12;
    s.mean[c] = static_cast<float>(mu);
    s.stddev[c] = static_cast<float>(std::sqrt(var));
  }
  return s;
}

inline void normalize(Dataset& d, const NormStats& s) {
  check_shape(static_cast<long>(s.mean.size()) == d.channels, "normalize: channel mismatch");
  const long plane = d.height * d.width;
  for (long n = 0; n < d.count; ++n)
    for (long c = 0; c < d.channels; ++c) {
      float* p = d.images.data() + (n * d.channels + c) * plane;
      for (long i = 0; i < plane; ++i) p[i] = (p[i] - s.mean[c]) / s.stddev[c];
    }
}

// Gathers the listed samples into an NCHW batch.
template <typename T>
Tensor<T> batch_tensor(const Dataset& d, std::span<const long> indices) {
  const long sv = d.sample_values();
  Tensor<T> out = Tensor<T>::zeros({static_cast<long>(indices.size()), d.channels, d.height, d.width});
  for (std::size_t i = 0; i < indices.size(); ++i) {
    const float* src = d.images.data() + indices[i] * sv;
    T* dst = out.data().data() + static_cast<long>(i) * sv;
    for (long v = 0; v < sv; ++v) dst[v] = static_cast<T>(src[v]);
  }
  return out;
}

// Dataset root: $WCC_DATA_DIR, falling back to ./data.
inline std::filesystem::path data_root() {
  if (const char* env = std::getenv("WCC_DATA_DIR")) return env;
  return "data";
}

struct DatasetPair {
  Dataset train, test;
};

// Standard IDX file names under <root>/<name>/.
inline DatasetPair load_idx_dataset(const std::filesystem::path& dir) {
  DatasetPair p;
  p.train = load_idx(dir / "train-images-idx3-ubyte", dir / "train-labels-idx1-ubyte");
  p.test = load_idx(dir / "t10k-images-idx3-ubyte", dir / "t10k-labels-idx1-ubyte");
  return p;
}

}  // namespace wcc
