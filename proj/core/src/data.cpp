#include "poolgen/data.hpp"

#include <cmath>
#include <fstream>

#include "poolgen/rng.hpp"

namespace poolgen {

namespace {

std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataFormatError("cannot open file: " + path);
  return std::string((std::istreambuf_iterator<char>(in)),
                     std::istreambuf_iterator<char>());
}

std::uint32_t be32(const std::string& buf, std::size_t pos) {
  if (pos + 4 > buf.size()) {
    throw DataFormatError("truncated IDX header");
  }
  std::uint32_t v = 0;
  for (int i = 0; i < 4; ++i) {
    v = (v << 8) | static_cast<unsigned char>(buf[pos + i]);
  }
  return v;
}

}  // namespace

Dataset load_mnist_idx(const std::string& images_path,
                       const std::string& labels_path) {
  const std::string img = read_file(images_path);
  const std::string lab = read_file(labels_path);

  if (be32(img, 0) != 0x00000803u) {
    throw DataFormatError("bad IDX image magic in " + images_path);
  }
  const std::uint32_t n = be32(img, 4);
  const std::uint32_t rows = be32(img, 8);
  const std::uint32_t cols = be32(img, 12);
  const std::size_t want = 16 + static_cast<std::size_t>(n) * rows * cols;
  if (img.size() != want) {
    throw DataFormatError("truncated IDX image payload in " + images_path);
  }

  if (be32(lab, 0) != 0x00000801u) {
    throw DataFormatError("bad IDX label magic in " + labels_path);
  }
  const std::uint32_t n_lab = be32(lab, 4);
  if (lab.size() != 8 + static_cast<std::size_t>(n_lab)) {
    throw DataFormatError("truncated IDX label payload in " + labels_path);
  }
  if (n != n_lab) {
    throw DataFormatError("IDX image/label count mismatch: " +
                          std::to_string(n) + " vs " + std::to_string(n_lab));
  }

  Dataset ds;
  ds.images = Tensor({static_cast<int>(n), 1, static_cast<int>(rows),
                      static_cast<int>(cols)});
  auto out = ds.images.data();
  for (std::size_t i = 0; i < out.size(); ++i) {
    out[i] = static_cast<unsigned char>(img[16 + i]) / 255.0;
  }
  ds.labels.resize(n);
  ds.class_count = 10;
  for (std::uint32_t i = 0; i < n; ++i) {
    const int label = static_cast<unsigned char>(lab[8 + i]);
    if (label > 9) {
      throw DataFormatError("IDX label byte out of range");
    }
    ds.labels[i] = label;
  }
  return ds;
}

Dataset load_cifar10_bin(const std::string& path) {
  constexpr std::size_t kRecord = 3073;
  constexpr int kDim = 32;
  const std::string buf = read_file(path);
  if (buf.empty() || buf.size() % kRecord != 0) {
    throw DataFormatError("CIFAR-10 file length " +
                          std::to_string(buf.size()) +
                          " is not a multiple of 3073: " + path);
  }
  const int n = static_cast<int>(buf.size() / kRecord);
  Dataset ds;
  ds.images = Tensor({n, 3, kDim, kDim});
  ds.labels.resize(n);
  ds.class_count = 10;
  for (int i = 0; i < n; ++i) {
    const std::size_t base = static_cast<std::size_t>(i) * kRecord;
    const int label = static_cast<unsigned char>(buf[base]);
    if (label > 9) {
      throw DataFormatError("CIFAR-10 label byte " + std::to_string(label) +
                            " out of range in record " + std::to_string(i));
    }
    ds.labels[i] = label;
    for (int c = 0; c < 3; ++c)
      for (int y = 0; y < kDim; ++y)
        for (int x = 0; x < kDim; ++x) {
          const std::size_t off = base + 1 +
                                  static_cast<std::size_t>(c) * kDim * kDim +
                                  static_cast<std::size_t>(y) * kDim + x;
          ds.images.at(i, c, y, x) =
              static_cast<unsigned char>(buf[off]) / 255.0;
        }
  }
  return ds;
}

void append_dataset(Dataset& base, const Dataset& extra) {
  if (base.images.empty()) {
    base = extra;
    return;
  }
  const Shape& a = base.images.shape();
  const Shape& b = extra.images.shape();
  if (a.c != b.c || a.h != b.h || a.w != b.w ||
      base.class_count != extra.class_count) {
    throw DataFormatError("cannot append datasets with different shapes");
  }
  std::vector<double> merged(base.images.data().begin(),
                             base.images.data().end());
  merged.insert(merged.end(), extra.images.data().begin(),
                extra.images.data().end());
  base.images = Tensor({a.n + b.n, a.c, a.h, a.w}, std::move(merged));
  base.labels.insert(base.labels.end(), extra.labels.begin(),
                     extra.labels.end());
}

namespace {

constexpr int kCanvas = 16;
constexpr int kStamp = 8;

// Stamp intensity for class `cls` at stamp-local coordinates.
double stamp_value(int cls, int r, int c) {
  switch (cls) {
    case 0:  // filled square
      return 1.0;
    case 1:  // hollow square, 1-pixel border
      return (r == 0 || r == kStamp - 1 || c == 0 || c == kStamp - 1) ? 1.0
                                                                      : 0.0;
    case 2:  // diagonal bar
      return std::abs(r - c) <= 1 ? 1.0 : 0.0;
    case 3: {  // disk
      const double dr = r - 3.5, dc = c - 3.5;
      return dr * dr + dc * dc <= 3.6 * 3.6 ? 1.0 : 0.0;
    }
    default:
      return 0.0;
  }
}

}  // namespace

Dataset synthesize_shapes(int n, std::uint64_t seed, double noise) {
  if (n < 1) throw std::invalid_argument("synthesize_shapes needs n >= 1");
  Dataset ds;
  ds.images = Tensor({n, 1, kCanvas, kCanvas});
  ds.labels.resize(n);
  ds.class_count = 4;
  Rng rng(seed);
  for (int i = 0; i < n; ++i) {
    const int cls = i % 4;
    ds.labels[i] = cls;
    const int oy = 2 + rng.uniform_int(5);  // stamp origin in [2, 6]
    const int ox = 2 + rng.uniform_int(5);
    for (int r = 0; r < kStamp; ++r)
      for (int c = 0; c < kStamp; ++c) {
        ds.images.at(i, 0, oy + r, ox + c) = stamp_value(cls, r, c);
      }
    if (noise > 0.0) {
      for (int y = 0; y < kCanvas; ++y)
        for (int x = 0; x < kCanvas; ++x) {
          double v = ds.images.at(i, 0, y, x) + rng.normal(0.0, noise);
          if (v < 0.0) v = 0.0;
          if (v > 1.0) v = 1.0;
          ds.images.at(i, 0, y, x) = v;
        }
    }
  }
  return ds;
}

std::vector<double> compute_channel_means(const Tensor& images) {
  const Shape& s = images.shape();
  std::vector<double> means(s.c, 0.0);
  const double denom = static_cast<double>(s.n) * s.h * s.w;
  for (int n = 0; n < s.n; ++n)
    for (int c = 0; c < s.c; ++c)
      for (int y = 0; y < s.h; ++y)
        for (int x = 0; x < s.w; ++x) means[c] += images.at(n, c, y, x);
  for (double& m : means) m /= denom;
  return means;
}

Tensor subtract_means(const Tensor& images, std::span<const double> means) {
  const Shape& s = images.shape();
  if (means.size() != static_cast<std::size_t>(s.c)) {
    throw std::invalid_argument("channel mean count mismatch");
  }
  Tensor out = images;
  for (int n = 0; n < s.n; ++n)
    for (int c = 0; c < s.c; ++c)
      for (int y = 0; y < s.h; ++y)
        for (int x = 0; x < s.w; ++x) out.at(n, c, y, x) -= means[c];
  return out;
}

Tensor add_means(const Tensor& images, std::span<const double> means) {
  const Shape& s = images.shape();
  if (means.size() != static_cast<std::size_t>(s.c)) {
    throw std::invalid_argument("channel mean count mismatch");
  }
  Tensor out = images;
  for (int n = 0; n < s.n; ++n)
    for (int c = 0; c < s.c; ++c)
      for (int y = 0; y < s.h; ++y)
        for (int x = 0; x < s.w; ++x) out.at(n, c, y, x) += means[c];
  return out;
}

}  // namespace poolgen
