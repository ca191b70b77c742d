#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

namespace poolgen {

// Shape of a dense 4-d activation array: (batch, channel, row, col).
struct Shape {
  int n = 0;
  int c = 0;
  int h = 0;
  int w = 0;

  std::size_t count() const {
    return static_cast<std::size_t>(n) * static_cast<std::size_t>(c) *
           static_cast<std::size_t>(h) * static_cast<std::size_t>(w);
  }
  bool operator==(const Shape&) const = default;
  std::string str() const;
};

// Throws std::invalid_argument unless every dimension is >= 1.
void check_shape(const Shape& s);

// Dense f64 tensor, row-major (n, c, h, w). Immutable by convention once an
// operation has produced it; writers own their tensor exclusively.
class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(const Shape& s);
  Tensor(const Shape& s, std::vector<double> values);

  static Tensor zeros(const Shape& s) { return Tensor(s); }
  static Tensor gaussian(const Shape& s, double mean, double stddev,
                         std::uint64_t seed);

  const Shape& shape() const { return shape_; }
  std::size_t size() const { return data_.size(); }
  bool empty() const { return data_.empty(); }

  std::size_t index(int n, int c, int y, int x) const {
    return ((static_cast<std::size_t>(n) * shape_.c + c) * shape_.h + y) *
               shape_.w +
           x;
  }
  double at(int n, int c, int y, int x) const {
    return data_[index(n, c, y, x)];
  }
  double& at(int n, int c, int y, int x) { return data_[index(n, c, y, x)]; }

  double operator[](std::size_t i) const { return data_[i]; }
  double& operator[](std::size_t i) { return data_[i]; }

  std::span<const double> data() const { return data_; }
  std::span<double> data() { return data_; }

  bool all_finite() const;

 private:
  Shape shape_{};
  std::vector<double> data_;
};

// Pooling window grid: region extent, stride, zero padding. The pooled
// vector length N = region_h * region_w is fixed per layer; padded slots
// carry value 0.0 and averages always divide by the full N.
struct PoolGeometry {
  int region_h = 2;
  int region_w = 2;
  int stride = 2;
  int padding = 0;

  int region_len() const { return region_h * region_w; }
  int out_h(int in_h) const {
    return (in_h + 2 * padding - region_h) / stride + 1;
  }
  int out_w(int in_w) const {
    return (in_w + 2 * padding - region_w) / stride + 1;
  }
  // Throws unless fields are positive and the output grid is non-empty.
  void validate(const Shape& in) const;
  bool operator==(const PoolGeometry&) const = default;
};

// Enumerates pooling windows of a tensor under a geometry. Windows are
// visited in (n, c, oy, ox) lexicographic order; that order is part of the
// contract (stochastic pooling and gradient reductions rely on it).
class RegionScanner {
 public:
  RegionScanner(const Shape& in, const PoolGeometry& g);

  int out_h() const { return out_h_; }
  int out_w() const { return out_w_; }
  int region_len() const { return geom_.region_len(); }
  std::size_t region_count() const {
    return static_cast<std::size_t>(in_.n) * in_.c * out_h_ * out_w_;
  }
  const Shape& input_shape() const { return in_; }
  const PoolGeometry& geometry() const { return geom_; }

  // Fills the window anchored at output coordinate (oy, ox): values carry
  // 0.0 at padded slots, indices carry the flat input offset or -1 there.
  void gather(const Tensor& t, int n, int c, int oy, int ox,
              std::span<double> values, std::span<std::ptrdiff_t> indices) const;

 private:
  Shape in_;
  PoolGeometry geom_;
  int out_h_ = 0;
  int out_w_ = 0;
};

struct Region {
  int n = 0;
  int c = 0;
  int oy = 0;
  int ox = 0;
  std::span<const double> values;
  std::span<const std::ptrdiff_t> input_index;  // -1 where padded
};

template <typename Fn>
void for_each_region(const Tensor& t, const PoolGeometry& g, Fn&& fn) {
  RegionScanner scan(t.shape(), g);
  std::vector<double> vals(scan.region_len());
  std::vector<std::ptrdiff_t> idx(scan.region_len());
  for (int n = 0; n < t.shape().n; ++n)
    for (int c = 0; c < t.shape().c; ++c)
      for (int oy = 0; oy < scan.out_h(); ++oy)
        for (int ox = 0; ox < scan.out_w(); ++ox) {
          scan.gather(t, n, c, oy, ox, vals, idx);
          fn(Region{n, c, oy, ox, vals, idx});
        }
}

// Minimal 2-d support for the dense layer.
struct Matrix {
  int rows = 0;
  int cols = 0;
  std::vector<double> data;

  Matrix() = default;
  Matrix(int r, int c)
      : rows(r), cols(c), data(static_cast<std::size_t>(r) * c, 0.0) {}

  double at(int r, int c) const {
    return data[static_cast<std::size_t>(r) * cols + c];
  }
  double& at(int r, int c) {
    return data[static_cast<std::size_t>(r) * cols + c];
  }
};

struct MatView {
  const double* data = nullptr;
  int rows = 0;
  int cols = 0;

  static MatView of(const Matrix& m) { return {m.data.data(), m.rows, m.cols}; }
  double at(int r, int c) const {
    return data[static_cast<std::size_t>(r) * cols + c];
  }
};

Matrix matmul(const MatView& a, const MatView& b);
Matrix transpose(const MatView& m);

}  // namespace poolgen
