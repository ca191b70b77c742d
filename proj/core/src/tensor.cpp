#include "poolgen/tensor.hpp"

#include <cmath>
#include <cstdio>
#include <stdexcept>

#include "poolgen/rng.hpp"

namespace poolgen {

std::string Shape::str() const {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "(%d,%d,%d,%d)", n, c, h, w);
  return buf;
}

void check_shape(const Shape& s) {
  if (s.n < 1 || s.c < 1 || s.h < 1 || s.w < 1) {
    throw std::invalid_argument("invalid tensor shape " + s.str() +
                                ": all dimensions must be >= 1");
  }
}

Tensor::Tensor(const Shape& s) : shape_(s) {
  check_shape(s);
  data_.assign(s.count(), 0.0);
}

Tensor::Tensor(const Shape& s, std::vector<double> values)
    : shape_(s), data_(std::move(values)) {
  check_shape(s);
  if (data_.size() != s.count()) {
    throw std::invalid_argument("tensor data length " +
                                std::to_string(data_.size()) +
                                " does not match shape " + s.str());
  }
}

Tensor Tensor::gaussian(const Shape& s, double mean, double stddev,
                        std::uint64_t seed) {
  if (stddev < 0.0) {
    throw std::invalid_argument("gaussian init requires stddev >= 0");
  }
  Tensor t(s);
  Rng rng(seed);
  for (double& v : t.data_) v = rng.normal(mean, stddev);
  return t;
}

bool Tensor::all_finite() const {
  for (double v : data_)
    if (!std::isfinite(v)) return false;
  return true;
}

void PoolGeometry::validate(const Shape& in) const {
  check_shape(in);
  if (region_h < 1 || region_w < 1 || stride < 1 || padding < 0) {
    throw std::invalid_argument(
        "invalid pool geometry: region and stride must be positive, "
        "padding non-negative");
  }
  if (in.h + 2 * padding < region_h || in.w + 2 * padding < region_w) {
    throw std::invalid_argument("pool region exceeds padded input " +
                                in.str());
  }
  if (out_h(in.h) < 1 || out_w(in.w) < 1) {
    throw std::invalid_argument("pool geometry yields empty output for " +
                                in.str());
  }
}

RegionScanner::RegionScanner(const Shape& in, const PoolGeometry& g)
    : in_(in), geom_(g) {
  g.validate(in);
  out_h_ = g.out_h(in.h);
  out_w_ = g.out_w(in.w);
}

void RegionScanner::gather(const Tensor& t, int n, int c, int oy, int ox,
                           std::span<double> values,
                           std::span<std::ptrdiff_t> indices) const {
  const int y0 = oy * geom_.stride - geom_.padding;
  const int x0 = ox * geom_.stride - geom_.padding;
  int slot = 0;
  for (int ky = 0; ky < geom_.region_h; ++ky) {
    const int y = y0 + ky;
    for (int kx = 0; kx < geom_.region_w; ++kx, ++slot) {
      const int x = x0 + kx;
      if (y < 0 || y >= in_.h || x < 0 || x >= in_.w) {
        values[slot] = 0.0;
        indices[slot] = -1;
      } else {
        const std::size_t i = t.index(n, c, y, x);
        values[slot] = t[i];
        indices[slot] = static_cast<std::ptrdiff_t>(i);
      }
    }
  }
}

Matrix matmul(const MatView& a, const MatView& b) {
  if (a.cols != b.rows) {
    throw std::invalid_argument("matmul dimension mismatch: " +
                                std::to_string(a.cols) + " vs " +
                                std::to_string(b.rows));
  }
  Matrix out(a.rows, b.cols);
  for (int i = 0; i < a.rows; ++i) {
    for (int k = 0; k < a.cols; ++k) {
      const double aik = a.at(i, k);
      if (aik == 0.0) continue;
      for (int j = 0; j < b.cols; ++j) {
        out.at(i, j) += aik * b.at(k, j);
      }
    }
  }
  return out;
}

Matrix transpose(const MatView& m) {
  Matrix out(m.cols, m.rows);
  for (int r = 0; r < m.rows; ++r)
    for (int c = 0; c < m.cols; ++c) out.at(c, r) = m.at(r, c);
  return out;
}

}  // namespace poolgen
