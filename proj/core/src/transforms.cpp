#include "poolgen/transforms.hpp"

#include <cmath>
#include <numbers>
#include <stdexcept>

namespace poolgen {

const char* transform_kind_name(TransformKind k) {
  switch (k) {
    case TransformKind::Rotate: return "rotate";
    case TransformKind::TranslateVertical: return "translate";
    case TransformKind::Scale: return "scale";
  }
  return "?";
}

namespace {

double sample_bilinear(const Tensor& t, int n, int c, double y, double x) {
  const Shape& s = t.shape();
  const int y0 = static_cast<int>(std::floor(y));
  const int x0 = static_cast<int>(std::floor(x));
  const double fy = y - y0;
  const double fx = x - x0;
  auto v = [&](int yy, int xx) {
    return (yy < 0 || yy >= s.h || xx < 0 || xx >= s.w) ? 0.0
                                                        : t.at(n, c, yy, xx);
  };
  return v(y0, x0) * (1.0 - fy) * (1.0 - fx) +
         v(y0, x0 + 1) * (1.0 - fy) * fx + v(y0 + 1, x0) * fy * (1.0 - fx) +
         v(y0 + 1, x0 + 1) * fy * fx;
}

// Inverse-maps every output pixel through `src`, which returns source
// (y, x) coordinates.
template <typename SrcFn>
Tensor resample(const Tensor& images, SrcFn&& src) {
  const Shape& s = images.shape();
  Tensor out(s);
  for (int n = 0; n < s.n; ++n)
    for (int c = 0; c < s.c; ++c)
      for (int y = 0; y < s.h; ++y)
        for (int x = 0; x < s.w; ++x) {
          const auto [sy, sx] = src(static_cast<double>(y),
                                    static_cast<double>(x));
          out.at(n, c, y, x) = sample_bilinear(images, n, c, sy, sx);
        }
  return out;
}

}  // namespace

Tensor apply_transform(const Tensor& images, const TransformSpec& spec) {
  const Shape& s = images.shape();
  const double cy = (s.h - 1) / 2.0;
  const double cx = (s.w - 1) / 2.0;
  switch (spec.kind) {
    case TransformKind::Rotate: {
      const double rad = spec.amount * std::numbers::pi / 180.0;
      const double cs = std::cos(rad);
      const double sn = std::sin(rad);
      return resample(images, [&](double y, double x) {
        const double dy = y - cy;
        const double dx = x - cx;
        // Inverse rotation of the output grid.
        return std::pair{cy + sn * dx + cs * dy, cx + cs * dx - sn * dy};
      });
    }
    case TransformKind::TranslateVertical: {
      const int shift = static_cast<int>(std::lround(spec.amount));
      const Shape& sh = images.shape();
      Tensor out(sh);
      for (int n = 0; n < sh.n; ++n)
        for (int c = 0; c < sh.c; ++c)
          for (int y = 0; y < sh.h; ++y) {
            const int sy = y - shift;
            if (sy < 0 || sy >= sh.h) continue;
            for (int x = 0; x < sh.w; ++x) {
              out.at(n, c, y, x) = images.at(n, c, sy, x);
            }
          }
      return out;
    }
    case TransformKind::Scale: {
      if (!(spec.amount > 0.0)) {
        throw std::invalid_argument("scale factor must be positive");
      }
      const double inv = 1.0 / spec.amount;
      return resample(images, [&](double y, double x) {
        return std::pair{cy + (y - cy) * inv, cx + (x - cx) * inv};
      });
    }
  }
  throw std::logic_error("unreachable");
}

std::vector<TransformSpec> default_sweep_grid() {
  std::vector<TransformSpec> grid;
  for (int deg = 0; deg <= 40; deg += 5) {
    grid.push_back({TransformKind::Rotate, static_cast<double>(deg)});
  }
  for (int px = 0; px <= 8; ++px) {
    grid.push_back({TransformKind::TranslateVertical, static_cast<double>(px)});
  }
  for (int i = 6; i <= 14; ++i) {
    grid.push_back({TransformKind::Scale, i / 10.0});
  }
  return grid;
}

}  // namespace poolgen
