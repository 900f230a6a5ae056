#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <vector>

#include "tgfc/tensor.hpp"

namespace tgfc {

namespace detail {

// Two-tap interpolation table for one axis of an integer-factor upsample,
// half-pixel centres, edge samples clamped.
struct LinearTaps {
  std::vector<Index> lo, hi;
  std::vector<double> w_hi;
};

inline LinearTaps linear_taps(Index src, Index scale) {
  LinearTaps t;
  const Index dst = src * scale;
  t.lo.resize(dst);
  t.hi.resize(dst);
  t.w_hi.resize(dst);
  for (Index o = 0; o < dst; ++o) {
    double u = (static_cast<double>(o) + 0.5) / static_cast<double>(scale) - 0.5;
    u = std::max(u, 0.0);
    Index i0 = std::min(static_cast<Index>(std::floor(u)), src - 1);
    Index i1 = std::min(i0 + 1, src - 1);
    t.lo[o] = i0;
    t.hi[o] = i1;
    t.w_hi[o] = (i0 == i1) ? 0.0 : u - static_cast<double>(i0);
  }
  return t;
}

inline double cubic_weight(double x) {
  // Keys kernel, a = -0.5.
  constexpr double a = -0.5;
  x = std::abs(x);
  if (x <= 1.0) return ((a + 2.0) * x - (a + 3.0)) * x * x + 1.0;
  if (x < 2.0) return ((a * x - 5.0 * a) * x + 8.0 * a) * x - 4.0 * a;
  return 0.0;
}

}  // namespace detail

/// Bilinear upsample by an integer factor. scale == 1 returns the input unchanged.
template <typename Scalar>
Tensor<Scalar> bilinear_upsample(const Tensor<Scalar>& x, Index scale) {
  if (scale < 1) throw ConfigError("upsample scale must be >= 1");
  if (scale == 1) return x;
  const auto ty = detail::linear_taps(x.height(), scale);
  const auto tx = detail::linear_taps(x.width(), scale);
  const Index H = x.height() * scale, W = x.width() * scale;
  Tensor<Scalar> out(x.channels(), H, W);
  for (Index c = 0; c < x.channels(); ++c) {
    auto src = x.plane(c);
    auto dst = out.plane(c);
    for (Index y = 0; y < H; ++y) {
      const Scalar wy1 = static_cast<Scalar>(ty.w_hi[y]), wy0 = Scalar(1) - wy1;
      for (Index xx = 0; xx < W; ++xx) {
        const Scalar wx1 = static_cast<Scalar>(tx.w_hi[xx]), wx0 = Scalar(1) - wx1;
        const Scalar top = wx0 * src(ty.lo[y], tx.lo[xx]) + wx1 * src(ty.lo[y], tx.hi[xx]);
        const Scalar bot = wx0 * src(ty.hi[y], tx.lo[xx]) + wx1 * src(ty.hi[y], tx.hi[xx]);
        dst(y, xx) = wy0 * top + wy1 * bot;
      }
    }
  }
  return out;
}

/// Adjoint of bilinear_upsample: scatters an upsampled gradient back to the source grid.
template <typename Scalar>
Tensor<Scalar> bilinear_upsample_adjoint(const Tensor<Scalar>& g, Index scale) {
  if (scale == 1) return g;
  const Index h = g.height() / scale, w = g.width() / scale;
  const auto ty = detail::linear_taps(h, scale);
  const auto tx = detail::linear_taps(w, scale);
  Tensor<Scalar> out(g.channels(), h, w);
  for (Index c = 0; c < g.channels(); ++c) {
    auto src = g.plane(c);
    auto dst = out.plane(c);
    for (Index y = 0; y < g.height(); ++y) {
      const Scalar wy1 = static_cast<Scalar>(ty.w_hi[y]), wy0 = Scalar(1) - wy1;
      for (Index xx = 0; xx < g.width(); ++xx) {
        const Scalar wx1 = static_cast<Scalar>(tx.w_hi[xx]), wx0 = Scalar(1) - wx1;
        const Scalar v = src(y, xx);
        dst(ty.lo[y], tx.lo[xx]) += wy0 * wx0 * v;
        dst(ty.lo[y], tx.hi[xx]) += wy0 * wx1 * v;
        dst(ty.hi[y], tx.lo[xx]) += wy1 * wx0 * v;
        dst(ty.hi[y], tx.hi[xx]) += wy1 * wx1 * v;
      }
    }
  }
  return out;
}

/// Bicubic (Keys, a=-0.5) upsample by an integer factor, edge samples clamped.
template <typename Scalar>
Tensor<Scalar> bicubic_upsample(const Tensor<Scalar>& x, Index scale) {
  if (scale < 1) throw ConfigError("upsample scale must be >= 1");
  if (scale == 1) return x;
  const Index H = x.height() * scale, W = x.width() * scale;
  auto taps = [scale](Index src, Index dst) {
    std::vector<std::array<Index, 4>> idx(dst);
    std::vector<std::array<double, 4>> wt(dst);
    for (Index o = 0; o < dst; ++o) {
      const double u = (static_cast<double>(o) + 0.5) / static_cast<double>(scale) - 0.5;
      const Index base = static_cast<Index>(std::floor(u));
      const double t = u - static_cast<double>(base);
      for (int k = 0; k < 4; ++k) {
        idx[o][k] = std::clamp<Index>(base - 1 + k, 0, src - 1);
        wt[o][k] = detail::cubic_weight(t - (k - 1));
      }
    }
    return std::pair{idx, wt};
  };
  const auto [iy, wy] = taps(x.height(), H);
  const auto [ix, wx] = taps(x.width(), W);
  Tensor<Scalar> out(x.channels(), H, W);
  for (Index c = 0; c < x.channels(); ++c) {
    auto src = x.plane(c);
    auto dst = out.plane(c);
    for (Index y = 0; y < H; ++y)
      for (Index xx = 0; xx < W; ++xx) {
        Scalar acc = 0;
        for (int a = 0; a < 4; ++a) {
          Scalar row = 0;
          for (int b = 0; b < 4; ++b) row += static_cast<Scalar>(wx[xx][b]) * src(iy[y][a], ix[xx][b]);
          acc += static_cast<Scalar>(wy[y][a]) * row;
        }
        dst(y, xx) = acc;
      }
  }
  return out;
}

/// Box-filter downsample by an integer factor; dims must divide evenly.
template <typename Scalar>
Tensor<Scalar> box_downsample(const Tensor<Scalar>& x, Index factor) {
  if (factor < 1) throw ConfigError("downsample factor must be >= 1");
  if (x.height() % factor || x.width() % factor) {
    throw DimensionError("image " + x.shape_string() + " not divisible by " + std::to_string(factor));
  }
  if (factor == 1) return x;
  const Index h = x.height() / factor, w = x.width() / factor;
  Tensor<Scalar> out(x.channels(), h, w);
  const Scalar inv = Scalar(1) / static_cast<Scalar>(factor * factor);
  for (Index c = 0; c < x.channels(); ++c)
    for (Index y = 0; y < h; ++y)
      for (Index xx = 0; xx < w; ++xx)
        out(c, y, xx) = x.plane(c).block(y * factor, xx * factor, factor, factor).sum() * inv;
  return out;
}

template <typename Scalar>
Tensor<Scalar> clamp01(Tensor<Scalar> x) {
  x.data() = x.data().cwiseMax(Scalar(0)).cwiseMin(Scalar(1));
  return x;
}

}  // namespace tgfc
