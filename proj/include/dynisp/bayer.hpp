#pragma once

// RGGB Bayer helpers. A mosaic is (n, 1, H, W) with R at (even row, even col),
// G at (even, odd) and (odd, even), B at (odd, odd). The packed form is
// (n, 4, H/2, W/2) with channels (R, G_r, G_b, B), i.e. pixel_unshuffle(2).

#include <string>
#include <vector>

#include "dynisp/conv.hpp"
#include "dynisp/spatial.hpp"

namespace dynisp {

template <class T>
BasicTensor<T> pack_rggb(const BasicTensor<T>& mosaic) {
  const Shape s = mosaic.shape();
  if (s.c != 1 || s.h % 2 != 0 || s.w % 2 != 0) {
    throw std::invalid_argument("pack_rggb: expected (n, 1, even, even) mosaic, got " + to_string(s));
  }
  return pixel_unshuffle(mosaic, 2);
}

template <class T>
BasicTensor<T> unpack_rggb(const BasicTensor<T>& packed) {
  if (packed.shape().c != 4) throw std::invalid_argument("unpack_rggb: expected 4 channels, got " + to_string(packed.shape()));
  return pixel_shuffle(packed, 2);
}

namespace detail {

/// Calls tap(src_y, src_x, weight) for every mosaic sample feeding output
/// channel `c` at (y, x). Source coordinates are already reflected.
template <class Tap>
void demosaic_taps(std::size_t H, std::size_t W, std::size_t y, std::size_t x, int c, Tap&& tap) {
  const long yy = static_cast<long>(y), xx = static_cast<long>(x);
  auto at = [&](long dy, long dx, double w) {
    tap(static_cast<std::size_t>(reflect_index(yy + dy, static_cast<long>(H))),
        static_cast<std::size_t>(reflect_index(xx + dx, static_cast<long>(W))), w);
  };
  auto cross = [&] { at(-1, 0, 0.25); at(1, 0, 0.25); at(0, -1, 0.25); at(0, 1, 0.25); };
  auto diag = [&] { at(-1, -1, 0.25); at(-1, 1, 0.25); at(1, -1, 0.25); at(1, 1, 0.25); };
  auto vert = [&] { at(-1, 0, 0.5); at(1, 0, 0.5); };
  auto horz = [&] { at(0, -1, 0.5); at(0, 1, 0.5); };
  const int site = y % 2 == 0 ? (x % 2 == 0 ? 0 : 1) : (x % 2 == 0 ? 1 : 2);
  if (site == c) return at(0, 0, 1.0);
  if (c == 1) return cross();
  if (site != 1) return diag();
  // Green site: red neighbours lie along the row on red rows.
  if ((c == 0) == (y % 2 == 0)) return horz();
  vert();
}

}  // namespace detail

/// Bilinear demosaic of a packed RGGB tensor to full-resolution RGB. Borders
/// use reflect padding, which keeps the colour phase of mirrored samples.
template <class T>
BasicTensor<T> demosaic_bilinear(const BasicTensor<T>& packed) {
  const Shape ps = packed.shape();
  if (ps.c != 4 || ps.h < 1 || ps.w < 1) {
    throw std::invalid_argument("demosaic_bilinear: expected packed (n, 4, h, w), got " + to_string(ps));
  }
  const std::size_t H = ps.h * 2, W = ps.w * 2;
  auto src = [ps](std::size_t n, std::size_t y, std::size_t x) {
    return ((n * 4 + (y % 2) * 2 + (x % 2)) * ps.h + y / 2) * ps.w + x / 2;
  };
  const auto pv = packed.values();
  std::vector<T> out(ps.n * 3 * H * W);
  for (std::size_t n = 0; n < ps.n; ++n)
    for (int c = 0; c < 3; ++c)
      for (std::size_t y = 0; y < H; ++y)
        for (std::size_t x = 0; x < W; ++x) {
          T acc = T(0);
          detail::demosaic_taps(H, W, y, x, c, [&](std::size_t sy, std::size_t sx, double w) {
            acc += static_cast<T>(w) * pv[src(n, sy, sx)];
          });
          out[((n * 3 + c) * H + y) * W + x] = acc;
        }
  return detail::make_result<T>(Shape{ps.n, 3, H, W}, std::move(out), "demosaic_bilinear", {&packed},
                                [packed, ps, H, W, src](std::span<const T> g, std::span<const T>) {
                                  T* gp = detail::grad_of(packed);
                                  if (!gp) return;
                                  for (std::size_t n = 0; n < ps.n; ++n)
                                    for (int c = 0; c < 3; ++c)
                                      for (std::size_t y = 0; y < H; ++y)
                                        for (std::size_t x = 0; x < W; ++x) {
                                          const T gy = g[((n * 3 + c) * H + y) * W + x];
                                          detail::demosaic_taps(H, W, y, x, c, [&](std::size_t sy, std::size_t sx, double w) {
                                            gp[src(n, sy, sx)] += static_cast<T>(w) * gy;
                                          });
                                        }
                                });
}

/// Samples an RGB image onto an RGGB mosaic and packs it.
template <class T>
BasicTensor<T> mosaic_rggb(const BasicTensor<T>& rgb) {
  const Shape s = rgb.shape();
  if (s.c != 3 || s.h % 2 != 0 || s.w % 2 != 0) {
    throw std::invalid_argument("mosaic_rggb: expected (n, 3, even, even), got " + to_string(s));
  }
  std::vector<T> m(s.n * s.plane());
  for (std::size_t n = 0; n < s.n; ++n)
    for (std::size_t y = 0; y < s.h; ++y)
      for (std::size_t x = 0; x < s.w; ++x) {
        const std::size_t c = y % 2 == 0 ? (x % 2 == 0 ? 0 : 1) : (x % 2 == 0 ? 1 : 2);
        m[(n * s.h + y) * s.w + x] = rgb(n, c, y, x);
      }
  return pack_rggb(BasicTensor<T>(Shape{s.n, 1, s.h, s.w}, std::move(m)));
}

}  // namespace dynisp
