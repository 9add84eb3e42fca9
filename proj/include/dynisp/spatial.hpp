#pragma once

#include <cmath>
#include <string>
#include <vector>

#include "dynisp/ops.hpp"

namespace dynisp {

/// Layer normalization across channels at every (n, y, x) site, followed by a
/// per-channel affine transform. gamma and beta hold c values each.
template <class T>
BasicTensor<T> layer_norm(const BasicTensor<T>& x, const BasicTensor<T>& gamma, const BasicTensor<T>& beta,
                          T eps = T(1e-6)) {
  const Shape s = x.shape();
  if (gamma.size() != s.c || beta.size() != s.c) {
    throw std::invalid_argument("layer_norm: affine parameters must have " + std::to_string(s.c) + " values");
  }
  const std::size_t plane = s.plane();
  const auto xv = x.values();
  const auto gv = gamma.values();
  const auto bv = beta.values();
  std::vector<T> out(x.size());
  // Normalized values and inverse deviations are kept for the backward pass.
  auto xhat = std::make_shared<std::vector<T>>(x.size());
  auto inv_std = std::make_shared<std::vector<T>>(s.n * plane);
  for (std::size_t n = 0; n < s.n; ++n) {
    for (std::size_t p = 0; p < plane; ++p) {
      double mu = 0.0;
      for (std::size_t c = 0; c < s.c; ++c) mu += xv[(n * s.c + c) * plane + p];
      mu /= static_cast<double>(s.c);
      double var = 0.0;
      for (std::size_t c = 0; c < s.c; ++c) {
        const double d = xv[(n * s.c + c) * plane + p] - mu;
        var += d * d;
      }
      var /= static_cast<double>(s.c);
      const double is = 1.0 / std::sqrt(var + static_cast<double>(eps));
      (*inv_std)[n * plane + p] = static_cast<T>(is);
      for (std::size_t c = 0; c < s.c; ++c) {
        const std::size_t i = (n * s.c + c) * plane + p;
        const T xh = static_cast<T>((xv[i] - mu) * is);
        (*xhat)[i] = xh;
        out[i] = gv[c] * xh + bv[c];
      }
    }
  }
  return detail::make_result<T>(
      s, std::move(out), "layer_norm", {&x, &gamma, &beta},
      [x, gamma, beta, xhat, inv_std, s, plane](std::span<const T> g, std::span<const T>) {
        T* gx = detail::grad_of(x);
        T* gg = detail::grad_of(gamma);
        T* gb = detail::grad_of(beta);
        const auto gv = gamma.values();
        const double inv_c = 1.0 / static_cast<double>(s.c);
        for (std::size_t n = 0; n < s.n; ++n) {
          for (std::size_t p = 0; p < plane; ++p) {
            double mean_d = 0.0, mean_dx = 0.0;
            for (std::size_t c = 0; c < s.c; ++c) {
              const std::size_t i = (n * s.c + c) * plane + p;
              const double d = static_cast<double>(g[i]) * gv[c];
              mean_d += d;
              mean_dx += d * (*xhat)[i];
              if (gg) gg[c] += g[i] * (*xhat)[i];
              if (gb) gb[c] += g[i];
            }
            if (!gx) continue;
            mean_d *= inv_c;
            mean_dx *= inv_c;
            const double is = (*inv_std)[n * plane + p];
            for (std::size_t c = 0; c < s.c; ++c) {
              const std::size_t i = (n * s.c + c) * plane + p;
              const double d = static_cast<double>(g[i]) * gv[c];
              gx[i] += static_cast<T>(is * (d - mean_d - (*xhat)[i] * mean_dx));
            }
          }
        }
      });
}

template <class T>
BasicTensor<T> global_avg_pool(const BasicTensor<T>& x) {
  const Shape s = x.shape();
  const std::size_t plane = s.plane();
  if (plane == 0) throw std::invalid_argument("global_avg_pool: empty spatial dims");
  std::vector<T> out(s.n * s.c);
  const auto xv = x.values();
  for (std::size_t i = 0; i < out.size(); ++i) {
    double acc = 0.0;
    for (std::size_t p = 0; p < plane; ++p) acc += xv[i * plane + p];
    out[i] = static_cast<T>(acc / static_cast<double>(plane));
  }
  return detail::make_result<T>(Shape{s.n, s.c, 1, 1}, std::move(out), "global_avg_pool", {&x},
                                [x, plane](std::span<const T> g, std::span<const T>) {
                                  T* gx = detail::grad_of(x);
                                  if (!gx) return;
                                  const T inv = T(1) / static_cast<T>(plane);
                                  for (std::size_t i = 0; i < g.size(); ++i)
                                    for (std::size_t p = 0; p < plane; ++p) gx[i * plane + p] += g[i] * inv;
                                });
}

/// Average pooling with a square window, no padding.
template <class T>
BasicTensor<T> avg_pool(const BasicTensor<T>& x, std::size_t k, std::size_t stride) {
  const Shape s = x.shape();
  if (k == 0 || stride == 0 || s.h < k || s.w < k) {
    throw std::invalid_argument("avg_pool: window " + std::to_string(k) + " does not fit " + to_string(s));
  }
  const std::size_t oh = (s.h - k) / stride + 1, ow = (s.w - k) / stride + 1;
  const auto xv = x.values();
  std::vector<T> out(s.n * s.c * oh * ow);
  const double inv = 1.0 / static_cast<double>(k * k);
  for (std::size_t nc = 0; nc < s.n * s.c; ++nc) {
    const T* src = xv.data() + nc * s.plane();
    for (std::size_t oy = 0; oy < oh; ++oy) {
      for (std::size_t ox = 0; ox < ow; ++ox) {
        double acc = 0.0;
        for (std::size_t ky = 0; ky < k; ++ky)
          for (std::size_t kx = 0; kx < k; ++kx) acc += src[(oy * stride + ky) * s.w + ox * stride + kx];
        out[(nc * oh + oy) * ow + ox] = static_cast<T>(acc * inv);
      }
    }
  }
  return detail::make_result<T>(Shape{s.n, s.c, oh, ow}, std::move(out), "avg_pool", {&x},
                                [x, s, k, stride, oh, ow, inv](std::span<const T> g, std::span<const T>) {
                                  T* gx = detail::grad_of(x);
                                  if (!gx) return;
                                  for (std::size_t nc = 0; nc < s.n * s.c; ++nc) {
                                    T* dst = gx + nc * s.plane();
                                    for (std::size_t oy = 0; oy < oh; ++oy)
                                      for (std::size_t ox = 0; ox < ow; ++ox) {
                                        const T d = static_cast<T>(g[(nc * oh + oy) * ow + ox] * inv);
                                        for (std::size_t ky = 0; ky < k; ++ky)
                                          for (std::size_t kx = 0; kx < k; ++kx)
                                            dst[(oy * stride + ky) * s.w + ox * stride + kx] += d;
                                      }
                                  }
                                });
}

namespace detail {

struct LerpAxis {
  std::vector<std::size_t> i0, i1;
  std::vector<double> frac;
};

/// Half-pixel source coordinates (align_corners = false), clamped at the borders.
inline LerpAxis lerp_axis(std::size_t in, std::size_t out) {
  LerpAxis a;
  a.i0.resize(out);
  a.i1.resize(out);
  a.frac.resize(out);
  const double scale = static_cast<double>(in) / static_cast<double>(out);
  for (std::size_t o = 0; o < out; ++o) {
    double src = (static_cast<double>(o) + 0.5) * scale - 0.5;
    if (src < 0.0) src = 0.0;
    std::size_t i0 = static_cast<std::size_t>(src);
    if (i0 > in - 1) i0 = in - 1;
    a.i0[o] = i0;
    a.i1[o] = i0 + (i0 < in - 1 ? 1 : 0);
    a.frac[o] = src - static_cast<double>(i0);
  }
  return a;
}

}  // namespace detail

/// Bilinear resampling to (out_h, out_w) with the align_corners = false convention:
/// output pixel o samples input coordinate (o + 0.5) * in / out - 0.5, clamped
/// to the valid range. No anti-aliasing is applied when shrinking.
template <class T>
BasicTensor<T> resize_bilinear(const BasicTensor<T>& x, std::size_t out_h, std::size_t out_w) {
  const Shape s = x.shape();
  if (out_h == 0 || out_w == 0 || s.h == 0 || s.w == 0) {
    throw std::invalid_argument("resize_bilinear: zero-sized dims " + to_string(s) + " -> " + std::to_string(out_h) +
                                "x" + std::to_string(out_w));
  }
  if (out_h == s.h && out_w == s.w) return x;
  auto ay = std::make_shared<detail::LerpAxis>(detail::lerp_axis(s.h, out_h));
  auto ax = std::make_shared<detail::LerpAxis>(detail::lerp_axis(s.w, out_w));
  const auto xv = x.values();
  std::vector<T> out(s.n * s.c * out_h * out_w);
  for (std::size_t nc = 0; nc < s.n * s.c; ++nc) {
    const T* src = xv.data() + nc * s.plane();
    T* dst = out.data() + nc * out_h * out_w;
    for (std::size_t oy = 0; oy < out_h; ++oy) {
      const T fy = static_cast<T>(ay->frac[oy]);
      const T* r0 = src + ay->i0[oy] * s.w;
      const T* r1 = src + ay->i1[oy] * s.w;
      for (std::size_t ox = 0; ox < out_w; ++ox) {
        const T fx = static_cast<T>(ax->frac[ox]);
        const std::size_t x0 = ax->i0[ox], x1 = ax->i1[ox];
        const T top = r0[x0] + fx * (r0[x1] - r0[x0]);
        const T bot = r1[x0] + fx * (r1[x1] - r1[x0]);
        dst[oy * out_w + ox] = top + fy * (bot - top);
      }
    }
  }
  return detail::make_result<T>(Shape{s.n, s.c, out_h, out_w}, std::move(out), "resize_bilinear", {&x},
                                [x, s, ay, ax, out_h, out_w](std::span<const T> g, std::span<const T>) {
                                  T* gx = detail::grad_of(x);
                                  if (!gx) return;
                                  for (std::size_t nc = 0; nc < s.n * s.c; ++nc) {
                                    T* dst = gx + nc * s.plane();
                                    const T* go = g.data() + nc * out_h * out_w;
                                    for (std::size_t oy = 0; oy < out_h; ++oy) {
                                      const T fy = static_cast<T>(ay->frac[oy]);
                                      T* r0 = dst + ay->i0[oy] * s.w;
                                      T* r1 = dst + ay->i1[oy] * s.w;
                                      for (std::size_t ox = 0; ox < out_w; ++ox) {
                                        const T fx = static_cast<T>(ax->frac[ox]);
                                        const T v = go[oy * out_w + ox];
                                        const std::size_t x0 = ax->i0[ox], x1 = ax->i1[ox];
                                        r0[x0] += v * (T(1) - fy) * (T(1) - fx);
                                        r0[x1] += v * (T(1) - fy) * fx;
                                        r1[x0] += v * fy * (T(1) - fx);
                                        r1[x1] += v * fy * fx;
                                      }
                                    }
                                  }
                                });
}

/// Coarse-to-fine expansion of parameter maps; same kernel as resize_bilinear.
template <class T>
BasicTensor<T> bilinear_upsample(const BasicTensor<T>& x, std::size_t out_h, std::size_t out_w) {
  return resize_bilinear(x, out_h, out_w);
}

namespace detail {

template <class T>
BasicTensor<T> shuffle(const BasicTensor<T>& x, std::size_t r, bool to_space) {
  const Shape s = x.shape();
  if (r == 0) throw std::invalid_argument("pixel shuffle factor must be positive");
  Shape o;
  if (to_space) {
    if (s.c % (r * r) != 0) throw std::invalid_argument("pixel_shuffle: channels not divisible by factor^2");
    o = Shape{s.n, s.c / (r * r), s.h * r, s.w * r};
  } else {
    if (s.h % r != 0 || s.w % r != 0) throw std::invalid_argument("pixel_unshuffle: dims not divisible by factor");
    o = Shape{s.n, s.c * r * r, s.h / r, s.w / r};
  }
  // Map between the shuffled (space) layout and the packed (channel) layout.
  const Shape packed = to_space ? s : o;
  const Shape space = to_space ? o : s;
  auto map = std::make_shared<std::vector<std::size_t>>(s.size());
  for (std::size_t n = 0; n < space.n; ++n)
    for (std::size_t c = 0; c < space.c; ++c)
      for (std::size_t y = 0; y < space.h; ++y)
        for (std::size_t xx = 0; xx < space.w; ++xx) {
          const std::size_t si = ((n * space.c + c) * space.h + y) * space.w + xx;
          const std::size_t pc = c * r * r + (y % r) * r + (xx % r);
          const std::size_t pi = ((n * packed.c + pc) * packed.h + y / r) * packed.w + xx / r;
          // out[dst] = in[src]
          if (to_space) {
            (*map)[si] = pi;
          } else {
            (*map)[pi] = si;
          }
        }
  const auto xv = x.values();
  std::vector<T> out(x.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = xv[(*map)[i]];
  return make_result<T>(o, std::move(out), to_space ? "pixel_shuffle" : "pixel_unshuffle", {&x},
                        [x, map](std::span<const T> g, std::span<const T>) {
                          T* gx = grad_of(x);
                          if (!gx) return;
                          for (std::size_t i = 0; i < g.size(); ++i) gx[(*map)[i]] += g[i];
                        });
}

}  // namespace detail

/// (n, c*r*r, h, w) -> (n, c, h*r, w*r).
template <class T>
BasicTensor<T> pixel_shuffle(const BasicTensor<T>& x, std::size_t r) {
  return detail::shuffle(x, r, true);
}

/// (n, c, h*r, w*r) -> (n, c*r*r, h, w).
template <class T>
BasicTensor<T> pixel_unshuffle(const BasicTensor<T>& x, std::size_t r) {
  return detail::shuffle(x, r, false);
}

}  // namespace dynisp
