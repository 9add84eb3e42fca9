#pragma once

#include <string>
#include <vector>

#include "dynisp/ops.hpp"

namespace dynisp {

enum class Padding { zeros, reflect };

struct ConvOptions {
  std::size_t stride = 1;
  std::size_t padding = 0;
  std::size_t groups = 1;
  Padding mode = Padding::zeros;
};

namespace detail {

/// Mirror index without repeating the edge sample (PyTorch "reflect").
inline long reflect_index(long i, long size) {
  if (size == 1) return 0;
  while (i < 0 || i >= size) {
    if (i < 0) i = -i;
    if (i >= size) i = 2 * (size - 1) - i;
  }
  return i;
}

inline std::size_t conv_out_size(std::size_t in, std::size_t k, std::size_t stride, std::size_t pad) {
  if (in + 2 * pad < k) return 0;
  return (in + 2 * pad - k) / stride + 1;
}

/// Source pixel (or -1 for a zero pad) for every (ky, kx, oy, ox) of an im2col layout.
inline std::vector<long> im2col_index(std::size_t h, std::size_t w, std::size_t k, std::size_t oh, std::size_t ow,
                                      const ConvOptions& opt) {
  std::vector<long> idx(k * k * oh * ow);
  std::size_t i = 0;
  const long pad = static_cast<long>(opt.padding);
  for (std::size_t ky = 0; ky < k; ++ky) {
    for (std::size_t kx = 0; kx < k; ++kx) {
      for (std::size_t oy = 0; oy < oh; ++oy) {
        long sy = static_cast<long>(oy * opt.stride + ky) - pad;
        const bool y_out = sy < 0 || sy >= static_cast<long>(h);
        if (y_out && opt.mode == Padding::reflect) sy = reflect_index(sy, static_cast<long>(h));
        for (std::size_t ox = 0; ox < ow; ++ox, ++i) {
          long sx = static_cast<long>(ox * opt.stride + kx) - pad;
          const bool x_out = sx < 0 || sx >= static_cast<long>(w);
          if (x_out && opt.mode == Padding::reflect) sx = reflect_index(sx, static_cast<long>(w));
          if (opt.mode == Padding::zeros && (y_out || x_out)) {
            idx[i] = -1;
          } else {
            idx[i] = sy * static_cast<long>(w) + sx;
          }
        }
      }
    }
  }
  return idx;
}

template <class T>
void im2col(const T* x, std::size_t channels, std::size_t plane, const std::vector<long>& idx, std::size_t taps_plane,
            T* col) {
  for (std::size_t c = 0; c < channels; ++c) {
    const T* src = x + c * plane;
    T* dst = col + c * taps_plane;
    for (std::size_t i = 0; i < taps_plane; ++i) dst[i] = idx[i] < 0 ? T(0) : src[idx[i]];
  }
}

template <class T>
void col2im(const T* col, std::size_t channels, std::size_t plane, const std::vector<long>& idx,
            std::size_t taps_plane, T* x) {
  for (std::size_t c = 0; c < channels; ++c) {
    const T* src = col + c * taps_plane;
    T* dst = x + c * plane;
    for (std::size_t i = 0; i < taps_plane; ++i) {
      if (idx[i] >= 0) dst[idx[i]] += src[i];
    }
  }
}

}  // namespace detail

/// Cross-correlation of x (n, c_in, h, w) with kernel (c_out, c_in/groups, k, k).
/// `bias` may be empty or hold c_out values.
template <class T>
BasicTensor<T> conv2d(const BasicTensor<T>& x, const BasicTensor<T>& kernel, const BasicTensor<T>& bias,
                      const ConvOptions& opt = {}) {
  const Shape xs = x.shape();
  const Shape ks = kernel.shape();
  const std::size_t g = opt.groups;
  if (g == 0 || xs.c % g != 0 || ks.n % g != 0 || ks.c * g != xs.c || ks.h != ks.w || opt.stride == 0) {
    throw std::invalid_argument("conv2d: input " + to_string(xs) + " incompatible with kernel " + to_string(ks) +
                                " and groups " + std::to_string(g));
  }
  if (!bias.empty() && bias.size() != ks.n) {
    throw std::invalid_argument("conv2d: bias has " + std::to_string(bias.size()) + " values for " +
                                std::to_string(ks.n) + " outputs");
  }
  if (opt.mode == Padding::reflect && (opt.padding >= xs.h || opt.padding >= xs.w)) {
    throw std::invalid_argument("conv2d: reflect padding " + std::to_string(opt.padding) + " too large for " +
                                to_string(xs));
  }
  const std::size_t k = ks.h;
  const std::size_t oh = detail::conv_out_size(xs.h, k, opt.stride, opt.padding);
  const std::size_t ow = detail::conv_out_size(xs.w, k, opt.stride, opt.padding);
  if (oh == 0 || ow == 0) throw std::invalid_argument("conv2d: empty output for input " + to_string(xs));

  const std::size_t cin_g = xs.c / g, cout_g = ks.n / g;
  const std::size_t oplane = oh * ow, iplane = xs.plane();
  const std::size_t rows = cin_g * k * k;
  const bool direct = k == 1 && opt.stride == 1 && opt.padding == 0;
  auto idx = std::make_shared<const std::vector<long>>(direct ? std::vector<long>{}
                                                               : detail::im2col_index(xs.h, xs.w, k, oh, ow, opt));

  std::vector<T> out(xs.n * ks.n * oplane);
  std::vector<T> col(direct ? 0 : rows * oplane);
  const T* xv = x.values().data();
  const T* kv = kernel.values().data();
  for (std::size_t n = 0; n < xs.n; ++n) {
    for (std::size_t gi = 0; gi < g; ++gi) {
      const T* xin = xv + (n * xs.c + gi * cin_g) * iplane;
      const T* src = xin;
      if (!direct) {
        detail::im2col(xin, cin_g, iplane, *idx, k * k * oplane, col.data());
        src = col.data();
      }
      detail::MatMap<T> Y(out.data() + (n * ks.n + gi * cout_g) * oplane, cout_g, oplane);
      Y.noalias() = detail::ConstMatMap<T>(kv + gi * cout_g * rows, cout_g, rows) *
                    detail::ConstMatMap<T>(src, rows, oplane);
      if (!bias.empty()) {
        for (std::size_t o = 0; o < cout_g; ++o) Y.row(o).array() += bias.values()[gi * cout_g + o];
      }
    }
  }

  return detail::make_result<T>(
      Shape{xs.n, ks.n, oh, ow}, std::move(out), "conv2d", {&x, &kernel, &bias},
      [x, kernel, bias, idx, xs, ks, g, k, cin_g, cout_g, oplane, iplane, rows, direct](std::span<const T> grad,
                                                                                       std::span<const T>) {
        T* gx = detail::grad_of(x);
        T* gk = detail::grad_of(kernel);
        T* gb = bias.empty() ? nullptr : detail::grad_of(bias);
        const T* xv = x.values().data();
        const T* kv = kernel.values().data();
        std::vector<T> col(direct ? 0 : rows * oplane);
        std::vector<T> dcol(direct || !gx ? 0 : rows * oplane);
        for (std::size_t n = 0; n < xs.n; ++n) {
          for (std::size_t gi = 0; gi < g; ++gi) {
            detail::ConstMatMap<T> G(grad.data() + (n * ks.n + gi * cout_g) * oplane, cout_g, oplane);
            const T* xin = xv + (n * xs.c + gi * cin_g) * iplane;
            if (gk) {
              const T* src = xin;
              if (!direct) {
                detail::im2col(xin, cin_g, iplane, *idx, k * k * oplane, col.data());
                src = col.data();
              }
              detail::MatMap<T>(gk + gi * cout_g * rows, cout_g, rows).noalias() +=
                  G * detail::ConstMatMap<T>(src, rows, oplane).transpose();
            }
            if (gx) {
              detail::ConstMatMap<T> W(kv + gi * cout_g * rows, cout_g, rows);
              T* gxin = gx + (n * xs.c + gi * cin_g) * iplane;
              if (direct) {
                detail::MatMap<T>(gxin, rows, oplane).noalias() += W.transpose() * G;
              } else {
                detail::MatMap<T>(dcol.data(), rows, oplane).noalias() = W.transpose() * G;
                detail::col2im(dcol.data(), cin_g, iplane, *idx, k * k * oplane, gxin);
              }
            }
            if (gb) {
              for (std::size_t o = 0; o < cout_g; ++o) gb[gi * cout_g + o] += G.row(o).sum();
            }
          }
        }
      });
}

template <class T>
BasicTensor<T> conv2d(const BasicTensor<T>& x, const BasicTensor<T>& kernel, const ConvOptions& opt = {}) {
  return conv2d(x, kernel, BasicTensor<T>(), opt);
}

/// Depthwise k x k convolution whose taps vary per sample and optionally per pixel.
///
/// `taps` is (n, c*k*k, 1, 1) for one kernel per image or (n, c*k*k, h, w) for a
/// kernel field; tap t = ky*k + kx of channel ch lives in channel ch*k*k + t.
/// Borders use reflect padding of k/2.
template <class T>
BasicTensor<T> dynamic_depthwise(const BasicTensor<T>& x, const BasicTensor<T>& taps, std::size_t k) {
  const Shape xs = x.shape();
  const Shape ts = taps.shape();
  const bool per_pixel = ts.h != 1 || ts.w != 1;
  if (k % 2 == 0 || ts.n != xs.n || ts.c != xs.c * k * k || (per_pixel && (ts.h != xs.h || ts.w != xs.w))) {
    throw std::invalid_argument("dynamic_depthwise: taps " + to_string(ts) + " do not fit input " + to_string(xs) +
                                " with k=" + std::to_string(k));
  }
  const long r = static_cast<long>(k / 2);
  if (r >= static_cast<long>(xs.h) || r >= static_cast<long>(xs.w)) {
    throw std::invalid_argument("dynamic_depthwise: input " + to_string(xs) + " smaller than kernel");
  }
  const std::size_t plane = xs.plane();
  const std::size_t tplane = per_pixel ? plane : 1;
  // Source offset per (tap, pixel); shared across channels and samples.
  auto src = std::make_shared<std::vector<std::size_t>>(k * k * plane);
  for (std::size_t t = 0; t < k * k; ++t) {
    const long dy = static_cast<long>(t / k) - r, dx = static_cast<long>(t % k) - r;
    for (std::size_t y = 0; y < xs.h; ++y) {
      const long sy = detail::reflect_index(static_cast<long>(y) + dy, static_cast<long>(xs.h));
      for (std::size_t xx = 0; xx < xs.w; ++xx) {
        const long sx = detail::reflect_index(static_cast<long>(xx) + dx, static_cast<long>(xs.w));
        (*src)[t * plane + y * xs.w + xx] = static_cast<std::size_t>(sy) * xs.w + static_cast<std::size_t>(sx);
      }
    }
  }
  const auto xv = x.values();
  const auto tv = taps.values();
  std::vector<T> out(x.size(), T(0));
  for (std::size_t n = 0; n < xs.n; ++n) {
    for (std::size_t c = 0; c < xs.c; ++c) {
      const T* xin = xv.data() + (n * xs.c + c) * plane;
      T* o = out.data() + (n * xs.c + c) * plane;
      for (std::size_t t = 0; t < k * k; ++t) {
        const T* tap = tv.data() + (n * ts.c + c * k * k + t) * tplane;
        const std::size_t* s = src->data() + t * plane;
        if (per_pixel) {
          for (std::size_t p = 0; p < plane; ++p) o[p] += tap[p] * xin[s[p]];
        } else {
          const T wgt = tap[0];
          for (std::size_t p = 0; p < plane; ++p) o[p] += wgt * xin[s[p]];
        }
      }
    }
  }
  return detail::make_result<T>(
      xs, std::move(out), "dynamic_depthwise", {&x, &taps},
      [x, taps, src, xs, ts, k, plane, tplane, per_pixel](std::span<const T> g, std::span<const T>) {
        T* gx = detail::grad_of(x);
        T* gt = detail::grad_of(taps);
        const auto xv = x.values();
        const auto tv = taps.values();
        for (std::size_t n = 0; n < xs.n; ++n) {
          for (std::size_t c = 0; c < xs.c; ++c) {
            const T* xin = xv.data() + (n * xs.c + c) * plane;
            const T* go = g.data() + (n * xs.c + c) * plane;
            for (std::size_t t = 0; t < k * k; ++t) {
              const std::size_t toff = (n * ts.c + c * k * k + t) * tplane;
              const std::size_t* s = src->data() + t * plane;
              if (gx) {
                T* gxi = gx + (n * xs.c + c) * plane;
                for (std::size_t p = 0; p < plane; ++p) gxi[s[p]] += go[p] * tv[toff + (per_pixel ? p : 0)];
              }
              if (gt) {
                if (per_pixel) {
                  for (std::size_t p = 0; p < plane; ++p) gt[toff + p] += go[p] * xin[s[p]];
                } else {
                  T acc = T(0);
                  for (std::size_t p = 0; p < plane; ++p) acc += go[p] * xin[s[p]];
                  gt[toff] += acc;
                }
              }
            }
          }
        }
      });
}

}  // namespace dynisp
