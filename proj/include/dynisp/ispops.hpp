#pragma once

// White-box ISP operators. Each is a pure, differentiable function of an
// image (n, 3, h, w) in [0, 1] and one parameter tensor per stage, laid out as
// described in params.hpp. Parameter tensors are (n, 9, 1, 1) for per-image
// values or (n, 9, h, w) for per-pixel maps; both share one code path.

#include <algorithm>
#include <array>
#include <cmath>
#include <functional>
#include <map>
#include <numbers>
#include <string>
#include <vector>

#include "dynisp/bayer.hpp"
#include "dynisp/ops.hpp"
#include "dynisp/params.hpp"
#include "dynisp/spatial.hpp"

namespace dynisp {

namespace detail {

inline constexpr double kRangeTolerance = 1e-6;

template <class T>
void require_param_layout(const char* op, const Shape& x, const Shape& p, std::size_t arity) {
  const bool per_image = p.h == 1 && p.w == 1;
  const bool per_pixel = p.h == x.h && p.w == x.w;
  if (p.n != x.n || p.c != arity || !(per_image || per_pixel)) {
    throw std::invalid_argument(std::string(op) + ": parameters " + to_string(p) + " do not fit image " +
                                to_string(x) + " (expected " + std::to_string(arity) + " values per site)");
  }
}

template <class T>
void require_unit_range(const char* op, const BasicTensor<T>& x) {
  for (const T v : x.values()) {
    if (v < -kRangeTolerance || v > 1.0 + kRangeTolerance) {
      throw std::domain_error(std::string(op) + ": input value " + std::to_string(v) + " outside [0, 1]");
    }
  }
}

template <class T>
struct Partials {
  T y, dx, d0, d1, d2;
};

/// Applies a per-channel curve y = f(x; a, b, c) where (a, b, c) are the
/// three parameter families of the pixel's channel.
template <class T, class Check, class Curve>
BasicTensor<T> channel_curve(const char* op, const BasicTensor<T>& x, const BasicTensor<T>& p, Check check,
                             Curve curve) {
  const Shape xs = x.shape();
  if (xs.c != 3) throw std::invalid_argument(std::string(op) + ": expected 3 channels, got " + to_string(xs));
  require_param_layout<T>(op, xs, p.shape(), 9);
  require_unit_range(op, x);
  const std::size_t plane = xs.plane();
  const std::size_t pplane = p.shape().plane();
  const auto pv = p.values();
  for (std::size_t i = 0; i < pv.size(); i += 1) {
    const std::size_t k = (i / pplane) % 9;
    if (k >= 3) continue;
    const std::size_t base = i - k * pplane;
    check(pv[base + k * pplane], pv[base + (k + 3) * pplane], pv[base + (k + 6) * pplane]);
  }
  const auto xv = x.values();
  std::vector<T> out(x.size());
  for (std::size_t n = 0; n < xs.n; ++n)
    for (std::size_t c = 0; c < 3; ++c) {
      const T* a = pv.data() + (n * 9 + c) * pplane;
      const T* b = a + 3 * pplane;
      const T* cc = a + 6 * pplane;
      const std::size_t off = (n * 3 + c) * plane;
      for (std::size_t q = 0; q < plane; ++q) {
        const std::size_t s = pplane == 1 ? 0 : q;
        const T xin = std::clamp(xv[off + q], T(0), T(1));
        out[off + q] = curve(xin, a[s], b[s], cc[s]).y;
      }
    }
  return make_result<T>(xs, std::move(out), op, {&x, &p},
                        [x, p, curve, xs, plane, pplane](std::span<const T> g, std::span<const T>) {
                          T* gx = grad_of(x);
                          T* gp = grad_of(p);
                          const auto xv = x.values();
                          const auto pv = p.values();
                          for (std::size_t n = 0; n < xs.n; ++n)
                            for (std::size_t c = 0; c < 3; ++c) {
                              const std::size_t pa = (n * 9 + c) * pplane;
                              const T* a = pv.data() + pa;
                              const T* b = a + 3 * pplane;
                              const T* cc = a + 6 * pplane;
                              const std::size_t off = (n * 3 + c) * plane;
                              double acc[3] = {0.0, 0.0, 0.0};
                              for (std::size_t q = 0; q < plane; ++q) {
                                const T gy = g[off + q];
                                if (gy == T(0)) continue;
                                const std::size_t s = pplane == 1 ? 0 : q;
                                const T xin = std::clamp(xv[off + q], T(0), T(1));
                                const Partials<T> d = curve(xin, a[s], b[s], cc[s]);
                                if (gx) gx[off + q] += gy * d.dx;
                                if (!gp) continue;
                                if (pplane == 1) {
                                  acc[0] += static_cast<double>(gy * d.d0);
                                  acc[1] += static_cast<double>(gy * d.d1);
                                  acc[2] += static_cast<double>(gy * d.d2);
                                } else {
                                  gp[pa + q] += gy * d.d0;
                                  gp[pa + 3 * pplane + q] += gy * d.d1;
                                  gp[pa + 6 * pplane + q] += gy * d.d2;
                                }
                              }
                              if (gp && pplane == 1) {
                                gp[pa] += static_cast<T>(acc[0]);
                                gp[pa + 3] += static_cast<T>(acc[1]);
                                gp[pa + 6] += static_cast<T>(acc[2]);
                              }
                            }
                        });
}

/// Three-segment piecewise-linear curve shared by gain and contrast stretch.
/// The middle segment starts at x1 = px (1 - pw), has width pw and rise ph;
/// the outer segments share slope (1 - ph) / (1 - pw) and pin 0 -> 0, 1 -> 1.
template <class T>
Partials<T> piecewise_curve(T x, T ph, T pw, T px) {
  const T x1 = px * (T(1) - pw);
  const T x2 = x1 + pw;
  const T so = (T(1) - ph) / (T(1) - pw);
  Partials<T> r{};
  if (x < x1) {
    r.y = so * x;
    r.dx = so;
    r.d0 = -x / (T(1) - pw);
    r.d1 = (T(1) - ph) * x / ((T(1) - pw) * (T(1) - pw));
    r.d2 = T(0);
  } else if (x2 < x) {
    r.y = T(1) - so * (T(1) - x);
    r.dx = so;
    r.d0 = (T(1) - x) / (T(1) - pw);
    r.d1 = -(T(1) - x) * (T(1) - ph) / ((T(1) - pw) * (T(1) - pw));
    r.d2 = T(0);
  } else {
    const T sm = ph / pw;
    r.y = sm * (x - x1) + px * (T(1) - ph);
    r.dx = sm;
    r.d0 = (x - x1) / pw - px;
    r.d1 = -ph / (pw * pw) * (x - x1) + sm * px;
    r.d2 = -sm * (T(1) - pw) + (T(1) - ph);
  }
  return r;
}

template <class T>
void check_piecewise(const char* op, T ph, T pw, T px) {
  if (!(ph > T(0) && ph < T(1)) || !(pw > T(0) && pw < T(1)) || !(px > T(0) && px < T(1))) {
    throw std::domain_error(std::string(op) + ": parameters (p_h=" + std::to_string(ph) + ", p_w=" +
                            std::to_string(pw) + ", p_x=" + std::to_string(px) + ") must lie in (0, 1)");
  }
}

}  // namespace detail

/// Gain: piecewise-linear amplification with the knee position decorated as
/// p_x = 10^(p_x_log). Parameter families: p_h, p_w, p_x_log.
template <class T>
BasicTensor<T> gain(const BasicTensor<T>& x, const BasicTensor<T>& params) {
  const T ln10 = static_cast<T>(std::numbers::ln10);
  return detail::channel_curve(
      "gain", x, params,
      [](T ph, T pw, T q) { detail::check_piecewise<T>("gain", ph, pw, std::pow(T(10), q)); },
      [ln10](T xin, T ph, T pw, T q) {
        const T px = std::pow(T(10), q);
        auto r = detail::piecewise_curve(xin, ph, pw, px);
        r.d2 *= px * ln10;
        return r;
      });
}

/// Contrast stretch: the gain curve with p_x used directly.
template <class T>
BasicTensor<T> contrast_stretch(const BasicTensor<T>& x, const BasicTensor<T>& params) {
  return detail::channel_curve(
      "contrast_stretch", x, params, [](T ph, T pw, T px) { detail::check_piecewise<T>("contrast_stretch", ph, pw, px); },
      [](T xin, T ph, T pw, T px) { return detail::piecewise_curve(xin, ph, pw, px); });
}

/// Gamma-style tone curve y = x^E(x) with
///   E(x) = (1/g1) (1 - (1 - g2) x^(1/g1)) / (1 - (1 - g2) k^(1/g1)).
/// Families: gamma1, gamma2, k. y(0) = 0 with zero gradient.
template <class T>
BasicTensor<T> tone_map(const BasicTensor<T>& x, const BasicTensor<T>& params) {
  return detail::channel_curve(
      "tone_map", x, params,
      [](T g1, T g2, T k) {
        if (!(g1 > T(0)) || !(g2 > T(0)) || !(k > T(0) && k <= T(1))) {
          throw std::domain_error("tone_map: need gamma1 > 0, gamma2 > 0, k in (0, 1]");
        }
        const T a = T(1) / g1;
        const T den = T(1) - (T(1) - g2) * std::pow(k, a);
        // The numerator is linear in x^(1/g1) so checking both ends covers [0, 1].
        if (!(den > T(0)) || !(g2 / den > T(0))) throw std::domain_error("tone_map: non-positive exponent");
      },
      [](T xin, T g1, T g2, T k) {
        detail::Partials<T> r{};
        if (xin <= T(0)) return r;
        const T a = T(1) / g1;
        const T b = T(1) - g2;
        const T lx = std::log(xin);
        const T u = std::exp(a * lx);
        const T lk = std::log(k);
        const T v = std::exp(a * lk);
        const T num = T(1) - b * u;
        const T den = T(1) - b * v;
        const T e = a * num / den;
        r.y = std::exp(e * lx);
        const T dedx = -a * a * b * u / (xin * den);
        r.dx = r.y * (dedx * lx + e / xin);
        const T de_da = num / den - a * b * u * lx / den + a * num * b * v * lk / (den * den);
        const T de_db = a * (-u * den + num * v) / (den * den);
        const T de_dk = a * num * b * a * v / (k * den * den);
        const T ylx = r.y * lx;
        r.d0 = ylx * de_da * (-a * a);
        r.d1 = ylx * (-de_db);
        r.d2 = ylx * de_dk;
        return r;
      });
}

/// Inverse tone curve y = x^E(x) with
///   E(x) = g3 (1 + g4 (x + 1)^g3) / (1 + g4 (k2 + 1)^g3).
/// Families: gamma3, gamma4, k2.
template <class T>
BasicTensor<T> inv_tone_map(const BasicTensor<T>& x, const BasicTensor<T>& params) {
  return detail::channel_curve(
      "inv_tone_map", x, params,
      [](T g3, T g4, T k2) {
        if (!(g3 > T(0)) || k2 < T(0)) throw std::domain_error("inv_tone_map: need gamma3 > 0 and k2 >= 0");
        const T den = T(1) + g4 * std::pow(k2 + T(1), g3);
        if (!(den > T(0))) throw std::domain_error("inv_tone_map: exponent denominator must be positive");
        const T lo = T(1) + g4, hi = T(1) + g4 * std::pow(T(2), g3);
        if (!(lo > T(0)) || !(hi > T(0))) throw std::domain_error("inv_tone_map: non-positive exponent");
      },
      [](T xin, T g3, T g4, T k2) {
        detail::Partials<T> r{};
        if (xin <= T(0)) return r;
        const T lx = std::log(xin);
        const T l1 = std::log(xin + T(1));
        const T lk = std::log(k2 + T(1));
        const T s = std::exp(g3 * l1);
        const T t = std::exp(g3 * lk);
        const T num = T(1) + g4 * s;
        const T den = T(1) + g4 * t;
        const T e = g3 * num / den;
        r.y = std::exp(e * lx);
        const T dedx = g3 * g4 * g3 * s / ((xin + T(1)) * den);
        r.dx = r.y * (dedx * lx + e / xin);
        const T de_dg3 = num / den + g3 * g4 * s * l1 / den - g3 * num * g4 * t * lk / (den * den);
        const T de_dg4 = g3 * (s * den - num * t) / (den * den);
        const T de_dk2 = -g3 * num * g4 * g3 * t / ((k2 + T(1)) * den * den);
        const T ylx = r.y * lx;
        r.d0 = ylx * de_dg3;
        r.d1 = ylx * de_dg4;
        r.d2 = ylx * de_dk2;
        return r;
      });
}

/// Colour correction: every pixel's (r, g, b) row vector times the 3x3 matrix.
/// The result is not clamped.
template <class T>
BasicTensor<T> color_correct(const BasicTensor<T>& x, const BasicTensor<T>& matrix) {
  const Shape xs = x.shape();
  if (xs.c != 3) throw std::invalid_argument("color_correct: expected 3 channels, got " + to_string(xs));
  detail::require_param_layout<T>("color_correct", xs, matrix.shape(), 9);
  const std::size_t plane = xs.plane();
  const std::size_t mplane = matrix.shape().plane();
  const auto xv = x.values();
  const auto mv = matrix.values();
  std::vector<T> out(x.size());
  for (std::size_t n = 0; n < xs.n; ++n) {
    const T* m = mv.data() + n * 9 * mplane;
    const T* in = xv.data() + n * 3 * plane;
    T* o = out.data() + n * 3 * plane;
    for (std::size_t q = 0; q < plane; ++q) {
      const std::size_t s = mplane == 1 ? 0 : q;
      const T r = in[q], gch = in[plane + q], b = in[2 * plane + q];
      for (std::size_t j = 0; j < 3; ++j) {
        o[j * plane + q] = r * m[j * mplane + s] + gch * m[(3 + j) * mplane + s] + b * m[(6 + j) * mplane + s];
      }
    }
  }
  return detail::make_result<T>(
      xs, std::move(out), "color_correct", {&x, &matrix},
      [x, matrix, xs, plane, mplane](std::span<const T> g, std::span<const T>) {
        T* gx = detail::grad_of(x);
        T* gm = detail::grad_of(matrix);
        const auto xv = x.values();
        const auto mv = matrix.values();
        for (std::size_t n = 0; n < xs.n; ++n) {
          const T* m = mv.data() + n * 9 * mplane;
          const T* in = xv.data() + n * 3 * plane;
          const T* go = g.data() + n * 3 * plane;
          double acc[9] = {};
          for (std::size_t q = 0; q < plane; ++q) {
            const std::size_t s = mplane == 1 ? 0 : q;
            for (std::size_t i = 0; i < 3; ++i) {
              T dxi = T(0);
              for (std::size_t j = 0; j < 3; ++j) {
                const T gj = go[j * plane + q];
                dxi += gj * m[(i * 3 + j) * mplane + s];
                if (gm) {
                  const T d = gj * in[i * plane + q];
                  if (mplane == 1) {
                    acc[i * 3 + j] += static_cast<double>(d);
                  } else {
                    gm[(n * 9 + i * 3 + j) * mplane + q] += d;
                  }
                }
              }
              if (gx) gx[(n * 3 + i) * plane + q] += dxi;
            }
          }
          if (gm && mplane == 1)
            for (std::size_t k = 0; k < 9; ++k) gm[n * 9 + k] += static_cast<T>(acc[k]);
        }
      });
}

// ---- pipeline -----------------------------------------------------------------

/// Which stages run. Execution order is fixed:
/// inv_tone -> denoise (filter) -> color correct -> gain -> tone -> contrast.
struct PipelineConfig {
  bool inv_tone_map = false;
  bool denoise = false;
  bool color_correct = true;
  bool gain = true;
  bool tone_map = true;
  bool contrast = true;

  std::vector<Stage> stages() const {
    std::vector<Stage> s;
    if (inv_tone_map) s.push_back(Stage::inv_tone);
    if (denoise) s.push_back(Stage::filter);
    if (color_correct) s.push_back(Stage::ccm);
    if (gain) s.push_back(Stage::gain);
    if (tone_map) s.push_back(Stage::tone);
    if (contrast) s.push_back(Stage::contrast);
    return s;
  }
};

template <class T>
using ParamSets = std::map<Stage, BasicTensor<T>>;

/// Denoiser hook: (input, dynamic filter taps) -> 3-channel image in [0, 1].
template <class T>
using DenoiseFn = std::function<BasicTensor<T>(const BasicTensor<T>&, const BasicTensor<T>&)>;

/// Parameters that make a stage the identity map (the filter has none).
template <class T>
BasicTensor<T> identity_params(Stage s, std::size_t n) {
  std::array<T, 9> v{};
  switch (s) {
    case Stage::ccm: v = {1, 0, 0, 0, 1, 0, 0, 0, 1}; break;
    case Stage::gain: v = {0.5, 0.5, 0.5, 0.5, 0.5, 0.5, -1, -1, -1}; break;
    case Stage::contrast: v = {0.5, 0.5, 0.5, 0.5, 0.5, 0.5, 0.5, 0.5, 0.5}; break;
    case Stage::tone: v = {1, 1, 1, 1, 1, 1, 0.5, 0.5, 0.5}; break;
    case Stage::inv_tone: v = {1, 1, 1, 0, 0, 0, 0.5, 0.5, 0.5}; break;
    case Stage::filter: throw std::invalid_argument("identity_params: the filter stage has no identity setting");
  }
  std::vector<T> out;
  for (std::size_t i = 0; i < n; ++i) out.insert(out.end(), v.begin(), v.end());
  return BasicTensor<T>(Shape{n, 9, 1, 1}, std::move(out));
}

/// Brings a parameter tensor to the resolution of its consumer: per-image
/// values and maps that already match pass through, coarser maps are
/// upsampled bilinearly.
template <class T>
BasicTensor<T> fit_params(const BasicTensor<T>& p, std::size_t h, std::size_t w) {
  const Shape s = p.shape();
  if ((s.h == 1 && s.w == 1) || (s.h == h && s.w == w)) return p;
  return bilinear_upsample(p, h, w);
}

template <class T>
BasicTensor<T> run_pipeline(const BasicTensor<T>& x, const ParamSets<T>& params, const PipelineConfig& config,
                            const DenoiseFn<T>& denoise = {}) {
  BasicTensor<T> y = x;
  auto need = [&](Stage s) -> BasicTensor<T> {
    const auto it = params.find(s);
    if (it == params.end()) {
      throw std::invalid_argument(std::string("run_pipeline: missing parameters for enabled stage ") + stage_name(s));
    }
    return fit_params(it->second, y.shape().h, y.shape().w);
  };
  if (config.inv_tone_map) {
    if (y.shape().c != 3) throw std::invalid_argument("run_pipeline: inverse tone mapping needs an RGB input");
    y = inv_tone_map(y, need(Stage::inv_tone));
  }
  if (config.denoise) {
    if (!denoise) throw std::invalid_argument("run_pipeline: denoise enabled without a denoiser");
    const auto taps = params.find(Stage::filter);
    if (taps == params.end()) throw std::invalid_argument("run_pipeline: missing parameters for enabled stage filter");
    y = clamp_straight_through(denoise(y, taps->second), T(0), T(1));
  } else if (y.shape().c == 4) {
    y = demosaic_bilinear(y);
  }
  if (config.color_correct) y = clamp_straight_through(color_correct(y, need(Stage::ccm)), T(0), T(1));
  if (config.gain) y = gain(y, need(Stage::gain));
  if (config.tone_map) y = tone_map(y, need(Stage::tone));
  if (config.contrast) y = contrast_stretch(y, need(Stage::contrast));
  return y;
}

}  // namespace dynisp
