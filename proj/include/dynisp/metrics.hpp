#pragma once

// Image quality metrics on [0, 1] images (n = 1 or per-sample loops).
//
// PSNR = 10 log10(1 / MSE), computed in double, capped at 99 dB so identical
// images report a finite sentinel.
//
// SSIM uses k1 = 0.01, k2 = 0.03 (data range 1), an 11x11 Gaussian window
// with sigma 1.5 evaluated over 'valid' positions only, averaged over
// positions and then over channels. Images smaller than 11 pixels shrink the
// window to the largest odd size that fits, keeping sigma.
// The fivek_lowpass_256 variant first applies an f x f box filter with
// symmetric borders and keeps every f-th pixel, f = max(1, round(min(h, w) / 256)).

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>
#include <vector>

#include "dynisp/tensor.hpp"

namespace dynisp {

inline constexpr double kPsnrCap = 99.0;

enum class SsimVariant { original_res, fivek_lowpass_256 };

inline const char* ssim_variant_name(SsimVariant v) {
  return v == SsimVariant::original_res ? "original_res" : "fivek_lowpass_256";
}

inline SsimVariant parse_ssim_variant(const std::string& s) {
  if (s == "original_res") return SsimVariant::original_res;
  if (s == "fivek_lowpass_256") return SsimVariant::fivek_lowpass_256;
  throw std::invalid_argument("unknown SSIM variant '" + s + "' (expected original_res or fivek_lowpass_256)");
}

namespace detail {

inline void require_same(const Shape& a, const Shape& b, const char* what) {
  if (!(a == b)) throw std::invalid_argument(std::string(what) + ": shapes " + to_string(a) + " and " + to_string(b) + " differ");
}

/// One channel plane as doubles.
struct Plane {
  std::size_t h = 0, w = 0;
  std::vector<double> v;
  double at(std::size_t y, std::size_t x) const { return v[y * w + x]; }
};

template <class T>
Plane plane_of(const BasicTensor<T>& t, std::size_t n, std::size_t c) {
  Plane p{t.shape().h, t.shape().w, std::vector<double>(t.shape().plane())};
  for (std::size_t i = 0; i < p.v.size(); ++i) p.v[i] = static_cast<double>(t.values()[(n * t.shape().c + c) * p.v.size() + i]);
  return p;
}

inline std::size_t symmetric_index(long i, long n) {
  // ... 2 1 0 | 0 1 2 ... n-1 | n-1 n-2 ...
  const long period = 2 * n;
  long m = i % period;
  if (m < 0) m += period;
  return static_cast<std::size_t>(m < n ? m : period - 1 - m);
}

inline Plane lowpass_subsample(const Plane& p, std::size_t f) {
  if (f <= 1) return p;
  // Box filter with MATLAB 'same' alignment: offset floor((f - 1) / 2) before centre.
  const long before = static_cast<long>((f - 1) / 2);
  Plane out{(p.h + f - 1) / f, (p.w + f - 1) / f, {}};
  out.v.resize(out.h * out.w);
  const double inv = 1.0 / static_cast<double>(f * f);
  for (std::size_t oy = 0; oy < out.h; ++oy)
    for (std::size_t ox = 0; ox < out.w; ++ox) {
      const long cy = static_cast<long>(oy * f), cx = static_cast<long>(ox * f);
      double s = 0.0;
      for (long dy = 0; dy < static_cast<long>(f); ++dy)
        for (long dx = 0; dx < static_cast<long>(f); ++dx) {
          s += p.at(symmetric_index(cy - before + dy, static_cast<long>(p.h)),
                    symmetric_index(cx - before + dx, static_cast<long>(p.w)));
        }
      out.v[oy * out.w + ox] = s * inv;
    }
  return out;
}

inline std::vector<double> gaussian_window(std::size_t size, double sigma) {
  std::vector<double> g(size * size);
  const double c = (static_cast<double>(size) - 1.0) / 2.0;
  double total = 0.0;
  for (std::size_t y = 0; y < size; ++y)
    for (std::size_t x = 0; x < size; ++x) {
      const double dy = static_cast<double>(y) - c, dx = static_cast<double>(x) - c;
      total += g[y * size + x] = std::exp(-(dx * dx + dy * dy) / (2.0 * sigma * sigma));
    }
  for (auto& v : g) v /= total;
  return g;
}

inline double ssim_plane(const Plane& a, const Plane& b) {
  const double c1 = 0.01 * 0.01, c2 = 0.03 * 0.03;
  std::size_t size = std::min<std::size_t>(11, std::min(a.h, a.w));
  if (size % 2 == 0) --size;
  if (size == 0) throw std::invalid_argument("ssim: empty image");
  const auto win = gaussian_window(size, 1.5);
  const std::size_t oh = a.h - size + 1, ow = a.w - size + 1;
  double total = 0.0;
  for (std::size_t y = 0; y < oh; ++y)
    for (std::size_t x = 0; x < ow; ++x) {
      double ma = 0, mb = 0, saa = 0, sbb = 0, sab = 0;
      for (std::size_t dy = 0; dy < size; ++dy)
        for (std::size_t dx = 0; dx < size; ++dx) {
          const double wgt = win[dy * size + dx];
          const double va = a.at(y + dy, x + dx), vb = b.at(y + dy, x + dx);
          ma += wgt * va;
          mb += wgt * vb;
          saa += wgt * va * va;
          sbb += wgt * vb * vb;
          sab += wgt * va * vb;
        }
      const double va = saa - ma * ma, vb = sbb - mb * mb, cov = sab - ma * mb;
      total += ((2 * ma * mb + c1) * (2 * cov + c2)) / ((ma * ma + mb * mb + c1) * (va + vb + c2));
    }
  return total / static_cast<double>(oh * ow);
}

}  // namespace detail

template <class T>
double mse_value(const BasicTensor<T>& a, const BasicTensor<T>& b) {
  detail::require_same(a.shape(), b.shape(), "mse");
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double d = static_cast<double>(a.values()[i]) - static_cast<double>(b.values()[i]);
    s += d * d;
  }
  return s / static_cast<double>(a.size());
}

inline double psnr_from_mse(double mse) {
  if (mse <= 0.0) return kPsnrCap;
  return std::min(kPsnrCap, -10.0 * std::log10(mse));
}

/// PSNR over the whole tensor.
template <class T>
double psnr(const BasicTensor<T>& a, const BasicTensor<T>& b) {
  return psnr_from_mse(mse_value(a, b));
}

/// Mean per-sample PSNR of a batch.
template <class T>
double mean_psnr(const BasicTensor<T>& a, const BasicTensor<T>& b) {
  detail::require_same(a.shape(), b.shape(), "psnr");
  const std::size_t per = a.size() / a.shape().n;
  double total = 0.0;
  for (std::size_t n = 0; n < a.shape().n; ++n) {
    double s = 0.0;
    for (std::size_t i = n * per; i < (n + 1) * per; ++i) {
      const double d = static_cast<double>(a.values()[i]) - static_cast<double>(b.values()[i]);
      s += d * d;
    }
    total += psnr_from_mse(s / static_cast<double>(per));
  }
  return total / static_cast<double>(a.shape().n);
}

/// SSIM of sample 0 of a and b, averaged over channels.
template <class T>
double ssim(const BasicTensor<T>& a, const BasicTensor<T>& b, SsimVariant variant = SsimVariant::original_res) {
  detail::require_same(a.shape(), b.shape(), "ssim");
  const Shape s = a.shape();
  std::size_t f = 1;
  if (variant == SsimVariant::fivek_lowpass_256) {
    f = std::max<std::size_t>(1, static_cast<std::size_t>(std::lround(static_cast<double>(std::min(s.h, s.w)) / 256.0)));
  }
  double total = 0.0;
  for (std::size_t c = 0; c < s.c; ++c) {
    const auto pa = detail::lowpass_subsample(detail::plane_of(a, 0, c), f);
    const auto pb = detail::lowpass_subsample(detail::plane_of(b, 0, c), f);
    total += detail::ssim_plane(pa, pb);
  }
  return total / static_cast<double>(s.c);
}

}  // namespace dynisp
