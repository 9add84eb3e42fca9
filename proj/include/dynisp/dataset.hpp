#pragma once

// Training samples, paired augmentation and the validation split.

#include <algorithm>
#include <cmath>
#include <random>
#include <string>
#include <utility>
#include <vector>

#include "dynisp/module.hpp"
#include "dynisp/tensor.hpp"

namespace dynisp {

template <class T>
struct Sample {
  std::string id;
  BasicTensor<T> input;   // (1, 3, h, w) RGB or (1, 4, h/2, w/2) packed RGGB
  BasicTensor<T> target;  // (1, 3, h, w)
};

template <class T>
using Dataset = std::vector<Sample<T>>;

struct AugmentConfig {
  bool flips = false;
  bool rotations = false;
  std::size_t crop = 0;  // square patch side, 0 keeps the full image
};

namespace detail {

/// Maps output (y, x) of a dihedral transform back to the source pixel.
/// code bit 0: horizontal flip, bit 1: vertical flip, bit 2: transpose.
template <class T>
BasicTensor<T> dihedral(const BasicTensor<T>& x, unsigned code) {
  if (code == 0) return x;
  const Shape s = x.shape();
  const bool transpose = code & 4u;
  const Shape o{s.n, s.c, transpose ? s.w : s.h, transpose ? s.h : s.w};
  std::vector<T> out(x.size());
  for (std::size_t n = 0; n < s.n; ++n)
    for (std::size_t c = 0; c < s.c; ++c)
      for (std::size_t y = 0; y < o.h; ++y)
        for (std::size_t xx = 0; xx < o.w; ++xx) {
          std::size_t sy = transpose ? xx : y, sx = transpose ? y : xx;
          if (code & 1u) sx = s.w - 1 - sx;
          if (code & 2u) sy = s.h - 1 - sy;
          out[((n * o.c + c) * o.h + y) * o.w + xx] = x(n, c, sy, sx);
        }
  return BasicTensor<T>(o, std::move(out));
}

template <class T>
BasicTensor<T> crop(const BasicTensor<T>& x, std::size_t y0, std::size_t x0, std::size_t h, std::size_t w) {
  const Shape s = x.shape();
  std::vector<T> out(s.n * s.c * h * w);
  for (std::size_t n = 0; n < s.n; ++n)
    for (std::size_t c = 0; c < s.c; ++c)
      for (std::size_t y = 0; y < h; ++y)
        for (std::size_t xx = 0; xx < w; ++xx) out[((n * s.c + c) * h + y) * w + xx] = x(n, c, y0 + y, x0 + xx);
  return BasicTensor<T>(Shape{s.n, s.c, h, w}, std::move(out));
}

}  // namespace detail

/// Applies the same random crop, flips and transposition to input and
/// target. Packed Bayer inputs are returned untouched. Returns the number of
/// transformations applied.
template <class T>
std::size_t augment_pair(Sample<T>& s, const AugmentConfig& cfg, Rng& rng) {
  if (s.input.shape().c == 4) return 0;
  std::size_t applied = 0;
  if (cfg.crop > 0 && (s.input.shape().h > cfg.crop || s.input.shape().w > cfg.crop)) {
    const std::size_t h = std::min(cfg.crop, s.input.shape().h), w = std::min(cfg.crop, s.input.shape().w);
    const std::size_t y0 = std::uniform_int_distribution<std::size_t>(0, s.input.shape().h - h)(rng);
    const std::size_t x0 = std::uniform_int_distribution<std::size_t>(0, s.input.shape().w - w)(rng);
    s.input = detail::crop(s.input, y0, x0, h, w);
    s.target = detail::crop(s.target, y0, x0, h, w);
    ++applied;
  }
  unsigned code = 0;
  if (cfg.flips) code |= static_cast<unsigned>(std::uniform_int_distribution<int>(0, 3)(rng));
  if (cfg.rotations) code |= static_cast<unsigned>(std::uniform_int_distribution<int>(0, 1)(rng)) << 2;
  if (code != 0) {
    s.input = detail::dihedral(s.input, code);
    s.target = detail::dihedral(s.target, code);
    ++applied;
  }
  return applied;
}

/// Sorts by id and moves the last `fraction` of samples into the validation set.
template <class T>
std::pair<Dataset<T>, Dataset<T>> split_validation(Dataset<T> data, double fraction = 0.1) {
  std::sort(data.begin(), data.end(), [](const Sample<T>& a, const Sample<T>& b) { return a.id < b.id; });
  const auto n_val = static_cast<std::size_t>(std::ceil(fraction * static_cast<double>(data.size())));
  Dataset<T> val(data.end() - static_cast<std::ptrdiff_t>(n_val), data.end());
  data.resize(data.size() - n_val);
  return {std::move(data), std::move(val)};
}

}  // namespace dynisp
