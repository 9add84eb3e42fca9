#pragma once

// Host-side latency measurement of the forward pass.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <numeric>
#include <random>
#include <string>
#include <vector>

#include "dynisp/model.hpp"
#include "dynisp/spatial.hpp"

namespace dynisp {

struct Resolution {
  std::string name;
  std::size_t width = 0;
  std::size_t height = 0;
};

/// 480P, fullHD, 4K, or an explicit WxH.
inline Resolution parse_resolution(const std::string& s) {
  if (s == "480P" || s == "480p") return {"480P", 640, 480};
  if (s == "fullHD" || s == "1080P" || s == "1080p") return {"fullHD", 1920, 1080};
  if (s == "4K" || s == "4k") return {"4K", 3840, 2160};
  const auto x = s.find('x');
  if (x != std::string::npos) {
    try {
      std::size_t a = 0, b = 0;
      const auto w = std::stoul(s.substr(0, x), &a);
      const auto h = std::stoul(s.substr(x + 1), &b);
      if (a == x && b == s.size() - x - 1 && w > 0 && h > 0) return {s, w, h};
    } catch (const std::exception&) {
    }
  }
  throw std::invalid_argument("unknown resolution '" + s + "' (use 480P, fullHD, 4K or WxH)");
}

inline bool is_480p(std::size_t h, std::size_t w) { return std::min(h, w) == 480; }

/// Isotropic resize so that the shorter edge equals `edge`.
template <class T>
BasicTensor<T> resize_short_edge(const BasicTensor<T>& x, std::size_t edge = 480) {
  const Shape s = x.shape();
  const double scale = static_cast<double>(edge) / static_cast<double>(std::min(s.h, s.w));
  const auto h = s.h <= s.w ? edge : static_cast<std::size_t>(std::lround(s.h * scale));
  const auto w = s.w < s.h ? edge : static_cast<std::size_t>(std::lround(s.w * scale));
  return resize_bilinear(x, h, w);
}

struct BenchStats {
  std::string mode;
  double mean_ms = 0.0;
  double median_ms = 0.0;
  double min_ms = 0.0;
  std::size_t iterations = 0;
};

/// Times `iterations` forward passes after `warmup` untimed ones.
template <class T>
BenchStats bench_forward(const BasicModel<T>& model, const Resolution& res, std::size_t warmup = 10,
                         std::size_t iterations = 50, std::uint64_t seed = 0) {
  if (iterations == 0) throw std::invalid_argument("bench: iterations must be positive");
  const bool bayer = model.config().input == InputMode::bayer4;
  const Shape shape = bayer ? Shape{1, 4, res.height / 2, res.width / 2} : Shape{1, 3, res.height, res.width};
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<float> u(0.0f, 1.0f);
  std::vector<T> v(shape.size());
  for (auto& e : v) e = static_cast<T>(u(rng));
  const BasicTensor<T> x(shape, std::move(v));

  for (std::size_t i = 0; i < warmup; ++i) (void)model.forward(x);
  std::vector<double> ms(iterations);
  for (auto& t : ms) {
    const auto t0 = std::chrono::steady_clock::now();
    (void)model.forward(x);
    t = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0).count();
  }
  BenchStats st;
  st.mode = mode_name(model.config().controller.mode);
  st.iterations = iterations;
  st.mean_ms = std::accumulate(ms.begin(), ms.end(), 0.0) / static_cast<double>(ms.size());
  std::sort(ms.begin(), ms.end());
  st.median_ms = ms.size() % 2 ? ms[ms.size() / 2] : 0.5 * (ms[ms.size() / 2 - 1] + ms[ms.size() / 2]);
  st.min_ms = ms.front();
  return st;
}

}  // namespace dynisp
