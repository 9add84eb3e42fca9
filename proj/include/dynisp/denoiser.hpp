#pragma once

// Tiny CNN denoiser with one controller-generated depthwise filter:
//   conv 3x3 (3|4 -> mid) -> relu -> dynamic depthwise k x k -> relu ->
//   conv 3x3 (mid -> mid) -> relu -> head,
// where the head is a 3x3 conv to 3 channels added to the input (rgb) or a
// 3x3 conv to 12 channels, pixel-shuffled by 2 and added to the bilinear
// demosaic of the packed input (bayer4). The output is clamped to [0, 1].
// The head starts at zero, so an untrained denoiser is the identity (rgb) or
// the plain demosaic (bayer4).

#include <string>

#include "dynisp/bayer.hpp"
#include "dynisp/conv.hpp"
#include "dynisp/ispops.hpp"
#include "dynisp/module.hpp"
#include "dynisp/spatial.hpp"

namespace dynisp {

enum class InputMode { rgb, bayer4 };

struct DenoiserConfig {
  std::size_t mid_channels = 12;
  std::size_t kernel = 3;
  InputMode input = InputMode::rgb;
  std::uint64_t seed = 3;

  FilterShape filter() const { return {mid_channels, kernel}; }
};

template <class T>
class BasicDenoiser {
 public:
  explicit BasicDenoiser(const DenoiserConfig& cfg = {}) : cfg_(cfg) {
    if (cfg.kernel % 2 == 0) throw std::invalid_argument("denoiser: dynamic kernel size must be odd");
    Rng rng(cfg.seed);
    const std::size_t cin = in_channels(), m = cfg.mid_channels;
    const std::size_t head = cfg.input == InputMode::rgb ? 3 : 12;
    in_w_ = uniform_init<T>(Shape{m, cin, 3, 3}, cin * 9, rng);
    in_b_ = uniform_init<T>(Shape{m, 1, 1, 1}, cin * 9, rng);
    mid_w_ = uniform_init<T>(Shape{m, m, 3, 3}, m * 9, rng);
    mid_b_ = uniform_init<T>(Shape{m, 1, 1, 1}, m * 9, rng);
    head_w_ = const_init<T>(Shape{head, m, 3, 3}, T(0));
    head_b_ = const_init<T>(Shape{head, 1, 1, 1}, T(0));
  }

  const DenoiserConfig& config() const noexcept { return cfg_; }
  std::size_t in_channels() const noexcept { return cfg_.input == InputMode::rgb ? 3 : 4; }

  /// Image the denoiser's output is compared against: the input itself, or
  /// its demosaic for packed Bayer data.
  BasicTensor<T> residual_source(const BasicTensor<T>& x) const {
    return cfg_.input == InputMode::rgb ? x : demosaic_bilinear(x);
  }

  BasicTensor<T> forward(const BasicTensor<T>& x, const BasicTensor<T>& taps) const {
    if (x.shape().c != in_channels()) {
      throw std::invalid_argument("denoiser: expected " + std::to_string(in_channels()) + " channels, got " +
                                  to_string(x.shape()));
    }
    if (taps.shape().c != cfg_.mid_channels * cfg_.kernel * cfg_.kernel) {
      throw std::invalid_argument("denoiser: filter " + to_string(taps.shape()) + " does not match " +
                                  std::to_string(cfg_.mid_channels) + " channels of " + std::to_string(cfg_.kernel) +
                                  "x" + std::to_string(cfg_.kernel) + " taps");
    }
    const ConvOptions same{1, 1, 1, Padding::reflect};
    auto h = relu(conv2d(x, in_w_, in_b_, same));
    h = relu(dynamic_depthwise(h, fit_params(taps, h.shape().h, h.shape().w), cfg_.kernel));
    h = relu(conv2d(h, mid_w_, mid_b_, same));
    auto r = conv2d(h, head_w_, head_b_, same);
    if (cfg_.input == InputMode::bayer4) r = pixel_shuffle(r, 2);
    return clamp_straight_through(add(residual_source(x), r), T(0), T(1));
  }

  template <class F>
  void visit(const std::string& prefix, F&& f) {
    f(prefix + "in.weight", in_w_);
    f(prefix + "in.bias", in_b_);
    f(prefix + "mid.weight", mid_w_);
    f(prefix + "mid.bias", mid_b_);
    f(prefix + "head.weight", head_w_);
    f(prefix + "head.bias", head_b_);
  }

 private:
  DenoiserConfig cfg_;
  BasicTensor<T> in_w_, in_b_, mid_w_, mid_b_, head_w_, head_b_;
};

using Denoiser = BasicDenoiser<float>;

/// L1 distance between average-pooled images (window k, stride s).
template <class T>
BasicTensor<T> local_l1(const BasicTensor<T>& x_in, const BasicTensor<T>& x_dn, std::size_t k = 16,
                        std::size_t s = 8) {
  if (!(x_in.shape() == x_dn.shape())) {
    throw std::invalid_argument("local_l1: " + to_string(x_in.shape()) + " vs " + to_string(x_dn.shape()));
  }
  if (x_in.shape().h < k || x_in.shape().w < k) {
    throw std::invalid_argument("local_l1: image " + to_string(x_in.shape()) + " smaller than window " +
                                std::to_string(k));
  }
  return l1(avg_pool(x_dn, k, s), avg_pool(x_in, k, s));
}

}  // namespace dynisp
