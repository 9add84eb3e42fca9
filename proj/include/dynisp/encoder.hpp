#pragma once

// Feature encoder: bilinear resize to a fixed square resolution, then three
// residual blocks that each halve the resolution. With the defaults a
// (n, 3|4, h, w) input becomes a (n, 96, 28, 28) feature map.

#include <array>
#include <string>
#include <vector>

#include "dynisp/conv.hpp"
#include "dynisp/module.hpp"
#include "dynisp/spatial.hpp"

namespace dynisp {

struct EncoderConfig {
  std::size_t input_size = 224;
  std::size_t in_channels = 3;
  std::array<std::size_t, 3> channels{24, 48, 96};
  std::uint64_t seed = 1;

  std::size_t output_size() const { return input_size / 8; }
};

/// stride-2 conv -> layer norm -> relu (r) -> conv -> relu -> 1x1 conv, plus r.
template <class T>
struct EncoderBlock {
  BasicTensor<T> down_w, down_b, norm_g, norm_b, conv_w, conv_b, point_w, point_b;

  EncoderBlock(std::size_t cin, std::size_t cout, Rng& rng)
      : down_w(uniform_init<T>(Shape{cout, cin, 3, 3}, cin * 9, rng)),
        down_b(uniform_init<T>(Shape{cout, 1, 1, 1}, cin * 9, rng)),
        norm_g(const_init<T>(Shape{cout, 1, 1, 1}, T(1))),
        norm_b(const_init<T>(Shape{cout, 1, 1, 1}, T(0))),
        conv_w(uniform_init<T>(Shape{cout, cout, 3, 3}, cout * 9, rng)),
        conv_b(uniform_init<T>(Shape{cout, 1, 1, 1}, cout * 9, rng)),
        point_w(uniform_init<T>(Shape{cout, cout, 1, 1}, cout, rng)),
        point_b(uniform_init<T>(Shape{cout, 1, 1, 1}, cout, rng)) {}

  BasicTensor<T> forward(const BasicTensor<T>& x) const {
    const ConvOptions down{2, 1, 1, Padding::reflect};
    const ConvOptions same{1, 1, 1, Padding::reflect};
    const auto r = relu(layer_norm(conv2d(x, down_w, down_b, down), norm_g, norm_b, T(1e-6)));
    const auto h = relu(conv2d(r, conv_w, conv_b, same));
    return add(conv2d(h, point_w, point_b), r);
  }

  template <class F>
  void visit(const std::string& prefix, F&& f) {
    f(prefix + "down.weight", down_w);
    f(prefix + "down.bias", down_b);
    f(prefix + "norm.gamma", norm_g);
    f(prefix + "norm.beta", norm_b);
    f(prefix + "conv.weight", conv_w);
    f(prefix + "conv.bias", conv_b);
    f(prefix + "point.weight", point_w);
    f(prefix + "point.bias", point_b);
  }
};

template <class T>
class BasicEncoder {
 public:
  explicit BasicEncoder(const EncoderConfig& cfg = {}) : cfg_(cfg) {
    if (cfg.in_channels != 3 && cfg.in_channels != 4) {
      throw std::invalid_argument("encoder: in_channels must be 3 or 4, got " + std::to_string(cfg.in_channels));
    }
    if (cfg.input_size % 8 != 0 || cfg.input_size < 16) {
      throw std::invalid_argument("encoder: input_size must be a multiple of 8 and at least 16");
    }
    Rng rng(cfg.seed);
    std::size_t cin = cfg.in_channels;
    for (const std::size_t c : cfg.channels) {
      blocks_.emplace_back(cin, c, rng);
      cin = c;
    }
  }

  const EncoderConfig& config() const noexcept { return cfg_; }
  std::size_t feature_channels() const noexcept { return cfg_.channels.back(); }

  BasicTensor<T> forward(const BasicTensor<T>& x) const { return forward_all(x).back(); }

  /// Outputs of every block, shallowest first.
  std::vector<BasicTensor<T>> forward_all(const BasicTensor<T>& x) const {
    if (x.shape().c != cfg_.in_channels) {
      throw std::invalid_argument("encoder: expected " + std::to_string(cfg_.in_channels) + " input channels, got " +
                                  to_string(x.shape()));
    }
    std::vector<BasicTensor<T>> outs;
    BasicTensor<T> h = resize_bilinear(x, cfg_.input_size, cfg_.input_size);
    for (const auto& b : blocks_) {
      h = b.forward(h);
      outs.push_back(h);
    }
    return outs;
  }

  template <class F>
  void visit(const std::string& prefix, F&& f) {
    for (std::size_t i = 0; i < blocks_.size(); ++i) blocks_[i].visit(prefix + "block" + std::to_string(i) + ".", f);
  }

  std::size_t parameter_count() {
    std::size_t total = 0;
    visit("", [&](const std::string&, BasicTensor<T>& t) { total += t.size(); });
    return total;
  }

 private:
  EncoderConfig cfg_;
  std::vector<EncoderBlock<T>> blocks_;
};

using Encoder = BasicEncoder<float>;

}  // namespace dynisp
