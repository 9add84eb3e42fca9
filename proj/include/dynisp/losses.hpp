#pragma once

// Training loss: MSE + w_feat * feature loss + w_local * local L1 (when a
// denoiser is active). The feature loss compares activations of a frozen
// convolutional feature extractor; the default extractor is a seeded random
// stack, and trained weights can be loaded from a tensor container with
// entries feat.<i>.weight, feat.<i>.bias and feat.<i>.stride (one value).

#include <cmath>
#include <memory>
#include <string>
#include <vector>

#include "dynisp/conv.hpp"
#include "dynisp/denoiser.hpp"
#include "dynisp/module.hpp"
#include "dynisp/tensor_io.hpp"

namespace dynisp {

template <class T>
class BasicFeatureExtractor {
 public:
  virtual ~BasicFeatureExtractor() = default;
  /// Activations to compare, shallowest first.
  virtual std::vector<BasicTensor<T>> features(const BasicTensor<T>& x) const = 0;
};

template <class T>
class ConvFeatureStack : public BasicFeatureExtractor<T> {
 public:
  struct Layer {
    BasicTensor<T> weight, bias;
    std::size_t stride = 1;
  };

  explicit ConvFeatureStack(std::vector<Layer> layers) : layers_(std::move(layers)) {
    std::size_t cin = 3;
    for (const auto& l : layers_) {
      const Shape s = l.weight.shape();
      if (s.c != cin || s.h != 3 || s.w != 3 || l.bias.size() != s.n || l.stride == 0) {
        throw std::invalid_argument("feature extractor: layer " + to_string(s) + " does not follow " +
                                    std::to_string(cin) + " channels");
      }
      cin = s.n;
    }
  }

  /// 3->8 (s1), 8->16 (s2), 16->16 (s1), 16->32 (s2), He-uniform weights.
  static ConvFeatureStack random(std::uint64_t seed = 7) {
    Rng rng(seed);
    const std::size_t spec[4][3] = {{3, 8, 1}, {8, 16, 2}, {16, 16, 1}, {16, 32, 2}};
    std::vector<Layer> layers;
    for (const auto& s : spec) {
      const std::size_t fan_in = s[0] * 9;
      const double bound = std::sqrt(6.0 / static_cast<double>(fan_in));
      std::uniform_real_distribution<double> dist(-bound, bound);
      std::vector<T> w(s[1] * fan_in);
      for (auto& v : w) v = static_cast<T>(dist(rng));
      layers.push_back({BasicTensor<T>(Shape{s[1], s[0], 3, 3}, std::move(w)),
                        BasicTensor<T>(Shape{s[1], 1, 1, 1}, T(0)), s[2]});
    }
    return ConvFeatureStack(std::move(layers));
  }

  static ConvFeatureStack from_container(const NamedTensors& entries) {
    auto find = [&](const std::string& name) -> const Tensor* {
      for (const auto& e : entries)
        if (e.first == name) return &e.second;
      return nullptr;
    };
    std::vector<Layer> layers;
    for (std::size_t i = 0;; ++i) {
      const std::string p = "feat." + std::to_string(i) + ".";
      const Tensor* w = find(p + "weight");
      if (!w) break;
      const Tensor* b = find(p + "bias");
      const Tensor* s = find(p + "stride");
      if (!b || !s) throw std::invalid_argument("feature extractor: incomplete entries for " + p);
      layers.push_back({cast<T>(*w), cast<T>(*b), static_cast<std::size_t>(s->values()[0])});
    }
    if (layers.empty()) throw std::invalid_argument("feature extractor: container holds no feat.0.weight");
    return ConvFeatureStack(std::move(layers));
  }

  std::vector<BasicTensor<T>> features(const BasicTensor<T>& x) const override {
    std::vector<BasicTensor<T>> out;
    BasicTensor<T> h = x;
    for (const auto& l : layers_) {
      h = relu(conv2d(h, l.weight, l.bias, ConvOptions{l.stride, 1, 1, Padding::reflect}));
      out.push_back(h);
    }
    return out;
  }

 private:
  std::vector<Layer> layers_;
};

/// Mean over layers of the activation MSE between pred and gt.
template <class T>
BasicTensor<T> feature_loss(const BasicFeatureExtractor<T>& fx, const BasicTensor<T>& pred, const BasicTensor<T>& gt) {
  const auto fp = fx.features(pred);
  const auto fg = fx.features(gt.detach());
  if (fp.empty()) throw std::invalid_argument("feature_loss: extractor returned no layers");
  BasicTensor<T> total = mse(fp[0], fg[0]);
  for (std::size_t i = 1; i < fp.size(); ++i) total = add(total, mse(fp[i], fg[i]));
  return scale(total, static_cast<T>(1.0 / static_cast<double>(fp.size())));
}

struct LossWeights {
  double feature = 0.1;
  double local = 0.01;
  std::size_t local_kernel = 16;
  std::size_t local_stride = 8;
};

template <class T>
struct LossTerms {
  BasicTensor<T> total;
  double mse = 0.0;
  double feature = 0.0;
  double local = 0.0;
};

/// x_in / x_dn are the denoiser's residual source and output; pass empty
/// tensors when no denoiser runs. A null extractor or zero weight drops the
/// feature term.
template <class T>
LossTerms<T> total_loss(const BasicTensor<T>& pred, const BasicTensor<T>& gt, const BasicTensor<T>& x_in,
                        const BasicTensor<T>& x_dn, const LossWeights& w, const BasicFeatureExtractor<T>* fx) {
  if (!(pred.shape() == gt.shape())) {
    throw std::invalid_argument("total_loss: prediction " + to_string(pred.shape()) + " vs target " +
                                to_string(gt.shape()));
  }
  LossTerms<T> r;
  r.total = mse(pred, gt);
  r.mse = static_cast<double>(r.total.item());
  if (fx != nullptr && w.feature != 0.0) {
    const auto f = feature_loss(*fx, pred, gt);
    r.feature = static_cast<double>(f.item());
    r.total = add(r.total, scale(f, static_cast<T>(w.feature)));
  }
  if (!x_dn.empty() && w.local != 0.0) {
    const auto l = local_l1(x_in, x_dn, w.local_kernel, w.local_stride);
    r.local = static_cast<double>(l.item());
    r.total = add(r.total, scale(l, static_cast<T>(w.local)));
  }
  return r;
}

}  // namespace dynisp
