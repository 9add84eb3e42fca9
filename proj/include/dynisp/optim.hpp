#pragma once

// AdamW with decoupled weight decay, a warmup + cosine learning-rate
// schedule, and global-norm gradient clipping.

#include <algorithm>
#include <cmath>
#include <numbers>
#include <vector>

#include "dynisp/tensor.hpp"

namespace dynisp {

struct LrSchedule {
  double lr_max = 1e-4;
  double lr_min = 1e-7;
  std::size_t warmup = 1000;
  std::size_t total = 1;

  /// Linear ramp lr_max * i / warmup, then cosine decay to lr_min at `total`.
  double at(std::size_t i) const {
    if (i < warmup) return lr_max * static_cast<double>(i) / static_cast<double>(warmup);
    const double span = total > warmup ? static_cast<double>(total - warmup) : 1.0;
    const double progress = std::min(1.0, static_cast<double>(i - warmup) / span);
    return lr_min + 0.5 * (lr_max - lr_min) * (1.0 + std::cos(std::numbers::pi * progress));
  }
};

struct AdamWConfig {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double weight_decay = 0.01;
};

/// Scales all gradients so their joint L2 norm is at most `max_norm`.
/// Returns the norm before clipping.
template <class T>
double clip_grad_norm(std::vector<BasicTensor<T>>& params, double max_norm) {
  double sq = 0.0;
  for (const auto& p : params) {
    if (!p.has_grad()) continue;
    for (const T g : p.node()->grad) sq += static_cast<double>(g) * static_cast<double>(g);
  }
  const double norm = std::sqrt(sq);
  if (max_norm > 0.0 && norm > max_norm) {
    const T s = static_cast<T>(max_norm / (norm + 1e-12));
    for (auto& p : params)
      if (p.has_grad())
        for (T& g : p.node()->grad) g *= s;
  }
  return norm;
}

template <class T>
class AdamW {
 public:
  AdamW(std::vector<BasicTensor<T>> params, const AdamWConfig& cfg = {}) : params_(std::move(params)), cfg_(cfg) {
    for (const auto& p : params_) {
      m_.emplace_back(p.size(), 0.0);
      v_.emplace_back(p.size(), 0.0);
    }
  }

  std::vector<BasicTensor<T>>& params() noexcept { return params_; }
  std::size_t steps() const noexcept { return t_; }

  void step(double lr) {
    ++t_;
    const double bc1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(t_));
    const double bc2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(t_));
    for (std::size_t k = 0; k < params_.size(); ++k) {
      auto& p = params_[k];
      auto w = p.mutable_values();
      const bool has = p.has_grad();
      for (std::size_t i = 0; i < w.size(); ++i) {
        const double g = has ? static_cast<double>(p.node()->grad[i]) : 0.0;
        double x = static_cast<double>(w[i]) * (1.0 - lr * cfg_.weight_decay);
        m_[k][i] = cfg_.beta1 * m_[k][i] + (1.0 - cfg_.beta1) * g;
        v_[k][i] = cfg_.beta2 * v_[k][i] + (1.0 - cfg_.beta2) * g * g;
        x -= lr * (m_[k][i] / bc1) / (std::sqrt(v_[k][i] / bc2) + cfg_.eps);
        w[i] = static_cast<T>(x);
      }
    }
  }

 private:
  std::vector<BasicTensor<T>> params_;
  AdamWConfig cfg_;
  std::vector<std::vector<double>> m_, v_;
  std::size_t t_ = 0;
};

}  // namespace dynisp
