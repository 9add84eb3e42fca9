#pragma once

// Parameter controller. A latent V is decoded into one stage's parameters,
//   P = P_min + (P_max - P_min) * sigmoid(P_hat + W V),
// then updated for the next stage by group-wise sigmoid cross-attention:
//   q = V as (virtual_seq, E), k = mlp((P - P_min) / (P_max - P_min)) as (E, E),
//   V' = V * 5 * sigmoid(q k / sqrt(E)).
// Global control pools the encoder features (and optionally projects them);
// local control runs the same computation at every feature-map site and
// returns coarse parameter maps that consumers upsample bilinearly.

#include <cmath>
#include <limits>
#include <string>
#include <vector>

#include "dynisp/ispops.hpp"
#include "dynisp/module.hpp"
#include "dynisp/params.hpp"
#include "dynisp/spatial.hpp"

namespace dynisp {

enum class ControlMode { global, local };

inline const char* mode_name(ControlMode m) { return m == ControlMode::global ? "global" : "local"; }

struct ControllerConfig {
  ControlMode mode = ControlMode::global;
  std::size_t feature_channels = 96;
  std::size_t latent = 256;
  /// Global mode only: map the pooled features to `latent` channels. When
  /// false the pooled features are the latent, as in local mode.
  bool project = true;
  std::size_t virtual_seq = 8;
  double gate_ceiling = 5.0;
  FilterShape filter{};
  std::uint64_t seed = 2;

  std::size_t latent_channels() const {
    return mode == ControlMode::global && project ? latent : feature_channels;
  }
  std::size_t emb_dim() const { return latent_channels() / virtual_seq; }
};

/// Latent decode order for a pipeline. The filter comes last so that adding
/// it never changes the latents seen by the colour stages.
inline std::vector<Stage> decode_order(const PipelineConfig& p) {
  std::vector<Stage> s;
  if (p.inv_tone_map) s.push_back(Stage::inv_tone);
  if (p.color_correct) s.push_back(Stage::ccm);
  if (p.gain) s.push_back(Stage::gain);
  if (p.tone_map) s.push_back(Stage::tone);
  if (p.contrast) s.push_back(Stage::contrast);
  if (p.denoise) s.push_back(Stage::filter);
  return s;
}

/// Maps pre-activations (rows, K, 1, 1) into the open intervals of `specs`.
/// Results are nudged inward when float rounding would land on a bound.
template <class T>
BasicTensor<T> bounded_sigmoid(const BasicTensor<T>& pre, const std::vector<ParamSpec>& specs) {
  const Shape s = pre.shape();
  if (s.c != specs.size() || s.h != 1 || s.w != 1) {
    throw std::invalid_argument("bounded_sigmoid: pre-activations " + to_string(s) + " for " +
                                std::to_string(specs.size()) + " parameters");
  }
  const auto pv = pre.values();
  std::vector<T> out(pre.size());
  for (std::size_t i = 0; i < out.size(); ++i) {
    const ParamSpec& sp = specs[i % s.c];
    const double sig = 1.0 / (1.0 + std::exp(-static_cast<double>(pv[i])));
    T y = static_cast<T>(sp.min + (sp.max - sp.min) * sig);
    const T lo = static_cast<T>(sp.min), hi = static_cast<T>(sp.max);
    if (!(y < hi)) y = std::nextafter(hi, lo);
    if (!(y > lo)) y = std::nextafter(lo, hi);
    out[i] = y;
  }
  return detail::make_result<T>(s, std::move(out), "bounded_sigmoid", {&pre},
                                [pre, specs, s](std::span<const T> g, std::span<const T>) {
                                  T* gp = detail::grad_of(pre);
                                  if (!gp) return;
                                  const auto pv = pre.values();
                                  for (std::size_t i = 0; i < pv.size(); ++i) {
                                    const ParamSpec& sp = specs[i % s.c];
                                    const double sig = 1.0 / (1.0 + std::exp(-static_cast<double>(pv[i])));
                                    gp[i] += g[i] * static_cast<T>((sp.max - sp.min) * sig * (1.0 - sig));
                                  }
                                });
}

/// Weights of one controlled stage.
template <class T>
struct ControlLayer {
  Stage stage;
  std::vector<ParamSpec> specs;
  BasicTensor<T> lower, range;  // constants (1, K, 1, 1)
  BasicTensor<T> dec_w, bias, key_w1, key_b1, key_w2, key_b2;

  ControlLayer(Stage s, std::vector<ParamSpec> sp, std::size_t latent, std::size_t emb, Rng& rng)
      : stage(s), specs(std::move(sp)) {
    const std::size_t k = specs.size();
    const std::size_t hidden = 4 * emb;
    dec_w = uniform_init<T>(Shape{k, latent, 1, 1}, latent, rng);
    bias = const_init<T>(Shape{1, k, 1, 1}, T(0));
    key_w1 = uniform_init<T>(Shape{hidden, k, 1, 1}, k, rng);
    key_b1 = uniform_init<T>(Shape{1, hidden, 1, 1}, k, rng);
    key_w2 = uniform_init<T>(Shape{emb * emb, hidden, 1, 1}, hidden, rng);
    key_b2 = uniform_init<T>(Shape{1, emb * emb, 1, 1}, hidden, rng);
    set_specs(specs);
  }

  void set_specs(const std::vector<ParamSpec>& sp) {
    if (sp.size() != dec_w.shape().n) {
      throw std::invalid_argument(std::string("controller: ") + std::to_string(sp.size()) + " specs for stage " +
                                  stage_name(stage) + " with arity " + std::to_string(dec_w.shape().n));
    }
    specs = sp;
    std::vector<T> lo(sp.size()), rg(sp.size());
    for (std::size_t i = 0; i < sp.size(); ++i) {
      lo[i] = static_cast<T>(sp[i].min);
      rg[i] = static_cast<T>(sp[i].max - sp[i].min);
    }
    lower = BasicTensor<T>(Shape{1, sp.size(), 1, 1}, std::move(lo));
    range = BasicTensor<T>(Shape{1, sp.size(), 1, 1}, std::move(rg));
  }

  template <class F>
  void visit(const std::string& prefix, F&& f) {
    f(prefix + "decode.weight", dec_w);
    f(prefix + "decode.bias", bias);
    f(prefix + "key.0.weight", key_w1);
    f(prefix + "key.0.bias", key_b1);
    f(prefix + "key.1.weight", key_w2);
    f(prefix + "key.1.bias", key_b2);
  }
};

template <class T>
class BasicController {
 public:
  BasicController(const ControllerConfig& cfg, const std::vector<Stage>& order, const ParamSpecTable& table = {})
      : cfg_(cfg) {
    if (cfg.virtual_seq == 0 || cfg.latent_channels() % cfg.virtual_seq != 0) {
      throw std::invalid_argument("controller: latent width " + std::to_string(cfg.latent_channels()) +
                                  " is not divisible by virtual_seq " + std::to_string(cfg.virtual_seq));
    }
    Rng rng(cfg.seed);
    if (cfg.mode == ControlMode::global && cfg.project) {
      proj_w_ = uniform_init<T>(Shape{cfg.latent, cfg.feature_channels, 1, 1}, cfg.feature_channels, rng);
      proj_b_ = uniform_init<T>(Shape{1, cfg.latent, 1, 1}, cfg.feature_channels, rng);
    }
    for (const Stage s : order) {
      layers_.emplace_back(s, table.stage(s, cfg.filter), cfg.latent_channels(), cfg.emb_dim(), rng);
    }
  }

  const ControllerConfig& config() const noexcept { return cfg_; }
  std::vector<ControlLayer<T>>& layers() noexcept { return layers_; }
  const std::vector<ControlLayer<T>>& layers() const noexcept { return layers_; }

  ControlLayer<T>& layer(Stage s) {
    for (auto& l : layers_)
      if (l.stage == s) return l;
    throw std::out_of_range(std::string("controller: no layer for stage ") + stage_name(s));
  }

  void set_specs(const ParamSpecTable& table) {
    for (auto& l : layers_) l.set_specs(table.stage(l.stage, cfg_.filter));
  }

  /// Initial latent: (n, C_v) in global mode, (n*h*w, C_v) rows in local mode.
  BasicTensor<T> initial_state(const BasicTensor<T>& features) const {
    if (features.shape().c != cfg_.feature_channels) {
      throw std::invalid_argument("controller: expected " + std::to_string(cfg_.feature_channels) +
                                  " feature channels, got " + to_string(features.shape()));
    }
    if (cfg_.mode == ControlMode::local) return to_rows(features);
    const auto pooled = global_avg_pool(features).reshape(Shape{features.shape().n, cfg_.feature_channels, 1, 1});
    return cfg_.project ? linear(pooled, proj_w_, proj_b_) : pooled;
  }

  BasicTensor<T> decode_params(const BasicTensor<T>& state, const ControlLayer<T>& l) const {
    return bounded_sigmoid(linear(state, l.dec_w, l.bias), l.specs);
  }

  /// The multiplicative gates 5 * sigmoid(q k * scale), shaped like the state.
  BasicTensor<T> attention_gates(const BasicTensor<T>& state, const BasicTensor<T>& params,
                                 const ControlLayer<T>& l) const {
    const std::size_t rows = state.shape().n;
    const std::size_t vs = cfg_.virtual_seq, e = cfg_.emb_dim();
    if (state.shape().c != vs * e) {
      throw std::invalid_argument("controller: state " + to_string(state.shape()) + " does not have " +
                                  std::to_string(vs * e) + " channels");
    }
    const auto norm = div(sub(params, l.lower), l.range);
    const auto key = linear(relu(linear(norm, l.key_w1, l.key_b1)), l.key_w2, l.key_b2);
    const auto q = state.reshape(Shape{rows, 1, vs, e});
    const auto k = key.reshape(Shape{rows, 1, e, e});
    const T s = static_cast<T>(1.0 / std::sqrt(static_cast<double>(e)));
    const auto gates = scale(sigmoid(scale(batched_matmul(q, k), s)), static_cast<T>(cfg_.gate_ceiling));
    return gates.reshape(Shape{rows, vs * e, 1, 1});
  }

  BasicTensor<T> update_state(const BasicTensor<T>& state, const BasicTensor<T>& params,
                              const ControlLayer<T>& l) const {
    return mul(state, attention_gates(state, params, l));
  }

  /// Decodes every stage. Global mode yields (n, K, 1, 1) tensors, local mode
  /// (n, K, h, w) maps at the feature resolution.
  ParamSets<T> control(const BasicTensor<T>& features) const {
    const Shape fs = features.shape();
    BasicTensor<T> state = initial_state(features);
    ParamSets<T> out;
    for (std::size_t i = 0; i < layers_.size(); ++i) {
      const auto& l = layers_[i];
      const auto p = decode_params(state, l);
      if (cfg_.mode == ControlMode::local) {
        out[l.stage] = from_rows(p, fs.n, fs.h, fs.w);
      } else {
        out[l.stage] = p;
      }
      if (i + 1 < layers_.size()) state = update_state(state, p, l);
    }
    return out;
  }

  template <class F>
  void visit(const std::string& prefix, F&& f) {
    if (!proj_w_.empty()) {
      f(prefix + "project.weight", proj_w_);
      f(prefix + "project.bias", proj_b_);
    }
    for (auto& l : layers_) l.visit(prefix + stage_name(l.stage) + ".", f);
  }

 private:
  ControllerConfig cfg_;
  BasicTensor<T> proj_w_, proj_b_;
  std::vector<ControlLayer<T>> layers_;
};

using Controller = BasicController<float>;

}  // namespace dynisp
