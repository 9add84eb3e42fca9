#pragma once

// Property checks shared by the unit tests and the acceptance runner:
// operator invariants, controller contracts and local/global consistency.

#include <algorithm>
#include <cmath>
#include <limits>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "dynisp/dynisp.hpp"

namespace dynisp::testing {

/// Named measurements against limits.
struct Report {
  struct Item {
    std::string name;
    double value;
    double limit;
    bool ok;
  };
  std::vector<Item> items;
  std::size_t samples = 0;

  void at_most(const std::string& name, double value, double limit) {
    items.push_back({name, value, limit, value <= limit});
  }
  void at_least(const std::string& name, double value, double limit) {
    items.push_back({name, value, limit, value >= limit});
  }
  bool ok() const {
    return std::all_of(items.begin(), items.end(), [](const Item& i) { return i.ok; });
  }
  std::string summary() const {
    std::ostringstream os;
    for (const auto& i : items) os << "  " << (i.ok ? "ok  " : "FAIL") << " " << i.name << " = " << i.value << " (limit " << i.limit << ")\n";
    return os.str();
  }
};

/// One stage's parameters drawn uniformly from its default search space, (1, 9, 1, 1).
template <class T>
BasicTensor<T> random_stage_params(Stage s, Rng& rng) {
  const auto specs = default_stage_specs(s);
  std::vector<T> v(specs.size());
  for (std::size_t i = 0; i < v.size(); ++i) {
    double x;
    do {
      x = std::uniform_real_distribution<double>(specs[i].min, specs[i].max)(rng);
    } while (x <= specs[i].min);  // open interval, as the controller produces
    v[i] = static_cast<T>(x);
  }
  const Shape shape{1, v.size(), 1, 1};
  return BasicTensor<T>(shape, std::move(v));
}

/// (1, 3, 1, grid) ramp from 0 to 1 in every channel.
template <class T>
BasicTensor<T> unit_grid(std::size_t grid) {
  std::vector<T> v(3 * grid);
  for (std::size_t c = 0; c < 3; ++c)
    for (std::size_t i = 0; i < grid; ++i) v[c * grid + i] = static_cast<T>(static_cast<double>(i) / (grid - 1));
  return BasicTensor<T>(Shape{1, 3, 1, grid}, std::move(v));
}

namespace detail {

template <class T>
BasicTensor<T> apply_stage(Stage s, const BasicTensor<T>& x, const BasicTensor<T>& p) {
  switch (s) {
    case Stage::gain: return gain(x, p);
    case Stage::contrast: return contrast_stretch(x, p);
    case Stage::tone: return tone_map(x, p);
    case Stage::inv_tone: return inv_tone_map(x, p);
    default: return color_correct(x, p);
  }
}

/// Largest jump of the operator across its two breakpoints, evaluated in
/// double at the breakpoint and at the adjacent representable value on the
/// other branch.
inline double breakpoint_jump(Stage s, const BasicTensor<double>& p) {
  double worst = 0.0;
  for (std::size_t c = 0; c < 3; ++c) {
    const double pw = p.values()[3 + c];
    double px = p.values()[6 + c];
    if (s == Stage::gain) px = std::pow(10.0, px);
    const double x1 = px * (1.0 - pw), x2 = x1 + pw;
    for (const auto& [at, beside] : {std::pair{x1, std::nextafter(x1, 0.0)}, std::pair{x2, std::nextafter(x2, 1.0)}}) {
      std::vector<double> v(6, 0.5);
      v[c * 2] = at;
      v[c * 2 + 1] = beside;
      const auto y = apply_stage(s, BasicTensor<double>(Shape{1, 3, 1, 2}, v), p);
      worst = std::max(worst, std::abs(y.values()[c * 2] - y.values()[c * 2 + 1]));
    }
  }
  return worst;
}

}  // namespace detail

/// Range closure, endpoints, breakpoint continuity, monotonicity and the
/// tone-map identity over `draws` random in-space parameter sets.
inline Report operator_invariants(std::size_t draws, std::size_t grid, std::uint64_t seed) {
  Rng rng(seed);
  Report r;
  double range = 0, endpoint = 0, jump = 0, drop = 0, identity = 0;
  const auto x = unit_grid<float>(grid);
  for (std::size_t d = 0; d < draws; ++d) {
    for (const Stage s : {Stage::gain, Stage::contrast, Stage::tone}) {
      const auto p = random_stage_params<double>(s, rng);
      const auto y = detail::apply_stage(s, x, cast<float>(p));
      for (std::size_t c = 0; c < 3; ++c) {
        const auto row = y.values().subspan(c * grid, grid);
        for (const float v : row) range = std::max({range, static_cast<double>(-v), static_cast<double>(v) - 1.0});
        endpoint = std::max({endpoint, std::abs(static_cast<double>(row.front())),
                             std::abs(static_cast<double>(row.back()) - 1.0)});
        for (std::size_t i = 1; i < grid; ++i) drop = std::max(drop, static_cast<double>(row[i - 1] - row[i]));
      }
      if (s != Stage::tone) jump = std::max(jump, detail::breakpoint_jump(s, p));
      ++r.samples;
    }
    // Tone identity: gamma1 = gamma2 = 1 with k anywhere in its range.
    auto p = random_stage_params<float>(Stage::tone, rng);
    for (std::size_t i = 0; i < 6; ++i) p.mutable_values()[i] = 1.0f;
    const auto y = tone_map(x, p);
    for (std::size_t i = 0; i < x.size(); ++i)
      identity = std::max(identity, std::abs(static_cast<double>(y.values()[i] - x.values()[i])));
  }
  r.at_most("range violation outside [0,1]", range, 0.0);
  r.at_most("endpoint error |f(0)|, |f(1)-1|", endpoint, 1e-6);
  r.at_most("breakpoint jump (gain, contrast)", jump, 1e-6);
  // Float rounding where a branch switches can reorder neighbours by an ulp.
  r.at_most("monotonicity drop between grid neighbours", drop, 1e-6);
  r.at_most("tone-map identity error at gamma1 = gamma2 = 1", identity, 1e-6);
  return r;
}

/// Decoded parameters stay strictly inside their bounds for random latents,
/// the attention gate stays within [0, 5], and a zero key gives exactly 2.5.
inline Report controller_contracts(std::size_t latents, std::uint64_t seed) {
  Rng rng(seed);
  Report r;
  ControllerConfig cfg;
  cfg.seed = seed;
  PipelineConfig pipe;
  pipe.inv_tone_map = true;
  pipe.denoise = true;
  const auto order = decode_order(pipe);
  Controller ctrl(cfg, order, ParamSpecTable::defaults(order, cfg.filter));

  std::size_t outside = 0, values = 0;
  double gate_min = std::numeric_limits<double>::infinity(), gate_max = -gate_min, ratio_excess = 0;
  std::normal_distribution<float> g(0.0f, 1.0f);
  std::uniform_real_distribution<float> spread(0.0f, 50.0f);
  for (std::size_t t = 0; t < latents; ++t) {
    // Latent scales up to 50 drive many pre-activations deep into saturation.
    const float sd = spread(rng);
    std::vector<float> v(cfg.latent_channels());
    for (auto& e : v) e = sd * g(rng);
    const Shape shape{1, v.size(), 1, 1};
    Tensor state(shape, std::move(v));
    for (const auto& l : ctrl.layers()) {
      const auto p = ctrl.decode_params(state, l);
      for (std::size_t i = 0; i < p.size(); ++i) {
        const double x = p.values()[i];
        ++values;
        if (!(x > static_cast<float>(l.specs[i].min) && x < static_cast<float>(l.specs[i].max))) ++outside;
      }
      const auto gates = ctrl.attention_gates(state, p, l);
      const auto next = ctrl.update_state(state, p, l);
      for (std::size_t i = 0; i < gates.size(); ++i) {
        gate_min = std::min(gate_min, static_cast<double>(gates.values()[i]));
        gate_max = std::max(gate_max, static_cast<double>(gates.values()[i]));
        // Compared in float: gate <= 5 and rounding is monotone, so fl(g v) <= fl(5 v).
        const float bound = 5.0f * std::abs(state.values()[i]);
        ratio_excess = std::max(ratio_excess, static_cast<double>(std::abs(next.values()[i])) - bound);
      }
      state = next;
    }
  }
  r.samples = values;
  r.at_most("decoded values on or outside their bounds", static_cast<double>(outside), 0.0);
  r.at_least("smallest attention gate", gate_min, 0.0);
  r.at_most("largest attention gate", gate_max, 5.0);
  r.at_most("max(|V_l| - 5 |V_l-1|)", ratio_excess, 0.0);

  // Zero key MLP output: gates are 5 * sigmoid(0) = 2.5 exactly.
  Controller zero(cfg, order, ParamSpecTable::defaults(order, cfg.filter));
  std::size_t zero_mismatch = 0;
  for (auto& l : zero.layers()) {
    for (auto& e : l.key_w2.mutable_values()) e = 0.0f;
    for (auto& e : l.key_b2.mutable_values()) e = 0.0f;
  }
  for (std::size_t t = 0; t < 16; ++t) {
    std::vector<float> v(cfg.latent_channels());
    for (auto& e : v) e = 3.0f * g(rng);
    const Shape shape{1, v.size(), 1, 1};
    const Tensor state(shape, std::move(v));
    for (const auto& l : zero.layers()) {
      const auto next = zero.update_state(state, zero.decode_params(state, l), l);
      for (std::size_t i = 0; i < next.size(); ++i)
        // Equality rather than a difference, which the compiler may fuse into an FMA.
        zero_mismatch += next.values()[i] == 2.5f * state.values()[i] ? 0 : 1;
    }
  }
  r.at_most("zero-key elements with V_l != 2.5 V_l-1", static_cast<double>(zero_mismatch), 0.0);
  return r;
}

/// Spatially constant (n, c, h, w) feature map with per-channel random values.
inline Tensor constant_features(std::size_t n, std::size_t c, std::size_t hw, Rng& rng) {
  std::normal_distribution<float> g(0.0f, 1.0f);
  Tensor f(Shape{n, c, hw, hw});
  auto v = f.mutable_values();
  for (std::size_t i = 0; i < n * c; ++i) {
    const float x = g(rng);
    std::fill(v.begin() + static_cast<long>(i * hw * hw), v.begin() + static_cast<long>((i + 1) * hw * hw), x);
  }
  return f;
}

/// Local and global control, sharing weights (no projection), produce the
/// same pipeline output on constant features; the denoiser runs with a
/// random head so its upsampled per-site filter is exercised.
inline Report local_global_consistency(std::size_t height, std::size_t width, std::size_t trials, std::uint64_t seed) {
  Rng rng(seed);
  Report r;
  double out_err = 0, param_err = 0;
  for (std::size_t t = 0; t < trials; ++t) {
    PipelineConfig pipe;
    pipe.denoise = true;
    pipe.inv_tone_map = t % 2 == 1;
    ControllerConfig gc;
    gc.project = false;
    gc.seed = seed + t;
    ControllerConfig lc = gc;
    lc.mode = ControlMode::local;
    const auto order = decode_order(pipe);
    const auto table = ParamSpecTable::defaults(order, gc.filter);
    const Controller global(gc, order, table), local(lc, order, table);

    DenoiserConfig dc;
    dc.seed = seed + 100 + t;
    Denoiser dn(dc);
    std::uniform_real_distribution<float> head(-0.05f, 0.05f);
    dn.visit("", [&](const std::string& name, Tensor& w) {
      if (name.rfind("head", 0) == 0)
        for (auto& e : w.mutable_values()) e = head(rng);
    });
    const DenoiseFn<float> fn = [&dn](const Tensor& x, const Tensor& taps) { return dn.forward(x, taps); };

    const auto features = constant_features(1, gc.feature_channels, 28, rng);
    const auto pg = global.control(features);
    const auto pl = local.control(features);
    for (const auto& [stage, map] : pl) {
      const auto& s = pg.at(stage);
      const std::size_t k = s.shape().c, plane = map.shape().plane();
      for (std::size_t j = 0; j < k; ++j)
        for (std::size_t q = 0; q < plane; ++q)
          param_err = std::max(param_err, std::abs(static_cast<double>(map.values()[j * plane + q] - s.values()[j])));
    }
    std::uniform_real_distribution<float> u(0.0f, 1.0f);
    std::vector<float> v(3 * height * width);
    for (auto& e : v) e = u(rng);
    const Tensor x(Shape{1, 3, height, width}, std::move(v));
    const auto yg = run_pipeline(x, pg, pipe, fn);
    const auto yl = run_pipeline(x, pl, pipe, fn);
    for (std::size_t i = 0; i < yg.size(); ++i)
      out_err = std::max(out_err, std::abs(static_cast<double>(yg.values()[i] - yl.values()[i])));
    r.samples += yg.size();
  }
  r.at_most("max |local param map - global param|", param_err, 1e-5);
  r.at_most("max |local output - global output|", out_err, 1e-5);
  return r;
}

}  // namespace dynisp::testing
