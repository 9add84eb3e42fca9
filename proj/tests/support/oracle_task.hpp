#pragma once

// Synthetic oracle task: smooth random images mapped through the pipeline
// with fixed hidden parameters, optionally with Gaussian noise on the input.

#include <random>
#include <string>
#include <vector>

#include "dynisp/dynisp.hpp"

namespace dynisp::testing {

/// Hidden in-space parameters, family-major per stage.
inline ParamSets<float> hidden_params() {
  ParamSets<float> p;
  p[Stage::ccm] = Tensor(Shape{1, 9, 1, 1}, {1.15f, -0.10f, 0.05f, -0.12f, 1.05f, -0.08f, 0.02f, -0.15f, 1.25f});
  p[Stage::gain] = Tensor(Shape{1, 9, 1, 1}, {0.62f, 0.58f, 0.55f, 0.42f, 0.38f, 0.35f, -0.45f, -0.55f, -0.40f});
  p[Stage::tone] = Tensor(Shape{1, 9, 1, 1}, {1.80f, 2.00f, 2.20f, 1.50f, 1.30f, 1.20f, 0.50f, 0.60f, 0.40f});
  p[Stage::contrast] = Tensor(Shape{1, 9, 1, 1}, {0.56f, 0.52f, 0.60f, 0.44f, 0.40f, 0.48f, 0.50f, 0.45f, 0.55f});
  return p;
}

/// Name -> hidden value, using the search-space names.
inline std::vector<std::pair<std::string, double>> hidden_values() {
  std::vector<std::pair<std::string, double>> out;
  for (const auto& [stage, t] : hidden_params()) {
    const auto specs = default_stage_specs(stage);
    for (std::size_t k = 0; k < specs.size(); ++k) out.emplace_back(specs[k].name, t.values()[k]);
  }
  return out;
}

/// Smooth random image: coarse uniform noise upsampled bilinearly.
inline Tensor smooth_image(std::size_t size, Rng& rng, std::size_t coarse = 8) {
  std::uniform_real_distribution<float> u(0.02f, 0.98f);
  std::vector<float> v(3 * coarse * coarse);
  for (auto& x : v) x = u(rng);
  return bilinear_upsample(Tensor(Shape{1, 3, coarse, coarse}, std::move(v)), size, size);
}

inline Tensor with_noise(const Tensor& x, float sigma, Rng& rng) {
  std::normal_distribution<float> g(0.0f, sigma);
  std::vector<float> v(x.values().begin(), x.values().end());
  for (auto& e : v) e = std::clamp(e + g(rng), 0.0f, 1.0f);
  return Tensor(x.shape(), std::move(v));
}

inline PipelineConfig colour_pipeline() {
  PipelineConfig p;
  p.denoise = false;
  return p;
}

/// `count` pairs (input, hidden-pipeline(clean input)); `sigma` > 0 adds noise to the input only.
inline Dataset<float> oracle_dataset(std::size_t count, std::size_t size, std::uint64_t seed, float sigma = 0.0f) {
  Rng rng(seed);
  const auto hidden = hidden_params();
  Dataset<float> data;
  for (std::size_t i = 0; i < count; ++i) {
    const Tensor clean = smooth_image(size, rng);
    const Tensor target = run_pipeline(clean, hidden, colour_pipeline());
    const Tensor input = sigma > 0.0f ? with_noise(clean, sigma, rng) : clean;
    char id[32];
    std::snprintf(id, sizeof id, "img%03zu", i);
    data.push_back({id, input, target.detach()});
  }
  return data;
}

}  // namespace dynisp::testing
