#pragma once

// The dynamically controlled ISP: encoder -> controller -> white-box pipeline,
// with an optional DNN denoiser whose depthwise filter the controller emits.
//
// Parameter names (checkpoint entries):
//   encoder.block{0,1,2}.{down,conv,point}.{weight,bias}, encoder.block*.norm.{gamma,beta}
//   controller.project.{weight,bias}                      (global mode with projection)
//   controller.<stage>.decode.{weight,bias}, controller.<stage>.key.{0,1}.{weight,bias}
//   denoiser.{in,mid,head}.{weight,bias}                  (when the denoiser is enabled)

#include <algorithm>
#include <functional>
#include <optional>
#include <set>
#include <string>
#include <utility>
#include <vector>

#include "dynisp/controller.hpp"
#include "dynisp/denoiser.hpp"
#include "dynisp/encoder.hpp"
#include "dynisp/ispops.hpp"
#include "dynisp/tensor_io.hpp"

namespace dynisp {

struct ModelConfig {
  PipelineConfig pipeline{};
  InputMode input = InputMode::rgb;
  EncoderConfig encoder{};
  ControllerConfig controller{};
  DenoiserConfig denoiser{};

  /// Copy with derived fields made consistent (channel counts, filter shape).
  ModelConfig resolved() const {
    ModelConfig c = *this;
    c.encoder.in_channels = input == InputMode::rgb ? 3 : 4;
    c.denoiser.input = input;
    c.controller.feature_channels = c.encoder.channels.back();
    c.controller.filter = c.denoiser.filter();
    return c;
  }
};

template <class T>
struct ForwardResult {
  BasicTensor<T> output;
  ParamSets<T> params;
  // Denoiser input (or its demosaic) and output; empty without a denoiser.
  BasicTensor<T> denoise_in;
  BasicTensor<T> denoise_out;
};

template <class T>
class BasicModel {
 public:
  explicit BasicModel(const ModelConfig& cfg, const ParamSpecTable& table = {})
      : cfg_(cfg.resolved()),
        encoder_(cfg_.encoder),
        controller_(cfg_.controller, decode_order(cfg_.pipeline), table) {
    if (cfg_.pipeline.denoise) denoiser_.emplace(cfg_.denoiser);
    if (cfg_.input == InputMode::bayer4 && cfg_.pipeline.inv_tone_map) {
      throw std::invalid_argument("model: inverse tone mapping is not available for Bayer input");
    }
  }

  const ModelConfig& config() const noexcept { return cfg_; }
  BasicEncoder<T>& encoder() noexcept { return encoder_; }
  BasicController<T>& controller() noexcept { return controller_; }
  const BasicController<T>& controller() const noexcept { return controller_; }
  BasicDenoiser<T>* denoiser() noexcept { return denoiser_ ? &*denoiser_ : nullptr; }

  void set_specs(const ParamSpecTable& table) { controller_.set_specs(table); }

  /// Current search space of every controlled stage.
  ParamSpecTable specs() const {
    ParamSpecTable t;
    for (const auto& l : controller_.layers())
      for (const auto& s : l.specs) t.set(s);
    return t;
  }

  ForwardResult<T> forward(const BasicTensor<T>& x) const {
    ForwardResult<T> r;
    r.params = controller_.control(encoder_.forward(x));
    DenoiseFn<T> dn;
    if (denoiser_) {
      dn = [this, &r](const BasicTensor<T>& in, const BasicTensor<T>& taps) {
        r.denoise_in = denoiser_->residual_source(in);
        r.denoise_out = denoiser_->forward(in, taps);
        return r.denoise_out;
      };
    }
    r.output = run_pipeline(x, r.params, cfg_.pipeline, dn);
    return r;
  }

  template <class F>
  void visit(F&& f) {
    encoder_.visit("encoder.", f);
    controller_.visit("controller.", f);
    if (denoiser_) denoiser_->visit("denoiser.", f);
  }

  std::vector<std::pair<std::string, BasicTensor<T>>> named_parameters() {
    std::vector<std::pair<std::string, BasicTensor<T>>> out;
    visit([&](const std::string& name, BasicTensor<T>& t) { out.emplace_back(name, t); });
    return out;
  }

  std::size_t parameter_count() {
    std::size_t n = 0;
    visit([&](const std::string&, BasicTensor<T>& t) { n += t.size(); });
    return n;
  }

  NamedTensors state() {
    NamedTensors out;
    visit([&](const std::string& name, BasicTensor<T>& t) { out.emplace_back(name, cast<float>(t)); });
    return out;
  }

  /// Copies matching entries into the model. Returns the names of model
  /// parameters the checkpoint did not provide; throws on shape mismatch, and
  /// on any missing or unknown entry when `strict`.
  std::vector<std::string> load_state(const NamedTensors& entries, bool strict = true) {
    std::vector<std::string> missing;
    std::set<std::string> used;
    visit([&](const std::string& name, BasicTensor<T>& t) {
      const auto it = std::find_if(entries.begin(), entries.end(), [&](const auto& e) { return e.first == name; });
      if (it == entries.end()) {
        missing.push_back(name);
        return;
      }
      if (!(it->second.shape() == t.shape())) {
        throw std::invalid_argument("checkpoint entry " + name + " has shape " + to_string(it->second.shape()) +
                                    ", model expects " + to_string(t.shape()));
      }
      auto dst = t.mutable_values();
      const auto src = it->second.values();
      for (std::size_t i = 0; i < dst.size(); ++i) dst[i] = static_cast<T>(src[i]);
      used.insert(name);
    });
    if (strict) {
      if (!missing.empty()) throw std::invalid_argument("checkpoint lacks entry " + missing.front());
      for (const auto& e : entries)
        if (!used.count(e.first)) throw std::invalid_argument("checkpoint has unknown entry " + e.first);
    }
    return missing;
  }

  void save(const std::string& path) { save_container(path, state()); }
  std::vector<std::string> load(const std::string& path, bool strict = true) {
    return load_state(load_container(path), strict);
  }

  /// FNV-1a over the names and raw values of parameters accepted by `select`.
  std::uint64_t weights_hash(const std::function<bool(const std::string&)>& select) {
    std::uint64_t h = fnv1a(nullptr, 0);
    visit([&](const std::string& name, BasicTensor<T>& t) {
      if (select && !select(name)) return;
      h = fnv1a(name.data(), name.size(), h);
      h = fnv1a(t.values().data(), t.size() * sizeof(T), h);
    });
    return h;
  }

  void zero_grad() {
    visit([](const std::string&, BasicTensor<T>& t) { t.zero_grad(); });
  }

 private:
  ModelConfig cfg_;
  BasicEncoder<T> encoder_;
  BasicController<T> controller_;
  std::optional<BasicDenoiser<T>> denoiser_;
};

using Model = BasicModel<float>;

}  // namespace dynisp
