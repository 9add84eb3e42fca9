#pragma once

// Run configuration: plain-text `key = value` lines grouped under [section]
// headers, `#` comments. The schema (sections, keys, defaults) is
// documented in docs/config.md. The parameter search space is either a
// [space] section of `name = min,max` lines or `space.table = <path>`.

#include <algorithm>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <map>
#include <memory>
#include <set>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "dynisp/model.hpp"
#include "dynisp/module.hpp"
#include "dynisp/training.hpp"

namespace dynisp {

class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Flat key/value store; keys are `section.key`.
class KeyValueFile {
 public:
  static KeyValueFile parse(const std::string& text, const std::string& origin = "<config>") {
    KeyValueFile f;
    std::istringstream is(text);
    std::string line, section;
    std::size_t line_no = 0;
    while (std::getline(is, line)) {
      ++line_no;
      if (const auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
      line = trim(line);
      if (line.empty()) continue;
      const std::string where = origin + ":" + std::to_string(line_no);
      if (line.front() == '[') {
        if (line.back() != ']') throw ConfigError(where + ": unterminated section header");
        section = trim(line.substr(1, line.size() - 2));
        if (section.empty()) throw ConfigError(where + ": empty section name");
        f.sections_.insert(section);
        continue;
      }
      const auto eq = line.find('=');
      if (eq == std::string::npos) throw ConfigError(where + ": expected key = value");
      const std::string key = trim(line.substr(0, eq));
      if (key.empty()) throw ConfigError(where + ": empty key");
      const std::string path = section.empty() ? key : section + "." + key;
      if (f.values_.count(path)) throw ConfigError(where + ": duplicate key " + path);
      f.values_[path] = trim(line.substr(eq + 1));
      f.order_.push_back(path);
    }
    return f;
  }

  static KeyValueFile load(const std::string& path) {
    std::ifstream is(path);
    if (!is) throw ConfigError("cannot read config " + path);
    std::stringstream ss;
    ss << is.rdbuf();
    return parse(ss.str(), path);
  }

  bool has(const std::string& key) const { return values_.count(key) != 0; }
  bool has_section(const std::string& s) const { return sections_.count(s) != 0; }
  const std::map<std::string, std::string>& values() const noexcept { return values_; }
  const std::vector<std::string>& order() const noexcept { return order_; }

  void set(const std::string& key, const std::string& value) {
    if (!values_.count(key)) order_.push_back(key);
    values_[key] = value;
  }

  std::string get(const std::string& key, const std::string& fallback) const {
    const auto it = values_.find(key);
    return it == values_.end() ? fallback : it->second;
  }

  double get_double(const std::string& key, double fallback) const {
    const auto it = values_.find(key);
    if (it == values_.end()) return fallback;
    try {
      std::size_t used = 0;
      const double v = std::stod(it->second, &used);
      if (used == it->second.size()) return v;
    } catch (const std::exception&) {
    }
    throw ConfigError(key + ": expected a number, got '" + it->second + "'");
  }

  std::size_t get_size(const std::string& key, std::size_t fallback) const {
    const auto it = values_.find(key);
    if (it == values_.end()) return fallback;
    const std::string& s = it->second;
    if (s.empty() || !std::all_of(s.begin(), s.end(), [](unsigned char c) { return std::isdigit(c); })) {
      throw ConfigError(key + ": expected a non-negative integer, got '" + s + "'");
    }
    return static_cast<std::size_t>(std::stoull(s));
  }

  bool get_bool(const std::string& key, bool fallback) const {
    const auto it = values_.find(key);
    if (it == values_.end()) return fallback;
    if (it->second == "true" || it->second == "1" || it->second == "yes") return true;
    if (it->second == "false" || it->second == "0" || it->second == "no") return false;
    throw ConfigError(key + ": expected true or false, got '" + it->second + "'");
  }

  std::vector<std::size_t> get_sizes(const std::string& key, const std::vector<std::size_t>& fallback) const {
    const auto it = values_.find(key);
    if (it == values_.end()) return fallback;
    std::vector<std::size_t> out;
    std::istringstream is(it->second);
    std::string tok;
    while (std::getline(is, tok, ',')) {
      tok = trim(tok);
      if (tok.empty() || !std::all_of(tok.begin(), tok.end(), [](unsigned char c) { return std::isdigit(c); })) {
        throw ConfigError(key + ": expected a comma-separated list of integers, got '" + it->second + "'");
      }
      out.push_back(static_cast<std::size_t>(std::stoull(tok)));
    }
    if (out.empty()) throw ConfigError(key + ": empty list");
    return out;
  }

  std::string choice(const std::string& key, const std::string& fallback, std::initializer_list<const char*> allowed) const {
    const std::string v = get(key, fallback);
    for (const char* a : allowed)
      if (v == a) return v;
    std::string list;
    for (const char* a : allowed) list += std::string(list.empty() ? "" : ", ") + a;
    throw ConfigError(key + ": '" + v + "' is not one of {" + list + "}");
  }

  /// Sorted `key=value` lines; stable across formatting and key order.
  std::string canonical() const {
    std::string out;
    for (const auto& [k, v] : values_) out += k + "=" + v + "\n";
    return out;
  }

  static std::string trim(const std::string& s) {
    const auto a = s.find_first_not_of(" \t\r");
    if (a == std::string::npos) return {};
    return s.substr(a, s.find_last_not_of(" \t\r") - a + 1);
  }

 private:
  std::map<std::string, std::string> values_;
  std::vector<std::string> order_;
  std::set<std::string> sections_;
};

struct RunConfig {
  ModelConfig model{};
  TrainConfig train{};
  AtpsConfig atps{};
  ParamSpecTable space{};
  std::string manifest;
  double val_fraction = 0.1;
  std::string feature_extractor = "random";
  std::uint64_t feature_seed = 7;
  std::size_t staged_a = 2000, staged_b = 2000, staged_c = 1000;
  double finetune_lr_scale = 0.1;
  std::string hash;  // FNV-1a of the canonical key list, hex
};

namespace detail {

inline const std::map<std::string, std::set<std::string>>& config_schema() {
  static const std::map<std::string, std::set<std::string>> schema{
      {"model", {"mode", "input", "encoder_size", "encoder_channels", "latent", "project", "virtual_seq", "seed",
                 "denoiser_channels", "denoiser_kernel", "denoiser_seed"}},
      {"pipeline", {"inv_tone_map", "denoise", "color_correct", "gain", "tone_map", "contrast"}},
      {"train", {"iterations", "batch", "lr_max", "lr_min", "warmup", "beta1", "beta2", "eps", "weight_decay",
                 "clip_norm", "divergence_loss", "feature_weight", "local_weight", "local_kernel", "local_stride",
                 "flips", "rotations", "crop", "seed", "log_every", "feature_extractor", "feature_seed"}},
      {"atps", {"runs", "r", "seed", "min_width_fraction", "ledger"}},
      {"staged", {"stage_a_iterations", "stage_b_iterations", "stage_c_iterations", "finetune_lr_scale"}},
      {"data", {"manifest", "val_fraction"}},
  };
  return schema;
}

inline std::string hex64(std::uint64_t v) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
  return buf;
}

inline std::string resolve_path(const std::string& base_dir, const std::string& p) {
  if (p.empty() || std::filesystem::path(p).is_absolute() || base_dir.empty()) return p;
  return (std::filesystem::path(base_dir) / p).string();
}

}  // namespace detail

/// Validates every key against the schema and builds the run configuration.
/// Relative paths resolve against `base_dir`.
inline RunConfig make_run_config(const KeyValueFile& kv, const std::string& base_dir = "") {
  const auto& schema = detail::config_schema();
  for (const auto& key : kv.order()) {
    const auto dot = key.find('.');
    if (dot == std::string::npos) throw ConfigError(key + ": key outside any section");
    const std::string section = key.substr(0, dot), name = key.substr(dot + 1);
    if (section == "space") continue;
    const auto it = schema.find(section);
    if (it == schema.end()) throw ConfigError(key + ": unknown section [" + section + "]");
    if (!it->second.count(name)) throw ConfigError(key + ": unknown key");
  }

  RunConfig rc;
  auto& m = rc.model;
  m.controller.mode = kv.choice("model.mode", "global", {"global", "local"}) == "global" ? ControlMode::global
                                                                                          : ControlMode::local;
  m.input = kv.choice("model.input", "rgb", {"rgb", "bayer4"}) == "rgb" ? InputMode::rgb : InputMode::bayer4;
  m.encoder.input_size = kv.get_size("model.encoder_size", m.encoder.input_size);
  if (m.encoder.input_size < 8) throw ConfigError("model.encoder_size: must be at least 8");
  const auto channels = kv.get_sizes("model.encoder_channels", {m.encoder.channels.begin(), m.encoder.channels.end()});
  if (channels.size() != m.encoder.channels.size()) throw ConfigError("model.encoder_channels: expected 3 values");
  std::copy(channels.begin(), channels.end(), m.encoder.channels.begin());
  m.encoder.seed = kv.get_size("model.seed", m.encoder.seed);
  m.controller.seed = m.encoder.seed + 1;
  m.controller.latent = kv.get_size("model.latent", m.controller.latent);
  m.controller.project = kv.get_bool("model.project", m.controller.project);
  m.controller.virtual_seq = kv.get_size("model.virtual_seq", m.controller.virtual_seq);
  if (m.controller.virtual_seq == 0) throw ConfigError("model.virtual_seq: must be positive");
  m.denoiser.mid_channels = kv.get_size("model.denoiser_channels", m.denoiser.mid_channels);
  m.denoiser.kernel = kv.get_size("model.denoiser_kernel", m.denoiser.kernel);
  if (m.denoiser.kernel % 2 == 0) throw ConfigError("model.denoiser_kernel: must be odd");
  m.denoiser.seed = kv.get_size("model.denoiser_seed", m.denoiser.seed);

  auto& p = m.pipeline;
  p.inv_tone_map = kv.get_bool("pipeline.inv_tone_map", p.inv_tone_map);
  p.denoise = kv.get_bool("pipeline.denoise", p.denoise);
  p.color_correct = kv.get_bool("pipeline.color_correct", p.color_correct);
  p.gain = kv.get_bool("pipeline.gain", p.gain);
  p.tone_map = kv.get_bool("pipeline.tone_map", p.tone_map);
  p.contrast = kv.get_bool("pipeline.contrast", p.contrast);
  if (m.input == InputMode::bayer4 && p.inv_tone_map) {
    throw ConfigError("pipeline.inv_tone_map: not available with model.input = bayer4");
  }

  auto& t = rc.train;
  t.iterations = kv.get_size("train.iterations", t.iterations);
  t.batch = kv.get_size("train.batch", t.batch);
  if (t.iterations == 0) throw ConfigError("train.iterations: must be positive");
  if (t.batch == 0) throw ConfigError("train.batch: must be positive");
  t.schedule.lr_max = kv.get_double("train.lr_max", t.schedule.lr_max);
  t.schedule.lr_min = kv.get_double("train.lr_min", t.schedule.lr_min);
  if (!(t.schedule.lr_max > 0.0)) throw ConfigError("train.lr_max: must be positive");
  if (!(t.schedule.lr_min >= 0.0 && t.schedule.lr_min <= t.schedule.lr_max)) {
    throw ConfigError("train.lr_min: must lie in [0, train.lr_max]");
  }
  t.schedule.warmup = kv.get_size("train.warmup", t.schedule.warmup);
  t.adamw.beta1 = kv.get_double("train.beta1", t.adamw.beta1);
  t.adamw.beta2 = kv.get_double("train.beta2", t.adamw.beta2);
  t.adamw.eps = kv.get_double("train.eps", t.adamw.eps);
  t.adamw.weight_decay = kv.get_double("train.weight_decay", t.adamw.weight_decay);
  t.clip_norm = kv.get_double("train.clip_norm", t.clip_norm);
  t.divergence_loss = kv.get_double("train.divergence_loss", t.divergence_loss);
  t.loss.feature = kv.get_double("train.feature_weight", t.loss.feature);
  t.loss.local = kv.get_double("train.local_weight", t.loss.local);
  t.loss.local_kernel = kv.get_size("train.local_kernel", t.loss.local_kernel);
  t.loss.local_stride = kv.get_size("train.local_stride", t.loss.local_stride);
  t.augment.flips = kv.get_bool("train.flips", true);
  t.augment.rotations = kv.get_bool("train.rotations", true);
  t.augment.crop = kv.get_size("train.crop", t.augment.crop);
  t.seed = kv.get_size("train.seed", t.seed);
  t.log_every = kv.get_size("train.log_every", t.log_every);
  rc.feature_extractor = detail::resolve_path(base_dir, kv.get("train.feature_extractor", "random"));
  rc.feature_seed = kv.get_size("train.feature_seed", rc.feature_seed);

  auto& a = rc.atps;
  a.runs = kv.get_sizes("atps.runs", a.runs);
  for (const auto r : a.runs)
    if (r == 0) throw ConfigError("atps.runs: every stage needs at least one run");
  a.r = kv.get_double("atps.r", a.r);
  if (!(a.r > 0.0 && a.r <= 1.0)) throw ConfigError("atps.r: must lie in (0, 1]");
  a.seed = kv.get_size("atps.seed", a.seed);
  a.min_width_fraction = kv.get_double("atps.min_width_fraction", a.min_width_fraction);
  a.ledger_path = detail::resolve_path(base_dir, kv.get("atps.ledger", ""));

  rc.staged_a = kv.get_size("staged.stage_a_iterations", rc.staged_a);
  rc.staged_b = kv.get_size("staged.stage_b_iterations", rc.staged_b);
  rc.staged_c = kv.get_size("staged.stage_c_iterations", rc.staged_c);
  rc.finetune_lr_scale = kv.get_double("staged.finetune_lr_scale", rc.finetune_lr_scale);

  rc.manifest = detail::resolve_path(base_dir, kv.get("data.manifest", ""));
  rc.val_fraction = kv.get_double("data.val_fraction", rc.val_fraction);
  if (!(rc.val_fraction >= 0.0 && rc.val_fraction < 1.0)) throw ConfigError("data.val_fraction: must lie in [0, 1)");

  // Search space: defaults for the enabled stages, then overrides.
  const ModelConfig resolved = m.resolved();
  rc.space = ParamSpecTable::defaults(p.stages(), resolved.controller.filter);
  if (kv.has("space.table")) {
    const std::string path = detail::resolve_path(base_dir, kv.get("space.table", ""));
    ParamSpecTable loaded;
    try {
      loaded = ParamSpecTable::load(path);
    } catch (const std::exception& e) {
      throw ConfigError(std::string("space.table: ") + e.what());
    }
    for (const auto& s : loaded.entries()) rc.space.set(s);
  }
  for (const auto& key : kv.order()) {
    if (key.rfind("space.", 0) != 0 || key == "space.table") continue;
    const std::string name = key.substr(6);
    try {
      const ParamSpecTable one = ParamSpecTable::parse(name + "=" + kv.get(key, ""));
      rc.space.set(one.entries().front());
    } catch (const std::exception& e) {
      throw ConfigError(key + ": " + e.what());
    }
  }
  const ParamSpecTable known = ParamSpecTable::defaults(p.stages(), resolved.controller.filter);
  for (const auto& s : rc.space.entries())
    if (!known.find(s.name)) throw ConfigError("space." + s.name + ": no such parameter in the enabled stages");

  rc.hash = detail::hex64(fnv1a(kv.canonical().data(), kv.canonical().size()));
  return rc;
}

/// Model config with every initialisation seed derived from one run seed.
inline ModelConfig seeded(ModelConfig m, std::uint64_t seed) {
  m.encoder.seed = 3 * seed + 1;
  m.controller.seed = 3 * seed + 2;
  m.denoiser.seed = 3 * seed + 3;
  return m;
}

/// Null when the feature term is off; otherwise the random stack or a loaded checkpoint.
inline std::unique_ptr<BasicFeatureExtractor<float>> make_feature_extractor(const RunConfig& rc) {
  if (rc.train.loss.feature == 0.0) return nullptr;
  if (rc.feature_extractor == "random") {
    return std::make_unique<ConvFeatureStack<float>>(ConvFeatureStack<float>::random(rc.feature_seed));
  }
  return std::make_unique<ConvFeatureStack<float>>(ConvFeatureStack<float>::from_container(load_container(rc.feature_extractor)));
}

inline RunConfig load_run_config(const std::string& path) {
  const auto base = std::filesystem::path(path).parent_path().string();
  return make_run_config(KeyValueFile::load(path), base);
}

}  // namespace dynisp
