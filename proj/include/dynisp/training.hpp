#pragma once

// Training loop, search-space auto-tuning (ATPS) and staged denoiser training.
//
// Ledger records, one per line and parameter:
//   stage,seed,epoch_loss,param_name,min,max
// A failed run writes a single record with param_name FAILED.

#include <sys/file.h>

#include <cmath>
#include <cstdio>
#include <functional>
#include <limits>
#include <map>
#include <numeric>
#include <optional>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

#include "dynisp/dataset.hpp"
#include "dynisp/losses.hpp"
#include "dynisp/metrics.hpp"
#include "dynisp/model.hpp"
#include "dynisp/optim.hpp"

namespace dynisp {

struct TrainConfig {
  std::size_t iterations = 2000;
  std::size_t batch = 16;
  LrSchedule schedule{};  // `total` is taken from `iterations`
  AdamWConfig adamw{};
  double clip_norm = 1.0;
  double divergence_loss = 1e3;
  LossWeights loss{};
  AugmentConfig augment{};
  std::uint64_t seed = 0;
  /// Parameters to update; null trains everything.
  std::function<bool(const std::string&)> trainable;
  std::size_t log_every = 0;
  std::ostream* log = nullptr;
};

struct ParamExtremum {
  std::string name;
  double min = 0.0;
  double max = 0.0;
};

struct TrainResult {
  std::vector<double> epoch_losses;
  /// Mean loss over the final epoch (the last ceil(N / batch) iterations).
  double final_loss = std::numeric_limits<double>::quiet_NaN();
  /// Range of every decoded parameter over the final epoch.
  std::vector<ParamExtremum> used;
  bool failed = false;
  std::string failure;
  std::size_t iterations = 0;
  std::size_t augmentations = 0;
};

namespace detail {

template <class T>
void merge_extrema(std::map<std::string, ParamExtremum>& acc, const BasicModel<T>& model, const ParamSets<T>& params) {
  for (const auto& layer : model.controller().layers()) {
    const auto it = params.find(layer.stage);
    if (it == params.end()) continue;
    const Shape s = it->second.shape();
    const std::size_t plane = s.plane();
    const auto v = it->second.values();
    for (std::size_t k = 0; k < s.c; ++k) {
      const std::string& name = layer.specs[k].name;
      auto [e, fresh] = acc.try_emplace(name, ParamExtremum{name, std::numeric_limits<double>::infinity(),
                                                            -std::numeric_limits<double>::infinity()});
      for (std::size_t n = 0; n < s.n; ++n)
        for (std::size_t p = 0; p < plane; ++p) {
          const double x = static_cast<double>(v[(n * s.c + k) * plane + p]);
          e->second.min = std::min(e->second.min, x);
          e->second.max = std::max(e->second.max, x);
        }
    }
  }
}

template <class T>
BasicTensor<T> stack(const std::vector<BasicTensor<T>>& parts, const char* what) {
  try {
    return concat_batch(parts);
  } catch (const std::invalid_argument& e) {
    throw std::invalid_argument(std::string(what) + ": samples in a batch must share one size (" + e.what() +
                                "); set a crop size");
  }
}

}  // namespace detail

/// Trains `model` in place. Deterministic for a fixed config and seed.
template <class T>
TrainResult train(BasicModel<T>& model, const Dataset<T>& data, const TrainConfig& cfg,
                  const BasicFeatureExtractor<T>* fx = nullptr) {
  if (data.empty()) throw std::invalid_argument("train: empty dataset");
  if (cfg.batch == 0 || cfg.iterations == 0) throw std::invalid_argument("train: batch and iterations must be positive");
  TrainResult result;

  std::vector<BasicTensor<T>> params;
  std::vector<BasicTensor<T>> frozen;
  model.visit([&](const std::string& name, BasicTensor<T>& t) {
    if (!cfg.trainable || cfg.trainable(name)) {
      params.push_back(t);
    } else {
      frozen.push_back(t);
    }
  });
  if (params.empty()) throw std::invalid_argument("train: no trainable parameters");
  // Frozen tensors leave the graph entirely so their backward work is skipped.
  for (auto& t : frozen) t.set_requires_grad(false);

  AdamW<T> opt(params, cfg.adamw);
  LrSchedule sched = cfg.schedule;
  sched.total = cfg.iterations;

  const std::size_t n = data.size();
  const std::size_t per_epoch = (n + cfg.batch - 1) / cfg.batch;
  const std::size_t final_from = cfg.iterations > per_epoch ? cfg.iterations - per_epoch : 0;
  std::vector<std::size_t> order(n);
  Rng aug_rng(cfg.seed * 0x9E3779B97F4A7C15ull + 17);
  double epoch_sum = 0.0, final_sum = 0.0;
  std::size_t epoch_count = 0, final_count = 0;
  std::map<std::string, ParamExtremum> extrema;

  for (std::size_t it = 0; it < cfg.iterations; ++it) {
    const std::size_t pos = it % per_epoch;
    if (pos == 0) {
      std::iota(order.begin(), order.end(), std::size_t{0});
      Rng shuffle_rng(cfg.seed * 1000003ull + it / per_epoch);
      std::shuffle(order.begin(), order.end(), shuffle_rng);
    }
    std::vector<BasicTensor<T>> xs, ys;
    for (std::size_t b = pos * cfg.batch; b < std::min(n, (pos + 1) * cfg.batch); ++b) {
      Sample<T> s = data[order[b]];
      result.augmentations += augment_pair(s, cfg.augment, aug_rng);
      xs.push_back(s.input);
      ys.push_back(s.target);
    }
    const auto x = detail::stack(xs, "train");
    const auto y = detail::stack(ys, "train");

    double loss_value = std::numeric_limits<double>::quiet_NaN();
    try {
      BasicTape<T> tape;
      typename BasicTape<T>::Scope scope(tape);
      const auto fwd = model.forward(x);
      const auto terms = total_loss(fwd.output, y, fwd.denoise_in, fwd.denoise_out, cfg.loss, fx);
      loss_value = static_cast<double>(terms.total.item());
      if (!(loss_value <= cfg.divergence_loss)) throw std::domain_error("loss " + std::to_string(loss_value));
      model.zero_grad();
      tape.backward(terms.total);
      clip_grad_norm(params, cfg.clip_norm);
      opt.step(sched.at(it));
      if (it >= final_from) detail::merge_extrema(extrema, model, fwd.params);
    } catch (const std::domain_error& e) {
      result.failed = true;
      result.failure = "diverged at iteration " + std::to_string(it) + ": " + e.what();
      break;
    }

    epoch_sum += loss_value;
    ++epoch_count;
    if (it >= final_from) {
      final_sum += loss_value;
      ++final_count;
    }
    if (pos + 1 == per_epoch || it + 1 == cfg.iterations) {
      result.epoch_losses.push_back(epoch_sum / static_cast<double>(epoch_count));
      epoch_sum = 0.0;
      epoch_count = 0;
    }
    result.iterations = it + 1;
    if (cfg.log && cfg.log_every && (it + 1) % cfg.log_every == 0) {
      *cfg.log << "iter " << it + 1 << " loss " << loss_value << " lr " << sched.at(it) << "\n";
    }
  }
  for (auto& t : frozen) t.set_requires_grad(true);
  model.zero_grad();
  if (cfg.log && data.front().input.shape().c == 4) *cfg.log << "augmentations: none (bayer input)\n";
  if (!result.failed) {
    result.final_loss = final_sum / static_cast<double>(final_count);
    for (const auto& layer : model.controller().layers())
      for (const auto& s : layer.specs)
        if (const auto e = extrema.find(s.name); e != extrema.end()) result.used.push_back(e->second);
  } else if (cfg.log) {
    *cfg.log << "run failed: " << result.failure << "\n";
  }
  return result;
}

/// Mean per-image PSNR of the model on `data`, evaluated one sample at a time.
template <class T>
double evaluate_psnr(const BasicModel<T>& model, const Dataset<T>& data) {
  if (data.empty()) throw std::invalid_argument("evaluate_psnr: empty dataset");
  double total = 0.0;
  for (const auto& s : data) total += psnr(model.forward(s.input).output, s.target);
  return total / static_cast<double>(data.size());
}

// ---- ATPS ---------------------------------------------------------------------

struct AtpsConfig {
  std::vector<std::size_t> runs{5, 4};
  double r = 0.7;
  std::uint64_t seed = 0;
  /// Refined intervals narrower than this fraction of the previous width are
  /// widened about their centre (staying inside the previous bounds).
  double min_width_fraction = 1e-3;
  std::string ledger_path;
  std::ostream* log = nullptr;
};

template <class T>
using ModelFactory = std::function<BasicModel<T>(std::uint64_t seed, const ParamSpecTable& table)>;

struct AtpsRun {
  std::uint64_t seed = 0;
  TrainResult result;
};

struct AtpsStage {
  std::vector<AtpsRun> runs;
  std::optional<std::size_t> best;
  ParamSpecTable before;
  ParamSpecTable after;
};

struct AtpsResult {
  ParamSpecTable table;
  NamedTensors best_checkpoint;
  std::uint64_t best_seed = 0;
  std::vector<AtpsStage> stages;
};

/// new_min = r * used_min + (1 - r) * old_min, likewise for max. Parameters
/// absent from `used` keep their bounds.
inline ParamSpecTable refine_bounds(const ParamSpecTable& table, const std::vector<ParamExtremum>& used, double r,
                                    double min_width_fraction = 0.0) {
  if (!(r > 0.0 && r <= 1.0)) throw std::invalid_argument("refine_bounds: r must lie in (0, 1]");
  ParamSpecTable out = table;
  for (const auto& e : used) {
    const ParamSpec* old = table.find(e.name);
    if (!old) continue;
    ParamSpec s = *old;
    const double lo = std::clamp(e.min, old->min, old->max);
    const double hi = std::clamp(e.max, old->min, old->max);
    s.min = r * lo + (1.0 - r) * old->min;
    s.max = r * hi + (1.0 - r) * old->max;
    const double floor_width = std::max(min_width_fraction * (old->max - old->min), 0.0);
    if (!(s.max - s.min > floor_width) || !(s.min < s.max)) {
      const double half = std::max(floor_width, 1e-9 * (old->max - old->min)) / 2.0;
      const double c = std::clamp(0.5 * (s.min + s.max), old->min + half, old->max - half);
      s.min = c - half;
      s.max = c + half;
    }
    out.set(s);
  }
  return out;
}

inline void append_ledger(const std::string& path, const std::string& text) {
  if (path.empty()) return;
  std::FILE* f = std::fopen(path.c_str(), "a");
  if (!f) throw std::runtime_error("cannot open ledger " + path);
  ::flock(::fileno(f), LOCK_EX);
  std::fwrite(text.data(), 1, text.size(), f);
  std::fflush(f);
  ::flock(::fileno(f), LOCK_UN);
  std::fclose(f);
}

inline std::string ledger_lines(std::size_t stage, std::uint64_t seed, const TrainResult& r) {
  std::ostringstream os;
  os.precision(std::numeric_limits<double>::max_digits10);
  if (r.failed) {
    os << stage << "," << seed << ",nan,FAILED,nan,nan\n";
    return os.str();
  }
  for (const auto& e : r.used) os << stage << "," << seed << "," << r.final_loss << "," << e.name << "," << e.min << "," << e.max << "\n";
  return os.str();
}

/// Runs `runs[s]` seeded trainings per stage, keeps the run with the lowest
/// final-epoch loss and shrinks the search space towards its used range.
template <class T>
AtpsResult atps(const ModelFactory<T>& factory, const Dataset<T>& data, const TrainConfig& train_cfg,
                const AtpsConfig& cfg, const ParamSpecTable& initial, const BasicFeatureExtractor<T>* fx = nullptr) {
  if (!(cfg.r > 0.0 && cfg.r <= 1.0)) throw std::invalid_argument("atps: r must lie in (0, 1]");
  AtpsResult out;
  out.table = initial;
  for (std::size_t stage = 0; stage < cfg.runs.size(); ++stage) {
    if (cfg.runs[stage] == 0) throw std::invalid_argument("atps: every stage needs at least one run");
    AtpsStage st;
    st.before = out.table;
    double best_loss = std::numeric_limits<double>::infinity();
    NamedTensors best_state;
    for (std::size_t t = 0; t < cfg.runs[stage]; ++t) {
      const std::uint64_t seed = cfg.seed + 1000 * stage + t;
      BasicModel<T> model = factory(seed, out.table);
      TrainConfig tc = train_cfg;
      tc.seed = seed;
      AtpsRun run{seed, train(model, data, tc, fx)};
      append_ledger(cfg.ledger_path, ledger_lines(stage, seed, run.result));
      if (cfg.log) {
        *cfg.log << "atps stage " << stage << " seed " << seed << " "
                 << (run.result.failed ? "failed: " + run.result.failure : "loss " + std::to_string(run.result.final_loss))
                 << "\n";
      }
      if (!run.result.failed && run.result.final_loss < best_loss) {
        best_loss = run.result.final_loss;
        st.best = st.runs.size();
        best_state = model.state();
      }
      st.runs.push_back(std::move(run));
    }
    if (st.best) {
      out.table = refine_bounds(out.table, st.runs[*st.best].result.used, cfg.r, cfg.min_width_fraction);
      // The checkpoint reported is the best run of the latest stage that produced one.
      out.best_checkpoint = std::move(best_state);
      out.best_seed = st.runs[*st.best].seed;
    } else if (cfg.log) {
      *cfg.log << "atps stage " << stage << ": all runs failed, bounds kept\n";
    }
    st.after = out.table;
    out.stages.push_back(std::move(st));
  }
  return out;
}

// ---- staged denoiser training -------------------------------------------------

template <class T>
using StagedFactory = std::function<BasicModel<T>(std::uint64_t seed, const ParamSpecTable& table, bool denoise)>;

struct StagedConfig {
  AtpsConfig atps{};
  TrainConfig train{};
  std::size_t stage_a_iterations = 2000;
  std::size_t stage_b_iterations = 2000;
  std::size_t stage_c_iterations = 1000;
  double finetune_lr_scale = 0.1;
};

struct StagedResult {
  AtpsResult stage_a;
  TrainResult stage_b;
  TrainResult stage_c;
  NamedTensors checkpoint;
  ParamSpecTable table;
  std::uint64_t seed = 0;
  double val_psnr_a = 0.0;
  double val_psnr_b = 0.0;
  double val_psnr_c = 0.0;
  bool frozen_unchanged = false;
  std::size_t frozen_tensors = 0;
};

/// Parameters trained while the colour stages are frozen.
inline bool denoiser_parameter(const std::string& name) {
  return name.rfind("denoiser.", 0) == 0 || name.rfind("controller.filter.", 0) == 0;
}

/// A: search-space tuning of the pipeline without denoiser. B: denoiser and
/// its filter decoder trained with everything else frozen. C: joint finetune
/// at a reduced learning rate.
template <class T>
StagedResult staged_denoiser_training(const StagedFactory<T>& factory, const Dataset<T>& train_data,
                                      const Dataset<T>& val_data, const StagedConfig& cfg,
                                      const ParamSpecTable& initial, const BasicFeatureExtractor<T>* fx = nullptr) {
  StagedResult out;
  TrainConfig a = cfg.train;
  a.iterations = cfg.stage_a_iterations;
  out.stage_a = atps<T>([&](std::uint64_t seed, const ParamSpecTable& t) { return factory(seed, t, false); },
                        train_data, a, cfg.atps, initial, fx);
  if (out.stage_a.best_checkpoint.empty()) throw std::runtime_error("staged training: every stage-A run failed");
  out.seed = out.stage_a.best_seed;
  out.table = out.stage_a.table;
  {
    BasicModel<T> colour = factory(out.seed, out.table, false);
    colour.load_state(out.stage_a.best_checkpoint, true);
    out.val_psnr_a = evaluate_psnr(colour, val_data);
  }

  BasicModel<T> model = factory(out.seed, out.table, true);
  const auto missing = model.load_state(out.stage_a.best_checkpoint, false);
  for (const auto& name : missing) {
    if (!denoiser_parameter(name)) throw std::runtime_error("staged training: checkpoint lacks " + name);
  }
  const auto frozen = [](const std::string& name) { return !denoiser_parameter(name); };
  model.visit([&](const std::string& name, BasicTensor<T>&) { out.frozen_tensors += frozen(name) ? 1 : 0; });
  const std::uint64_t before = model.weights_hash(frozen);

  TrainConfig b = cfg.train;
  b.iterations = cfg.stage_b_iterations;
  b.seed = out.seed;
  b.trainable = denoiser_parameter;
  out.stage_b = train(model, train_data, b, fx);
  out.frozen_unchanged = model.weights_hash(frozen) == before;
  out.val_psnr_b = evaluate_psnr(model, val_data);

  TrainConfig c = cfg.train;
  c.iterations = cfg.stage_c_iterations;
  c.seed = out.seed + 1;
  c.schedule.lr_max *= cfg.finetune_lr_scale;
  c.schedule.lr_min = std::min(c.schedule.lr_min, c.schedule.lr_max);
  out.stage_c = train(model, train_data, c, fx);
  out.val_psnr_c = evaluate_psnr(model, val_data);
  out.checkpoint = model.state();
  return out;
}

}  // namespace dynisp
