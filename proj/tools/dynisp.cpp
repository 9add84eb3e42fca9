// dynisp: command-line front end.
//
//   dynisp train      --config run.cfg --out model.dtnc [--staged]
//   dynisp tune-space --config run.cfg --out space.txt [--checkpoint best.dtnc]
//   dynisp infer      --config run.cfg --input DIR --output DIR [--checkpoint model.dtnc] [--dump-params FILE]
//   dynisp eval       --pred DIR --gt DIR [--ssim original_res|fivek_lowpass_256] [--report FILE]
//   dynisp bench      [--config run.cfg] [--resolution 480P|fullHD|4K|WxH] [--warmup 10] [--iterations 50]
//
// A checkpoint `X.dtnc` is written together with `X.dtnc.space`, the
// parameter search space its controller decodes into.

#include <CLI11.hpp>
#include <Eigen/Core>

#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <map>
#include <memory>
#include <string>

#include "dynisp/bench.hpp"
#include "dynisp/config.hpp"
#include "dynisp/dynisp.hpp"
#include "dynisp/image_io.hpp"
#include "dynisp/manifest.hpp"

namespace fs = std::filesystem;
using namespace dynisp;

namespace {

std::string space_path(const std::string& checkpoint) { return checkpoint + ".space"; }

RunConfig load_config(const std::string& path) {
  RunConfig rc = load_run_config(path);
  std::cout << "config " << path << " hash " << rc.hash << "\n";
  return rc;
}

Dataset<float> load_data(const RunConfig& rc) {
  if (rc.manifest.empty()) throw ConfigError("data.manifest: required for training");
  const auto m = DatasetManifest::load(rc.manifest);
  std::cout << "manifest " << rc.manifest << ": task " << task_name(m.task) << ", " << m.records.size() << " records"
            << (m.bayer ? ", rggb input" : "") << "\n";
  if (m.bayer != (rc.model.input == InputMode::bayer4)) {
    throw ConfigError("model.input: does not match the manifest pattern (" + std::string(m.bayer ? "rggb" : "rgb") + ")");
  }
  return ingest(m);
}

void save_checkpoint(BasicModel<float>& model, const std::string& out) {
  model.save(out);
  model.specs().save(space_path(out));
  std::cout << "wrote " << out << " (" << model.parameter_count() << " parameters)\n";
}

void report_used(const TrainResult& r) {
  for (const auto& e : r.used) std::cout << "used " << e.name << " " << e.min << " " << e.max << "\n";
}

int cmd_train(const std::string& config, const std::string& out, bool staged) {
  RunConfig rc = load_config(config);
  const auto data = load_data(rc);
  auto [train_set, val_set] = split_validation(data, rc.val_fraction);
  if (train_set.empty()) throw std::runtime_error("no training samples after the validation split");
  const auto fx = make_feature_extractor(rc);
  rc.train.log = &std::cout;
  if (rc.train.log_every == 0) rc.train.log_every = 100;

  if (!staged) {
    BasicModel<float> model(rc.model, rc.space);
    const TrainResult r = train(model, train_set, rc.train, fx.get());
    append_ledger(rc.atps.ledger_path, ledger_lines(0, rc.train.seed, r));
    std::cout << "augmentations " << r.augmentations << "\n";
    if (r.failed) throw std::runtime_error("training failed: " + r.failure);
    report_used(r);
    std::cout << "final epoch loss " << r.final_loss << "\n";
    std::cout << "train psnr " << evaluate_psnr(model, train_set) << "\n";
    if (!val_set.empty()) std::cout << "val psnr " << evaluate_psnr(model, val_set) << "\n";
    save_checkpoint(model, out);
    return 0;
  }

  if (!rc.model.pipeline.denoise) throw ConfigError("pipeline.denoise: staged training needs the denoiser enabled");
  if (val_set.empty()) throw ConfigError("data.val_fraction: staged training needs a validation split");
  StagedConfig sc;
  sc.atps = rc.atps;
  sc.atps.log = &std::cout;
  sc.train = rc.train;
  sc.stage_a_iterations = rc.staged_a;
  sc.stage_b_iterations = rc.staged_b;
  sc.stage_c_iterations = rc.staged_c;
  sc.finetune_lr_scale = rc.finetune_lr_scale;
  const ModelConfig base = rc.model;
  StagedFactory<float> factory = [&](std::uint64_t seed, const ParamSpecTable& t, bool denoise) {
    ModelConfig m = seeded(base, seed);
    m.pipeline.denoise = denoise;
    return BasicModel<float>(m, t);
  };
  const auto r = staged_denoiser_training(factory, train_set, val_set, sc, rc.space, fx.get());
  std::cout << "stage A val psnr " << r.val_psnr_a << "\nstage B val psnr " << r.val_psnr_b << "\nstage C val psnr "
            << r.val_psnr_c << "\nfrozen weights unchanged in stage B: " << (r.frozen_unchanged ? "yes" : "no") << "\n";
  BasicModel<float> model(seeded(base, r.seed), r.table);
  model.load_state(r.checkpoint, true);
  save_checkpoint(model, out);
  return 0;
}

int cmd_tune(const std::string& config, const std::string& out, const std::string& checkpoint) {
  RunConfig rc = load_config(config);
  const auto data = load_data(rc);
  auto [train_set, val_set] = split_validation(data, rc.val_fraction);
  if (train_set.empty()) throw std::runtime_error("no training samples after the validation split");
  const auto fx = make_feature_extractor(rc);
  rc.atps.log = &std::cout;
  const ModelConfig base = rc.model;
  ModelFactory<float> factory = [&](std::uint64_t seed, const ParamSpecTable& t) { return BasicModel<float>(seeded(base, seed), t); };
  const auto r = atps(factory, train_set, rc.train, rc.atps, rc.space, fx.get());
  r.table.save(out);
  std::cout << "wrote " << out << " (" << r.table.size() << " parameters)\n";
  for (std::size_t s = 0; s < r.stages.size(); ++s) {
    const auto& st = r.stages[s];
    std::cout << "stage " << s << ": best seed " << (st.best ? std::to_string(st.runs[*st.best].seed) : "none") << "\n";
  }
  if (!checkpoint.empty()) {
    if (r.best_checkpoint.empty()) throw std::runtime_error("every run failed; no checkpoint to write");
    BasicModel<float> model(seeded(base, r.best_seed), r.table);
    model.load_state(r.best_checkpoint, true);
    save_checkpoint(model, checkpoint);
  }
  return 0;
}

std::vector<fs::path> list_images(const std::string& dir, const char* what) {
  if (!fs::is_directory(dir)) throw std::runtime_error(std::string(what) + " directory not found: " + dir);
  std::vector<fs::path> out;
  for (const auto& e : fs::directory_iterator(dir))
    if (e.is_regular_file() && is_image_path(e.path())) out.push_back(e.path());
  std::sort(out.begin(), out.end());
  return out;
}

int cmd_infer(const std::string& config, const std::string& checkpoint, const std::string& input, const std::string& output,
              const std::string& dump, int bits) {
  const RunConfig rc = load_config(config);
  ParamSpecTable table = rc.space;
  if (!checkpoint.empty() && fs::exists(space_path(checkpoint))) table = ParamSpecTable::load(space_path(checkpoint));
  BasicModel<float> model(rc.model, table);
  if (!checkpoint.empty()) {
    model.load(checkpoint, true);
  } else {
    std::cout << "no checkpoint given: using seed-initialised weights\n";
  }
  const auto images = list_images(input, "input");
  if (images.empty()) throw std::runtime_error("no images in " + input);
  fs::create_directories(output);
  std::ofstream params;
  if (!dump.empty()) {
    params.open(dump);
    if (!params) throw std::runtime_error("cannot write " + dump);
    params << std::setprecision(9);
  }
  const bool bayer = rc.model.input == InputMode::bayer4;
  for (const auto& path : images) {
    const std::string id = path.stem().string();
    const auto x = input_tensor(read_image(path.string()), bayer, path.string());
    const auto r = model.forward(x);
    const fs::path dst = fs::path(output) / (id + ".png");
    write_image(dst.string(), tensor_to_image(r.output, bits));
    if (params.is_open()) {
      // Per-image values; local-mode maps are reported as their spatial mean.
      for (const auto& layer : model.controller().layers()) {
        const auto& t = r.params.at(layer.stage);
        const std::size_t plane = t.shape().plane();
        for (std::size_t k = 0; k < layer.specs.size(); ++k) {
          double sum = 0.0;
          for (std::size_t p = 0; p < plane; ++p) sum += t.values()[k * plane + p];
          params << id << " " << layer.specs[k].name << " " << sum / static_cast<double>(plane) << "\n";
        }
      }
    }
    std::cout << id << " -> " << dst.string() << "\n";
  }
  return 0;
}

int cmd_eval(const std::string& pred, const std::string& gt, const std::string& variant_name, const std::string& report) {
  const SsimVariant variant = parse_ssim_variant(variant_name);
  const auto gts = list_images(gt, "ground-truth");
  const auto preds = list_images(pred, "prediction");
  std::map<std::string, fs::path> by_id;
  for (const auto& p : preds) by_id[p.stem().string()] = p;
  if (gts.size() != preds.size()) {
    throw std::runtime_error("file sets differ: " + std::to_string(preds.size()) + " predictions vs " +
                             std::to_string(gts.size()) + " ground-truth images");
  }
  std::ofstream file;
  if (!report.empty()) {
    file.open(report);
    if (!file) throw std::runtime_error("cannot write " + report);
  }
  std::ostream& os = report.empty() ? std::cout : file;
  os << std::setprecision(9) << "# ssim_variant " << ssim_variant_name(variant) << "\n";
  double sum_psnr = 0.0, sum_ssim = 0.0;
  for (const auto& g : gts) {
    const std::string id = g.stem().string();
    const auto it = by_id.find(id);
    if (it == by_id.end()) throw std::runtime_error("no prediction for " + g.string());
    const Tensor a = image_to_tensor(read_image(it->second.string()));
    const Tensor b = image_to_tensor(read_image(g.string()));
    if (!(a.shape() == b.shape())) {
      throw std::runtime_error(id + ": dimension mismatch " + to_string(a.shape()) + " vs " + to_string(b.shape()));
    }
    const double p = psnr(a, b), s = ssim(a, b, variant);
    sum_psnr += p;
    sum_ssim += s;
    os << id << " " << p << " " << s << "\n";
  }
  os << "mean " << sum_psnr / static_cast<double>(gts.size()) << " " << sum_ssim / static_cast<double>(gts.size()) << "\n";
  return 0;
}

int cmd_bench(const std::string& config, const std::string& resolution, std::size_t warmup, std::size_t iterations,
              int threads) {
  Eigen::setNbThreads(threads);
  ModelConfig m;
  if (!config.empty()) m = load_config(config).model;
  // Bench measures the colour pipeline; a per-pixel 4K filter map alone is several GB.
  m.pipeline.denoise = false;
  const Resolution res = parse_resolution(resolution);
  std::cout << "resolution " << res.name << " " << res.width << "x" << res.height << ", warmup " << warmup
            << ", iterations " << iterations << ", threads " << threads << "\n";
  double global_ms = 0.0, local_ms = 0.0;
  for (const ControlMode mode : {ControlMode::global, ControlMode::local}) {
    ModelConfig mc = m;
    mc.controller.mode = mode;
    const BasicModel<float> model(mc, ParamSpecTable::defaults(mc.pipeline.stages()));
    const auto st = bench_forward(model, res, warmup, iterations);
    std::cout << std::fixed << std::setprecision(3) << st.mode << " mean_ms " << st.mean_ms << " median_ms " << st.median_ms
              << " min_ms " << st.min_ms << "\n";
    (mode == ControlMode::global ? global_ms : local_ms) = st.mean_ms;
  }
  std::cout << "local/global " << local_ms / global_ms << "\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Dynamically controlled differentiable ISP"};
  app.require_subcommand(1);

  std::string config, out, checkpoint, input, output, dump, pred, gt, ssim_variant = "original_res", report;
  std::string resolution = "480P";
  bool staged = false;
  int bits = 8, threads = 1;
  std::size_t warmup = 10, iterations = 50;

  auto* train_cmd = app.add_subcommand("train", "Run one configured training");
  train_cmd->add_option("--config", config, "Run config")->required()->check(CLI::ExistingFile);
  train_cmd->add_option("--out", out, "Checkpoint to write")->required();
  train_cmd->add_flag("--staged", staged, "Staged denoiser training (search space, frozen colour stages, finetune)");

  auto* tune_cmd = app.add_subcommand("tune-space", "Refine the parameter search space over seeded runs");
  tune_cmd->add_option("--config", config, "Run config")->required()->check(CLI::ExistingFile);
  tune_cmd->add_option("--out", out, "Refined search-space table to write")->required();
  tune_cmd->add_option("--checkpoint", checkpoint, "Also write the best run's checkpoint here");

  auto* infer_cmd = app.add_subcommand("infer", "Run the model on every image in a directory");
  infer_cmd->add_option("--config", config, "Run config")->required()->check(CLI::ExistingFile);
  infer_cmd->add_option("--checkpoint", checkpoint, "Model checkpoint")->check(CLI::ExistingFile);
  infer_cmd->add_option("--input", input, "Input image directory")->required();
  infer_cmd->add_option("--output", output, "Output directory (PNG)")->required();
  infer_cmd->add_option("--dump-params", dump, "Write `image_id param_name value` lines here");
  infer_cmd->add_option("--bits", bits, "Output bit depth")->check(CLI::IsMember({8, 16}));

  auto* eval_cmd = app.add_subcommand("eval", "PSNR and SSIM of predictions against ground truth");
  eval_cmd->add_option("--pred", pred, "Prediction directory")->required();
  eval_cmd->add_option("--gt", gt, "Ground-truth directory")->required();
  eval_cmd->add_option("--ssim", ssim_variant, "SSIM variant")->check(CLI::IsMember({"original_res", "fivek_lowpass_256"}));
  eval_cmd->add_option("--report", report, "Write the report here instead of stdout");

  auto* bench_cmd = app.add_subcommand("bench", "Forward-pass latency, global and local control");
  bench_cmd->add_option("--config", config, "Run config (model section)")->check(CLI::ExistingFile);
  bench_cmd->add_option("--resolution", resolution, "480P, fullHD, 4K or WxH");
  bench_cmd->add_option("--warmup", warmup, "Untimed iterations");
  bench_cmd->add_option("--iterations", iterations, "Timed iterations")->check(CLI::PositiveNumber);
  bench_cmd->add_option("--threads", threads, "Eigen threads")->check(CLI::PositiveNumber);

  CLI11_PARSE(app, argc, argv);
  try {
    if (*train_cmd) return cmd_train(config, out, staged);
    if (*tune_cmd) return cmd_tune(config, out, checkpoint);
    if (*infer_cmd) return cmd_infer(config, checkpoint, input, output, dump, bits);
    if (*eval_cmd) return cmd_eval(pred, gt, ssim_variant, report);
    if (*bench_cmd) return cmd_bench(config, resolution, warmup, iterations, threads);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 1;
}
