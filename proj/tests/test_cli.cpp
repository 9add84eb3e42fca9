#include <gtest/gtest.h>

#include <sys/wait.h>

#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <random>
#include <sstream>
#include <string>

#include "dynisp/bench.hpp"
#include "dynisp/config.hpp"
#include "dynisp/image_io.hpp"
#include "dynisp/manifest.hpp"
#include "dynisp/metrics.hpp"

using namespace dynisp;
namespace fs = std::filesystem;

namespace {

using DTensor = BasicTensor<double>;

// Same formulas as tests/oracles/oracles.py.
DTensor toy(const std::string& kind, std::size_t c, std::size_t h, std::size_t w) {
  std::vector<double> v(c * h * w);
  for (std::size_t k = 0; k < c; ++k)
    for (std::size_t y = 0; y < h; ++y)
      for (std::size_t x = 0; x < w; ++x) {
        const double i = static_cast<double>(y * w + x);
        const double last = static_cast<double>(h * w - 1);
        double p = 0.0;
        if (kind == "ramp") p = i / last;
        else if (kind == "ramp_rev") p = 1.0 - i / last;
        else if (kind == "ramp_shift") p = i / last + 0.05;
        else if (kind == "checker") p = 0.25 + 0.5 * static_cast<double>((x + y) % 2);
        else if (kind == "flat") p = 0.5;
        else if (kind == "hash") p = static_cast<double>((static_cast<std::size_t>(i) * 37 + 11) % 64) / 63.0;
        v[(k * h + y) * w + x] = p + 0.01 * static_cast<double>(k);
      }
  return DTensor({1, c, h, w}, std::move(v));
}

struct MetricCase {
  const char* a;
  const char* b;
  std::size_t c, h, w;
  double psnr, ssim;
};

fs::path scratch(const std::string& name) {
  const fs::path p = fs::temp_directory_path() / ("dynisp_cli_" + name + "_" + std::to_string(::getpid()));
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

struct CliRun {
  int code = -1;
  std::string out;
};

CliRun run_cli(const std::string& args, const fs::path& dir) {
  const fs::path log = dir / "cli.log";
  const std::string cmd = std::string("\"") + DYNISP_CLI_PATH + "\" " + args + " > \"" + log.string() + "\" 2>&1";
  const int st = std::system(cmd.c_str());
  CliRun r;
  r.code = WIFEXITED(st) ? WEXITSTATUS(st) : -1;
  std::ifstream is(log);
  std::stringstream ss;
  ss << is.rdbuf();
  r.out = ss.str();
  return r;
}

Image random_rgb(std::size_t h, std::size_t w, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_int_distribution<int> u(0, 255);
  Image img;
  img.width = w;
  img.height = h;
  img.channels = 3;
  img.data.resize(h * w * 3);
  for (auto& v : img.data) v = static_cast<std::uint16_t>(u(rng));
  return img;
}

void write_text(const fs::path& p, const std::string& text) {
  std::ofstream os(p);
  os << text;
}

}  // namespace

TEST(Metrics, MatchesOracleValues) {
  const MetricCase cases[] = {
      {"ramp", "ramp_rev", 1, 4, 4, 4.227635923971, -0.845052543081},
      {"ramp", "ramp_shift", 1, 4, 4, 26.020599913280, 0.994404401741},
      {"checker", "flat", 1, 4, 4, 12.041199826559, 0.014230599411},
      {"ramp", "hash", 1, 4, 4, 8.000304534619, 0.205386860738},
      {"ramp", "hash", 1, 16, 16, 7.714715223000, 0.010175734622},
      {"ramp", "hash", 3, 6, 5, 7.724617789442, -0.010724228368},
  };
  for (const auto& c : cases) {
    const auto a = toy(c.a, c.c, c.h, c.w), b = toy(c.b, c.c, c.h, c.w);
    EXPECT_NEAR(psnr(a, b), c.psnr, 1e-6) << c.a << " " << c.b << " " << c.h << "x" << c.w;
    EXPECT_NEAR(ssim(a, b), c.ssim, 1e-4) << c.a << " " << c.b << " " << c.h << "x" << c.w;
  }
}

TEST(Metrics, FivekVariantLowpassesBeforeSsim) {
  const auto a = toy("ramp", 1, 520, 600), b = toy("hash", 1, 520, 600);
  EXPECT_NEAR(ssim(a, b, SsimVariant::fivek_lowpass_256), 0.059825218240, 1e-4);
  EXPECT_NEAR(ssim(a, b, SsimVariant::original_res), 0.008448699781, 1e-4);
}

TEST(Metrics, PsnrOfKnownMse) {
  EXPECT_NEAR(psnr_from_mse(0.01), 20.0, 1e-12);
  const DTensor a({1, 1, 2, 2}, {0.0, 0.0, 0.0, 0.0});
  const DTensor b({1, 1, 2, 2}, {0.1, 0.1, 0.1, 0.1});
  EXPECT_NEAR(psnr(a, b), 20.0, 1e-9);
}

TEST(Metrics, IdenticalImagesHitTheCap) {
  const auto a = toy("hash", 3, 16, 16);
  EXPECT_EQ(psnr(a, a), 99.0);
  EXPECT_NEAR(ssim(a, a), 1.0, 1e-12);
}

TEST(Metrics, TinyNoiseKeepsSsimNearOne) {
  auto a = toy("ramp", 3, 32, 32);
  std::mt19937_64 rng(5);
  std::normal_distribution<double> n(0.0, 1e-4);
  std::vector<double> v(a.values().begin(), a.values().end());
  for (auto& e : v) e += n(rng);
  const DTensor b(a.shape(), std::move(v));
  EXPECT_GT(ssim(a, b), 0.999);
}

TEST(Metrics, ShapeMismatchThrows) {
  EXPECT_THROW(psnr(toy("ramp", 1, 4, 4), toy("ramp", 1, 4, 5)), std::invalid_argument);
  EXPECT_THROW(ssim(toy("ramp", 1, 4, 4), toy("ramp", 3, 4, 4)), std::invalid_argument);
}

TEST(ImageIo, PngRoundTripEightAndSixteenBit) {
  const auto dir = scratch("io");
  for (const int bits : {8, 16}) {
    Image img;
    img.width = 3;
    img.height = 2;
    img.channels = 3;
    img.bit_depth = bits;
    const std::uint16_t top = img.max_value();
    img.data = {0, 1, top, 7, 100, 200, top, top, top, 2, 3, 4, 9, 8, 7, 0, 0, top};
    const auto path = (dir / ("img" + std::to_string(bits) + ".png")).string();
    write_image(path, img);
    const Image back = read_image(path);
    EXPECT_EQ(back.bit_depth, bits);
    EXPECT_EQ(back.width, 3u);
    EXPECT_EQ(back.height, 2u);
    EXPECT_EQ(back.data, img.data);
    const Tensor t = image_to_tensor(back);
    EXPECT_EQ(t.values()[2 * 6 + 0], 1.0f);  // channel 2, pixel 0 is max
    EXPECT_EQ(t.values()[0], 0.0f);
  }
  fs::remove_all(dir);
}

TEST(ImageIo, PnmRoundTrip) {
  const auto dir = scratch("pnm");
  const Image img = random_rgb(5, 4, 3);
  const auto path = (dir / "a.ppm").string();
  write_image(path, img);
  const Image back = read_image(path);
  EXPECT_EQ(back.data, img.data);
  EXPECT_EQ(back.channels, 3u);
  fs::remove_all(dir);
}

TEST(ImageIo, TensorQuantisationClamps) {
  const Tensor t({1, 3, 1, 2}, {-0.5f, 0.5f, 1.0f, 2.0f, 0.25f, 0.0f});
  const Image img = tensor_to_image(t, 8);
  ASSERT_EQ(img.data.size(), 6u);
  EXPECT_EQ(img.data[0], 0);    // pixel 0, r
  EXPECT_EQ(img.data[1], 255);  // pixel 0, g
  EXPECT_EQ(img.data[2], 64);   // pixel 0, b
  EXPECT_EQ(img.data[3], 128);
  EXPECT_EQ(img.data[4], 255);
  EXPECT_EQ(img.data[5], 0);
}

TEST(Config, DefaultsParse) {
  const RunConfig rc = make_run_config(KeyValueFile::parse(""));
  EXPECT_EQ(rc.model.controller.mode, ControlMode::global);
  EXPECT_GT(rc.space.size(), 0u);
  EXPECT_EQ(rc.hash.size(), 16u);
}

TEST(Config, ErrorsNameTheKey) {
  auto message = [](const std::string& text) {
    try {
      make_run_config(KeyValueFile::parse(text));
    } catch (const ConfigError& e) {
      return std::string(e.what());
    }
    return std::string("no error");
  };
  EXPECT_EQ(message("[train]\nlr_maxx = 1\n").rfind("train.lr_maxx: unknown key", 0), 0u);
  EXPECT_EQ(message("[bogus]\na = 1\n").rfind("bogus.a: unknown section [bogus]", 0), 0u);
  EXPECT_EQ(message("[train]\nbatch = zero\n").rfind("train.batch:", 0), 0u);
  EXPECT_EQ(message("[train]\niterations = 0\n").rfind("train.iterations:", 0), 0u);
  EXPECT_EQ(message("[model]\nmode = regional\n").rfind("model.mode:", 0), 0u);
  EXPECT_EQ(message("[model]\ndenoiser_kernel = 4\n").rfind("model.denoiser_kernel:", 0), 0u);
  EXPECT_EQ(message("[atps]\nr = 1.5\n").rfind("atps.r:", 0), 0u);
  EXPECT_EQ(message("[pipeline]\ngain = maybe\n").rfind("pipeline.gain:", 0), 0u);
  EXPECT_EQ(message("[pipeline]\ngain = false\n[space]\ngain.p_h.r = 0.1,0.2\n").rfind("space.gain.p_h.r:", 0), 0u);
  EXPECT_EQ(message("[space]\ngain.p_h.r = 0.5,0.1\n").rfind("space.gain.p_h.r:", 0), 0u);
  EXPECT_NE(message("[train]\nbatch = 2\nbatch = 3\n").find("duplicate key train.batch"), std::string::npos);
}

TEST(Config, SpaceOverridesApply) {
  const RunConfig rc = make_run_config(KeyValueFile::parse("[space]\ngain.p_h.r = 0.2,0.4\n"));
  const auto* s = rc.space.find("gain.p_h.r");
  ASSERT_NE(s, nullptr);
  EXPECT_DOUBLE_EQ(s->min, 0.2);
  EXPECT_DOUBLE_EQ(s->max, 0.4);
}

TEST(Config, HashIgnoresCommentsButNotValues) {
  const auto a = make_run_config(KeyValueFile::parse("[train]\nbatch = 4\n")).hash;
  const auto b = make_run_config(KeyValueFile::parse("# note\n[train]\nbatch = 4  # same\n")).hash;
  const auto c = make_run_config(KeyValueFile::parse("[train]\nbatch = 5\n")).hash;
  EXPECT_EQ(a, b);
  EXPECT_NE(a, c);
}

TEST(Manifest, ParsesRecordsAndResolvesPaths) {
  const auto m = DatasetManifest::parse("[dataset]\ntask = universal_isp\ninput_bits = 16\n[records]\nin/a.png gt/a.png x\n",
                                        "/data");
  EXPECT_EQ(m.input_bits, 16);
  EXPECT_FALSE(m.bayer);
  ASSERT_EQ(m.records.size(), 1u);
  EXPECT_EQ(m.records[0].input, "/data/in/a.png");
  EXPECT_EQ(m.records[0].target, "/data/gt/a.png");
}

TEST(Manifest, ErrorsCarryLineNumbers) {
  auto message = [](const std::string& text) {
    try {
      DatasetManifest::parse(text, "", "m.txt");
    } catch (const std::invalid_argument& e) {
      return std::string(e.what());
    }
    return std::string("no error");
  };
  EXPECT_EQ(message("[dataset]\ntask = universal_isp\ninput_bits = 12\n"),
            "m.txt:3: dataset.input_bits: expected 8 or 16, got '12'");
  EXPECT_EQ(message("[dataset]\ncolour = 1\n"), "m.txt:2: dataset.colour: unknown key");
  EXPECT_EQ(message("[wrong]\n"), "m.txt:1: unknown section [wrong]");
  EXPECT_EQ(message("[records]\na b\n"), "m.txt: dataset.task is required");
  EXPECT_EQ(message("[dataset]\ntask = universal_isp\n"), "m.txt: no records");
  EXPECT_NE(message("[dataset]\ntask = universal_isp\n[records]\na\n").find("m.txt:4:"), std::string::npos);
}

TEST(Manifest, IngestRejectsBitDepthMismatch) {
  const auto dir = scratch("manifest");
  const Image img = random_rgb(4, 4, 1);
  write_image((dir / "a.png").string(), img);
  const auto m =
      DatasetManifest::parse("[dataset]\ntask = universal_isp\ninput_bits = 16\n[records]\na.png a.png\n", dir.string());
  try {
    ingest(m);
    FAIL() << "expected a bit-depth error";
  } catch (const std::runtime_error& e) {
    EXPECT_NE(std::string(e.what()).find("bit depth 8"), std::string::npos) << e.what();
  }
  fs::remove_all(dir);
}

TEST(Bench, ResolutionNames) {
  EXPECT_EQ(parse_resolution("480P").width, 640u);
  EXPECT_EQ(parse_resolution("fullHD").height, 1080u);
  const auto k = parse_resolution("4K");
  EXPECT_EQ(k.width, 3840u);
  EXPECT_EQ(k.height, 2160u);
  const auto c = parse_resolution("320x200");
  EXPECT_EQ(c.width, 320u);
  EXPECT_EQ(c.height, 200u);
  EXPECT_THROW(parse_resolution("8K"), std::invalid_argument);
  EXPECT_THROW(parse_resolution("0x10"), std::invalid_argument);
  EXPECT_THROW(parse_resolution("12x"), std::invalid_argument);
  EXPECT_TRUE(is_480p(480, 640));
  EXPECT_TRUE(is_480p(720, 480));
  EXPECT_FALSE(is_480p(1080, 1920));
}

TEST(Cli, EvalMissingGroundTruthNamesThePath) {
  const auto dir = scratch("evalmissing");
  fs::create_directories(dir / "pred");
  const auto missing = (dir / "nowhere").string();
  const CliRun r = run_cli("eval --pred \"" + (dir / "pred").string() + "\" --gt \"" + missing + "\"", dir);
  EXPECT_EQ(r.code, 1);
  EXPECT_NE(r.out.find("error: ground-truth directory not found: " + missing), std::string::npos) << r.out;
  fs::remove_all(dir);
}

TEST(Cli, EvalRejectsDifferentFileSets) {
  const auto dir = scratch("evalsets");
  fs::create_directories(dir / "pred");
  fs::create_directories(dir / "gt");
  write_image((dir / "gt" / "a.png").string(), random_rgb(8, 8, 1));
  write_image((dir / "gt" / "b.png").string(), random_rgb(8, 8, 2));
  write_image((dir / "pred" / "a.png").string(), random_rgb(8, 8, 1));
  const CliRun r = run_cli("eval --pred \"" + (dir / "pred").string() + "\" --gt \"" + (dir / "gt").string() + "\"", dir);
  EXPECT_EQ(r.code, 1);
  EXPECT_NE(r.out.find("file sets differ"), std::string::npos) << r.out;
  fs::remove_all(dir);
}

TEST(Cli, UnknownSubcommandFails) {
  const auto dir = scratch("unknown");
  EXPECT_NE(run_cli("frobnicate", dir).code, 0);
  EXPECT_NE(run_cli("bench --resolution 9K --iterations 1 --warmup 0", dir).code, 0);
  fs::remove_all(dir);
}

TEST(Cli, InferEvalRoundTripWithIdentityPipeline) {
  const auto dir = scratch("roundtrip");
  fs::create_directories(dir / "in");
  for (int i = 0; i < 3; ++i)
    write_image((dir / "in" / ("img" + std::to_string(i) + ".png")).string(), random_rgb(24, 32, 10 + i));
  write_text(dir / "run.cfg",
             "[model]\nencoder_size = 16\n[pipeline]\ndenoise = false\ncolor_correct = false\ngain = false\n"
             "tone_map = false\ncontrast = false\n");
  const CliRun inf = run_cli("infer --config \"" + (dir / "run.cfg").string() + "\" --input \"" + (dir / "in").string() +
                              "\" --output \"" + (dir / "out").string() + "\"",
                          dir);
  ASSERT_EQ(inf.code, 0) << inf.out;
  for (int i = 0; i < 3; ++i) {
    const std::string name = "img" + std::to_string(i) + ".png";
    const Tensor a = image_to_tensor(read_image((dir / "in" / name).string()));
    const Tensor b = image_to_tensor(read_image((dir / "out" / name).string()));
    ASSERT_TRUE(a.shape() == b.shape());
    double worst = 0.0;
    for (std::size_t k = 0; k < a.size(); ++k)
      worst = std::max(worst, std::abs(static_cast<double>(a.values()[k]) - b.values()[k]));
    EXPECT_LE(worst, 1.0 / 510.0);
  }
  const CliRun ev = run_cli("eval --pred \"" + (dir / "out").string() + "\" --gt \"" + (dir / "in").string() + "\" --report \"" +
                             (dir / "report.txt").string() + "\"",
                         dir);
  ASSERT_EQ(ev.code, 0) << ev.out;
  std::ifstream rep(dir / "report.txt");
  std::string line;
  std::getline(rep, line);
  EXPECT_EQ(line, "# ssim_variant original_res");
  std::size_t rows = 0;
  while (std::getline(rep, line)) {
    std::istringstream ls(line);
    std::string id;
    double p = 0, s = 0;
    ls >> id >> p >> s;
    EXPECT_EQ(p, 99.0) << line;
    EXPECT_NEAR(s, 1.0, 1e-9) << line;
    ++rows;
  }
  EXPECT_EQ(rows, 4u);  // three images and the mean
  fs::remove_all(dir);
}

TEST(Cli, DumpParamsLineFormat) {
  const auto dir = scratch("dump");
  fs::create_directories(dir / "in");
  write_image((dir / "in" / "a.png").string(), random_rgb(16, 16, 4));
  write_image((dir / "in" / "b.png").string(), random_rgb(16, 16, 5));
  write_text(dir / "run.cfg", "[model]\nencoder_size = 16\nmode = local\n[pipeline]\ndenoise = false\n");
  const CliRun r = run_cli("infer --config \"" + (dir / "run.cfg").string() + "\" --input \"" + (dir / "in").string() +
                            "\" --output \"" + (dir / "out").string() + "\" --bits 16 --dump-params \"" +
                            (dir / "params.txt").string() + "\"",
                        dir);
  ASSERT_EQ(r.code, 0) << r.out;
  EXPECT_EQ(read_image((dir / "out" / "a.png").string()).bit_depth, 16);
  PipelineConfig pc;
  pc.denoise = false;
  const auto table = ParamSpecTable::defaults(pc.stages());
  std::ifstream is(dir / "params.txt");
  std::string line;
  std::size_t rows = 0;
  while (std::getline(is, line)) {
    std::istringstream ls(line);
    std::string id, name, extra;
    double v = 0;
    ASSERT_TRUE(static_cast<bool>(ls >> id >> name >> v)) << line;
    EXPECT_FALSE(static_cast<bool>(ls >> extra)) << line;
    EXPECT_TRUE(id == "a" || id == "b") << line;
    const auto* s = table.find(name);
    ASSERT_NE(s, nullptr) << name;
    EXPECT_GE(v, s->min) << line;
    EXPECT_LE(v, s->max) << line;
    ++rows;
  }
  EXPECT_EQ(rows, 2 * table.size());
  fs::remove_all(dir);
}
