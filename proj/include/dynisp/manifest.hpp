#pragma once

// Dataset manifests and ingestion.
//
//   [dataset]
//   task = universal_isp | normal_isp | tone_mapping | enhancement
//   input_bits = 8 | 16
//   pattern = rgb | rggb          (default: rggb for normal_isp, rgb otherwise)
//   [records]
//   <input path> <ground-truth path> [sensor tag]
//
// Paths are relative to the manifest file. RGGB inputs are single-channel
// mosaics and are packed to (1, 4, h/2, w/2); sensor tags are kept for
// bookkeeping only.

#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "dynisp/bayer.hpp"
#include "dynisp/dataset.hpp"
#include "dynisp/image_io.hpp"

namespace dynisp {

enum class Task { universal_isp, normal_isp, tone_mapping, enhancement };

inline const char* task_name(Task t) {
  switch (t) {
    case Task::universal_isp: return "universal_isp";
    case Task::normal_isp: return "normal_isp";
    case Task::tone_mapping: return "tone_mapping";
    case Task::enhancement: return "enhancement";
  }
  return "?";
}

inline Task parse_task(const std::string& s) {
  for (Task t : {Task::universal_isp, Task::normal_isp, Task::tone_mapping, Task::enhancement})
    if (s == task_name(t)) return t;
  throw std::invalid_argument("unknown task '" + s + "'");
}

struct ManifestRecord {
  std::string input;
  std::string target;
  std::string tag;
};

struct DatasetManifest {
  Task task = Task::universal_isp;
  int input_bits = 8;
  bool bayer = false;
  std::vector<ManifestRecord> records;

  static DatasetManifest parse(const std::string& text, const std::string& base_dir = "",
                               const std::string& origin = "<manifest>") {
    DatasetManifest m;
    std::istringstream is(text);
    std::string line, section;
    std::size_t line_no = 0;
    bool have_task = false, have_pattern = false;
    auto fail = [&](const std::string& msg) {
      throw std::invalid_argument(origin + ":" + std::to_string(line_no) + ": " + msg);
    };
    auto resolve = [&](const std::string& p) {
      return base_dir.empty() || std::filesystem::path(p).is_absolute() ? p : (std::filesystem::path(base_dir) / p).string();
    };
    while (std::getline(is, line)) {
      ++line_no;
      if (const auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
      std::istringstream ls(line);
      std::vector<std::string> tok;
      for (std::string t; ls >> t;) tok.push_back(t);
      if (tok.empty()) continue;
      if (tok.size() == 1 && tok[0].front() == '[' && tok[0].back() == ']') {
        section = tok[0].substr(1, tok[0].size() - 2);
        if (section != "dataset" && section != "records") fail("unknown section [" + section + "]");
        continue;
      }
      if (section == "dataset") {
        const auto eq = line.find('=');
        if (eq == std::string::npos) fail("expected key = value");
        std::istringstream ks(line.substr(0, eq)), vs(line.substr(eq + 1));
        std::string key, value;
        ks >> key;
        vs >> value;
        if (key == "task") {
          try {
            m.task = parse_task(value);
          } catch (const std::exception& e) {
            fail(std::string("dataset.task: ") + e.what());
          }
          have_task = true;
        } else if (key == "input_bits") {
          if (value != "8" && value != "16") fail("dataset.input_bits: expected 8 or 16, got '" + value + "'");
          m.input_bits = std::stoi(value);
        } else if (key == "pattern") {
          if (value != "rgb" && value != "rggb") fail("dataset.pattern: expected rgb or rggb, got '" + value + "'");
          m.bayer = value == "rggb";
          have_pattern = true;
        } else {
          fail("dataset." + key + ": unknown key");
        }
      } else if (section == "records") {
        if (tok.size() < 2 || tok.size() > 3) fail("expected: <input> <ground truth> [tag]");
        m.records.push_back({resolve(tok[0]), resolve(tok[1]), tok.size() == 3 ? tok[2] : ""});
      } else {
        fail("content outside a section");
      }
    }
    if (!have_task) throw std::invalid_argument(origin + ": dataset.task is required");
    if (!have_pattern) m.bayer = m.task == Task::normal_isp;
    if (m.records.empty()) throw std::invalid_argument(origin + ": no records");
    return m;
  }

  static DatasetManifest load(const std::string& path) {
    std::ifstream is(path);
    if (!is) throw std::runtime_error("cannot read manifest " + path);
    std::stringstream ss;
    ss << is.rdbuf();
    return parse(ss.str(), std::filesystem::path(path).parent_path().string(), path);
  }
};

/// Converts a decoded input image to the model's input layout.
inline Tensor input_tensor(const Image& img, bool bayer, const std::string& where) {
  if (bayer) {
    if (img.channels != 1) throw std::runtime_error(where + ": Bayer input must be single-channel");
    if (img.width % 2 || img.height % 2) throw std::runtime_error(where + ": Bayer input needs even dimensions");
    return pack_rggb(image_to_tensor(img));
  }
  if (img.channels != 3) throw std::runtime_error(where + ": expected an RGB image");
  return image_to_tensor(img);
}

/// Decodes every record. Ids are the input file stems.
inline Dataset<float> ingest(const DatasetManifest& m) {
  Dataset<float> out;
  out.reserve(m.records.size());
  for (const auto& r : m.records) {
    const Image in = read_image(r.input);
    if (in.bit_depth != m.input_bits) {
      throw std::runtime_error(r.input + ": bit depth " + std::to_string(in.bit_depth) + " does not match manifest input_bits " +
                               std::to_string(m.input_bits));
    }
    const Image gt = read_image(r.target);
    if (gt.channels != 3) throw std::runtime_error(r.target + ": ground truth must be RGB");
    if (gt.width != in.width || gt.height != in.height) {
      throw std::runtime_error(r.target + ": size " + std::to_string(gt.width) + "x" + std::to_string(gt.height) +
                               " differs from input " + std::to_string(in.width) + "x" + std::to_string(in.height));
    }
    out.push_back({std::filesystem::path(r.input).stem().string(), input_tensor(in, m.bayer, r.input), image_to_tensor(gt)});
  }
  return out;
}

}  // namespace dynisp
