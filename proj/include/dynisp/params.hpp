#pragma once

// ISP stages, their parameter layouts, and search-space (ParamSpec) tables.
//
// Every stage's parameters travel as one tensor (n, K, 1, 1) for per-image
// values or (n, K, h, w) for a parameter map. Per-channel families are laid
// out family-major: index = family * 3 + channel with channels (r, g, b).
// The colour matrix is row-major (index = row * 3 + col) and the dynamic
// filter uses index = channel * k * k + tap.

#include <algorithm>
#include <fstream>
#include <iomanip>
#include <limits>
#include <sstream>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace dynisp {

enum class Stage { inv_tone, filter, ccm, gain, tone, contrast };

inline const char* stage_name(Stage s) {
  switch (s) {
    case Stage::inv_tone: return "inv_tone";
    case Stage::filter: return "filter";
    case Stage::ccm: return "ccm";
    case Stage::gain: return "gain";
    case Stage::tone: return "tone";
    case Stage::contrast: return "contrast";
  }
  return "?";
}

struct ParamSpec {
  std::string name;
  double min = 0.0;
  double max = 1.0;
};

struct FilterShape {
  std::size_t channels = 12;
  std::size_t k = 3;
};

inline std::size_t stage_arity(Stage s, const FilterShape& filter = {}) {
  return s == Stage::filter ? filter.channels * filter.k * filter.k : 9;
}

namespace detail {

inline std::vector<ParamSpec> per_channel(const char* stage, std::initializer_list<ParamSpec> families) {
  static constexpr const char* kChannels[3] = {"r", "g", "b"};
  std::vector<ParamSpec> out;
  for (const auto& f : families)
    for (const char* ch : kChannels) out.push_back({std::string(stage) + "." + f.name + "." + ch, f.min, f.max});
  return out;
}

}  // namespace detail

/// Default ("sufficiently wide") search space of one stage, in layout order.
inline std::vector<ParamSpec> default_stage_specs(Stage s, const FilterShape& filter = {}) {
  switch (s) {
    case Stage::inv_tone:
      return detail::per_channel("inv_tone", {{"gamma3", 0.3, 5.0}, {"gamma4", 0.0, 4.0}, {"k2", 0.0, 1.0}});
    case Stage::ccm: {
      std::vector<ParamSpec> out;
      for (int r = 0; r < 3; ++r)
        for (int c = 0; c < 3; ++c) {
          const bool diag = r == c;
          out.push_back({"ccm.m" + std::to_string(r) + std::to_string(c), diag ? 0.2 : -1.0, diag ? 3.0 : 1.0});
        }
      return out;
    }
    case Stage::gain:
      return detail::per_channel("gain", {{"p_h", 0.01, 0.99}, {"p_w", 0.01, 0.99}, {"p_x_log", -3.0, -0.05}});
    case Stage::tone:
      return detail::per_channel("tone", {{"gamma1", 0.3, 5.0}, {"gamma2", 0.1, 4.0}, {"k", 0.05, 1.0}});
    case Stage::contrast:
      return detail::per_channel("contrast", {{"p_h", 0.01, 0.99}, {"p_w", 0.01, 0.99}, {"p_x", 0.01, 0.99}});
    case Stage::filter: {
      std::vector<ParamSpec> out;
      for (std::size_t c = 0; c < filter.channels; ++c)
        for (std::size_t t = 0; t < filter.k * filter.k; ++t)
          out.push_back({"filter.c" + std::to_string(c) + ".t" + std::to_string(t), -1.0, 1.0});
      return out;
    }
  }
  return {};
}

/// Ordered name -> (min, max) table; text form is one `name=min,max` per line.
class ParamSpecTable {
 public:
  ParamSpecTable() = default;
  explicit ParamSpecTable(std::vector<ParamSpec> specs) {
    for (auto& s : specs) set(s);
  }

  static ParamSpecTable defaults(const std::vector<Stage>& stages, const FilterShape& filter = {}) {
    ParamSpecTable t;
    for (const Stage s : stages)
      for (const auto& spec : default_stage_specs(s, filter)) t.set(spec);
    return t;
  }

  void set(const ParamSpec& spec) {
    if (!(spec.min < spec.max)) {
      throw std::invalid_argument("param spec " + spec.name + ": min must be below max");
    }
    for (auto& s : specs_) {
      if (s.name == spec.name) {
        s = spec;
        return;
      }
    }
    specs_.push_back(spec);
  }

  const ParamSpec* find(std::string_view name) const {
    for (const auto& s : specs_)
      if (s.name == name) return &s;
    return nullptr;
  }

  const ParamSpec& at(std::string_view name) const {
    if (const auto* s = find(name)) return *s;
    throw std::out_of_range("no param spec named " + std::string(name));
  }

  /// Specs of one stage in layout order, falling back to defaults for names not in the table.
  std::vector<ParamSpec> stage(Stage s, const FilterShape& filter = {}) const {
    auto specs = default_stage_specs(s, filter);
    for (auto& spec : specs)
      if (const auto* own = find(spec.name)) spec = *own;
    return specs;
  }

  const std::vector<ParamSpec>& entries() const noexcept { return specs_; }
  std::size_t size() const noexcept { return specs_.size(); }

  std::string to_text() const {
    std::ostringstream os;
    os << std::setprecision(std::numeric_limits<double>::max_digits10);
    for (const auto& s : specs_) os << s.name << "=" << s.min << "," << s.max << "\n";
    return os.str();
  }

  static ParamSpecTable parse(std::string_view text) {
    ParamSpecTable t;
    std::size_t line_no = 0;
    std::size_t pos = 0;
    while (pos <= text.size()) {
      const std::size_t end = std::min(text.find('\n', pos), text.size());
      std::string line(text.substr(pos, end - pos));
      pos = end + 1;
      ++line_no;
      if (const auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
      const auto first = line.find_first_not_of(" \t\r");
      if (first == std::string::npos) continue;
      line = line.substr(first, line.find_last_not_of(" \t\r") - first + 1);
      const auto eq = line.find('=');
      const auto comma = line.find(',', eq == std::string::npos ? 0 : eq);
      if (eq == std::string::npos || comma == std::string::npos) {
        throw std::invalid_argument("param spec line " + std::to_string(line_no) + ": expected name=min,max");
      }
      ParamSpec s;
      s.name = trim(line.substr(0, eq));
      s.min = parse_number(trim(line.substr(eq + 1, comma - eq - 1)), line_no);
      s.max = parse_number(trim(line.substr(comma + 1)), line_no);
      t.set(s);
      if (end == text.size()) break;
    }
    return t;
  }

  void save(const std::string& path) const {
    std::ofstream os(path);
    if (!os) throw std::runtime_error("cannot write " + path);
    os << to_text();
  }

  static ParamSpecTable load(const std::string& path) {
    std::ifstream is(path);
    if (!is) throw std::runtime_error("cannot read param spec table " + path);
    std::stringstream ss;
    ss << is.rdbuf();
    return parse(ss.str());
  }

 private:
  static std::string trim(const std::string& s) {
    const auto a = s.find_first_not_of(" \t");
    if (a == std::string::npos) return {};
    return s.substr(a, s.find_last_not_of(" \t") - a + 1);
  }
  static double parse_number(const std::string& s, std::size_t line_no) {
    try {
      std::size_t used = 0;
      const double v = std::stod(s, &used);
      if (used == s.size()) return v;
    } catch (const std::exception&) {
    }
    throw std::invalid_argument("param spec line " + std::to_string(line_no) + ": bad number '" + s + "'");
  }

  std::vector<ParamSpec> specs_;
};

}  // namespace dynisp
