#pragma once

// 8/16-bit image files: PNG (libpng), binary PGM/PPM (P5/P6) and PAM (P7).
// Samples are held interleaved as uint16 regardless of bit depth.

#include <png.h>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <memory>
#include <sstream>
#include <string>
#include <vector>

#include "dynisp/tensor.hpp"

namespace dynisp {

struct Image {
  std::size_t width = 0;
  std::size_t height = 0;
  std::size_t channels = 0;
  int bit_depth = 8;
  std::vector<std::uint16_t> data;  // interleaved, row-major

  std::uint16_t max_value() const { return bit_depth == 16 ? 65535 : 255; }
};

namespace detail {

struct FileCloser {
  void operator()(std::FILE* f) const {
    if (f) std::fclose(f);
  }
};
using FilePtr = std::unique_ptr<std::FILE, FileCloser>;

inline Image read_png(const std::string& path) {
  FilePtr f(std::fopen(path.c_str(), "rb"));
  if (!f) throw std::runtime_error("cannot open " + path);
  png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  png_infop info = png ? png_create_info_struct(png) : nullptr;
  if (!png || !info) {
    png_destroy_read_struct(&png, &info, nullptr);
    throw std::runtime_error("libpng initialisation failed");
  }
  Image img;
  std::vector<png_bytep> rows;
  std::vector<unsigned char> buf;
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_read_struct(&png, &info, nullptr);
    throw std::runtime_error("cannot decode PNG " + path);
  }
  png_init_io(png, f.get());
  png_read_info(png, info);
  const int color = png_get_color_type(png, info);
  const int depth = png_get_bit_depth(png, info);
  if (color == PNG_COLOR_TYPE_PALETTE) png_set_palette_to_rgb(png);
  if (color == PNG_COLOR_TYPE_GRAY && depth < 8) png_set_expand_gray_1_2_4_to_8(png);
  if (color & PNG_COLOR_MASK_ALPHA) png_set_strip_alpha(png);
  png_read_update_info(png, info);
  img.width = png_get_image_width(png, info);
  img.height = png_get_image_height(png, info);
  img.channels = png_get_channels(png, info);
  img.bit_depth = png_get_bit_depth(png, info) == 16 ? 16 : 8;
  const std::size_t row_bytes = png_get_rowbytes(png, info);
  buf.resize(row_bytes * img.height);
  rows.resize(img.height);
  for (std::size_t y = 0; y < img.height; ++y) rows[y] = buf.data() + y * row_bytes;
  png_read_image(png, rows.data());
  png_destroy_read_struct(&png, &info, nullptr);
  const std::size_t count = img.width * img.height * img.channels;
  img.data.resize(count);
  for (std::size_t i = 0; i < count; ++i) {
    img.data[i] = img.bit_depth == 16 ? static_cast<std::uint16_t>((buf[2 * i] << 8) | buf[2 * i + 1]) : buf[i];
  }
  return img;
}

inline void write_png(const std::string& path, const Image& img) {
  FilePtr f(std::fopen(path.c_str(), "wb"));
  if (!f) throw std::runtime_error("cannot open " + path + " for writing");
  png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  png_infop info = png ? png_create_info_struct(png) : nullptr;
  if (!png || !info) {
    png_destroy_write_struct(&png, &info);
    throw std::runtime_error("libpng initialisation failed");
  }
  const std::size_t bytes = img.bit_depth == 16 ? 2 : 1;
  std::vector<unsigned char> buf(img.data.size() * bytes);
  for (std::size_t i = 0; i < img.data.size(); ++i) {
    if (bytes == 2) {
      buf[2 * i] = static_cast<unsigned char>(img.data[i] >> 8);
      buf[2 * i + 1] = static_cast<unsigned char>(img.data[i] & 0xff);
    } else {
      buf[i] = static_cast<unsigned char>(img.data[i]);
    }
  }
  std::vector<png_bytep> rows(img.height);
  for (std::size_t y = 0; y < img.height; ++y) rows[y] = buf.data() + y * img.width * img.channels * bytes;
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_write_struct(&png, &info);
    throw std::runtime_error("cannot encode PNG " + path);
  }
  int color = PNG_COLOR_TYPE_GRAY;
  if (img.channels == 3) color = PNG_COLOR_TYPE_RGB;
  else if (img.channels == 4) color = PNG_COLOR_TYPE_RGB_ALPHA;
  else if (img.channels != 1) throw std::invalid_argument("write_png: unsupported channel count");
  png_init_io(png, f.get());
  png_set_IHDR(png, info, static_cast<png_uint_32>(img.width), static_cast<png_uint_32>(img.height), img.bit_depth,
               color, PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
  png_write_info(png, info);
  png_write_image(png, rows.data());
  png_write_end(png, nullptr);
  png_destroy_write_struct(&png, &info);
}

inline std::string pnm_token(std::istream& is) {
  std::string tok;
  while (is >> tok) {
    if (tok[0] == '#') {
      std::string rest;
      std::getline(is, rest);
      continue;
    }
    return tok;
  }
  throw std::runtime_error("truncated PNM header");
}

inline Image read_pnm(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw std::runtime_error("cannot open " + path);
  const std::string magic = pnm_token(is);
  Image img;
  std::size_t maxval = 0;
  if (magic == "P5" || magic == "P6") {
    img.width = std::stoul(pnm_token(is));
    img.height = std::stoul(pnm_token(is));
    maxval = std::stoul(pnm_token(is));
    img.channels = magic == "P5" ? 1 : 3;
  } else if (magic == "P7") {
    for (std::string key = pnm_token(is); key != "ENDHDR"; key = pnm_token(is)) {
      if (key == "WIDTH") img.width = std::stoul(pnm_token(is));
      else if (key == "HEIGHT") img.height = std::stoul(pnm_token(is));
      else if (key == "DEPTH") img.channels = std::stoul(pnm_token(is));
      else if (key == "MAXVAL") maxval = std::stoul(pnm_token(is));
      else if (key == "TUPLTYPE") pnm_token(is);
    }
  } else {
    throw std::runtime_error(path + ": not a binary PGM/PPM/PAM file");
  }
  is.get();  // the single whitespace byte before the raster
  if (maxval != 255 && maxval != 65535) {
    throw std::runtime_error(path + ": unsupported maxval " + std::to_string(maxval) + " (need 255 or 65535)");
  }
  img.bit_depth = maxval == 65535 ? 16 : 8;
  const std::size_t count = img.width * img.height * img.channels;
  const std::size_t bytes = img.bit_depth == 16 ? 2 : 1;
  std::vector<unsigned char> buf(count * bytes);
  if (!is.read(reinterpret_cast<char*>(buf.data()), static_cast<std::streamsize>(buf.size()))) {
    throw std::runtime_error(path + ": truncated raster");
  }
  img.data.resize(count);
  for (std::size_t i = 0; i < count; ++i) {
    img.data[i] = bytes == 2 ? static_cast<std::uint16_t>((buf[2 * i] << 8) | buf[2 * i + 1]) : buf[i];
  }
  if (img.channels == 4) {
    // Drop alpha from RGB_ALPHA tuples.
    std::vector<std::uint16_t> rgb;
    rgb.reserve(img.width * img.height * 3);
    for (std::size_t i = 0; i < count; i += 4) rgb.insert(rgb.end(), img.data.begin() + i, img.data.begin() + i + 3);
    img.data = std::move(rgb);
    img.channels = 3;
  }
  return img;
}

inline void write_pnm(const std::string& path, const Image& img) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw std::runtime_error("cannot open " + path + " for writing");
  const bool pam = std::filesystem::path(path).extension() == ".pam";
  const int maxval = img.bit_depth == 16 ? 65535 : 255;
  if (pam) {
    os << "P7\nWIDTH " << img.width << "\nHEIGHT " << img.height << "\nDEPTH " << img.channels << "\nMAXVAL "
       << maxval << "\nTUPLTYPE " << (img.channels == 1 ? "GRAYSCALE" : "RGB") << "\nENDHDR\n";
  } else {
    if (img.channels != 1 && img.channels != 3) throw std::invalid_argument("write_pnm: need 1 or 3 channels");
    os << (img.channels == 1 ? "P5" : "P6") << "\n" << img.width << " " << img.height << "\n" << maxval << "\n";
  }
  for (const std::uint16_t v : img.data) {
    if (img.bit_depth == 16) os.put(static_cast<char>(v >> 8));
    os.put(static_cast<char>(v & 0xff));
  }
  if (!os) throw std::runtime_error("write failed: " + path);
}

inline bool has_png_magic(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  unsigned char m[8] = {};
  is.read(reinterpret_cast<char*>(m), 8);
  return is && png_sig_cmp(m, 0, 8) == 0;
}

}  // namespace detail

inline bool is_image_path(const std::filesystem::path& p) {
  auto ext = p.extension().string();
  std::transform(ext.begin(), ext.end(), ext.begin(), [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  return ext == ".png" || ext == ".ppm" || ext == ".pgm" || ext == ".pam" || ext == ".pnm";
}

inline Image read_image(const std::string& path) {
  if (!std::filesystem::exists(path)) throw std::runtime_error("image not found: " + path);
  return detail::has_png_magic(path) ? detail::read_png(path) : detail::read_pnm(path);
}

/// Format follows the extension: .png, otherwise PNM/PAM.
inline void write_image(const std::string& path, const Image& img) {
  if (std::filesystem::path(path).extension() == ".png") {
    detail::write_png(path, img);
  } else {
    detail::write_pnm(path, img);
  }
}

/// Interleaved samples -> (1, channels, h, w) in [0, 1].
inline Tensor image_to_tensor(const Image& img) {
  const std::size_t plane = img.width * img.height;
  std::vector<float> v(plane * img.channels);
  const float scale = 1.0f / static_cast<float>(img.max_value());
  for (std::size_t p = 0; p < plane; ++p)
    for (std::size_t c = 0; c < img.channels; ++c) v[c * plane + p] = static_cast<float>(img.data[p * img.channels + c]) * scale;
  return Tensor(Shape{1, img.channels, img.height, img.width}, std::move(v));
}

/// Sample `n` of a tensor, clamped to [0, 1] and rounded to the bit depth.
inline Image tensor_to_image(const Tensor& t, int bit_depth = 8, std::size_t n = 0) {
  const Shape s = t.shape();
  Image img{s.w, s.h, s.c, bit_depth, std::vector<std::uint16_t>(s.c * s.plane())};
  const double maxv = img.max_value();
  for (std::size_t c = 0; c < s.c; ++c)
    for (std::size_t p = 0; p < s.plane(); ++p) {
      const double v = std::clamp(static_cast<double>(t.values()[(n * s.c + c) * s.plane() + p]), 0.0, 1.0);
      img.data[p * s.c + c] = static_cast<std::uint16_t>(std::lround(v * maxv));
    }
  return img;
}

}  // namespace dynisp
