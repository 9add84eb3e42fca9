#pragma once

// Binary tensor files.
//
// Single tensor ("DTNS"):
//   char[4] "DTNS" | u32 version = 1 | u32 rank | u32 dims[rank] | f32 payload
// Named container ("DTNC"), used for checkpoints:
//   char[4] "DTNC" | u32 version = 1 | u32 count |
//   count x ( u32 name_length | name bytes | one DTNS record )
// All integers and floats are little-endian; payload is row-major, w fastest.
// Tensors are written with rank 4 (n, c, h, w); readers accept rank 1..4 and
// left-pad missing leading dims with 1.

#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <istream>
#include <ostream>
#include <string>
#include <utility>
#include <vector>

#include "dynisp/ops.hpp"

namespace dynisp {

using NamedTensors = std::vector<std::pair<std::string, Tensor>>;

namespace detail {

inline void put_u32(std::ostream& os, std::uint32_t v) {
  const char b[4] = {static_cast<char>(v & 0xff), static_cast<char>((v >> 8) & 0xff),
                     static_cast<char>((v >> 16) & 0xff), static_cast<char>((v >> 24) & 0xff)};
  os.write(b, 4);
}

inline std::uint32_t get_u32(std::istream& is) {
  unsigned char b[4];
  if (!is.read(reinterpret_cast<char*>(b), 4)) throw std::runtime_error("tensor file: truncated header");
  return static_cast<std::uint32_t>(b[0]) | (static_cast<std::uint32_t>(b[1]) << 8) |
         (static_cast<std::uint32_t>(b[2]) << 16) | (static_cast<std::uint32_t>(b[3]) << 24);
}

inline void expect_magic(std::istream& is, const char* magic) {
  char m[4];
  if (!is.read(m, 4) || std::memcmp(m, magic, 4) != 0) {
    throw std::runtime_error(std::string("tensor file: missing magic ") + magic);
  }
}

}  // namespace detail

inline void write_tensor(std::ostream& os, const Tensor& t) {
  os.write("DTNS", 4);
  detail::put_u32(os, 1);
  detail::put_u32(os, 4);
  const Shape& s = t.shape();
  for (const std::size_t d : {s.n, s.c, s.h, s.w}) detail::put_u32(os, static_cast<std::uint32_t>(d));
  for (const float v : t.values()) detail::put_u32(os, std::bit_cast<std::uint32_t>(v));
  if (!os) throw std::runtime_error("tensor file: write failed");
}

inline Tensor read_tensor(std::istream& is) {
  detail::expect_magic(is, "DTNS");
  const std::uint32_t version = detail::get_u32(is);
  if (version != 1) throw std::runtime_error("tensor file: unsupported version " + std::to_string(version));
  const std::uint32_t rank = detail::get_u32(is);
  if (rank == 0 || rank > 4) throw std::runtime_error("tensor file: unsupported rank " + std::to_string(rank));
  std::size_t dims[4] = {1, 1, 1, 1};
  for (std::uint32_t i = 0; i < rank; ++i) dims[4 - rank + i] = detail::get_u32(is);
  const Shape s{dims[0], dims[1], dims[2], dims[3]};
  std::vector<float> values(s.size());
  for (auto& v : values) v = std::bit_cast<float>(detail::get_u32(is));
  return Tensor(s, std::move(values));
}

inline void save_tensor(const std::string& path, const Tensor& t) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw std::runtime_error("cannot open " + path + " for writing");
  write_tensor(os, t);
}

inline Tensor load_tensor(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw std::runtime_error("cannot open " + path);
  return read_tensor(is);
}

inline void write_container(std::ostream& os, const NamedTensors& entries) {
  os.write("DTNC", 4);
  detail::put_u32(os, 1);
  detail::put_u32(os, static_cast<std::uint32_t>(entries.size()));
  for (const auto& [name, t] : entries) {
    detail::put_u32(os, static_cast<std::uint32_t>(name.size()));
    os.write(name.data(), static_cast<std::streamsize>(name.size()));
    write_tensor(os, t);
  }
}

inline NamedTensors read_container(std::istream& is) {
  detail::expect_magic(is, "DTNC");
  const std::uint32_t version = detail::get_u32(is);
  if (version != 1) throw std::runtime_error("tensor container: unsupported version " + std::to_string(version));
  const std::uint32_t count = detail::get_u32(is);
  NamedTensors out;
  out.reserve(count);
  for (std::uint32_t i = 0; i < count; ++i) {
    const std::uint32_t len = detail::get_u32(is);
    std::string name(len, '\0');
    if (!is.read(name.data(), len)) throw std::runtime_error("tensor container: truncated name");
    out.emplace_back(std::move(name), read_tensor(is));
  }
  return out;
}

inline void save_container(const std::string& path, const NamedTensors& entries) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw std::runtime_error("cannot open " + path + " for writing");
  write_container(os, entries);
  if (!os) throw std::runtime_error("write failed: " + path);
}

inline NamedTensors load_container(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw std::runtime_error("cannot open " + path);
  return read_container(is);
}

}  // namespace dynisp
