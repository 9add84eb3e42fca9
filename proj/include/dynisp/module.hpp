#pragma once

// Shared plumbing for learnable components: seeded initialisation and named
// parameter traversal. Every component exposes
//   template <class F> void visit(const std::string& prefix, F&& f)
// calling f(name, tensor&) for each learnable tensor in a fixed order.

#include <cmath>
#include <cstdint>
#include <random>
#include <string>
#include <vector>

#include "dynisp/tensor.hpp"

namespace dynisp {

using Rng = std::mt19937_64;

/// Leaf tensor with values drawn from U(-1/sqrt(fan_in), 1/sqrt(fan_in)).
template <class T>
BasicTensor<T> uniform_init(Shape shape, std::size_t fan_in, Rng& rng) {
  const double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
  std::uniform_real_distribution<double> dist(-bound, bound);
  std::vector<T> v(shape.size());
  for (auto& x : v) x = static_cast<T>(dist(rng));
  BasicTensor<T> t(shape, std::move(v));
  t.set_requires_grad(true);
  return t;
}

template <class T>
BasicTensor<T> const_init(Shape shape, T value) {
  BasicTensor<T> t(shape, value);
  t.set_requires_grad(true);
  return t;
}

/// FNV-1a over raw bytes; used for config and weight fingerprints.
inline std::uint64_t fnv1a(const void* data, std::size_t len, std::uint64_t h = 1469598103934665603ull) {
  const auto* p = static_cast<const unsigned char*>(data);
  for (std::size_t i = 0; i < len; ++i) {
    h ^= p[i];
    h *= 1099511628211ull;
  }
  return h;
}

}  // namespace dynisp
