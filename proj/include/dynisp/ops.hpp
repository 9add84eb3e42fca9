#pragma once

// Elementwise arithmetic, reductions and dense matrix products.
//
// Broadcasting is limited to: identical shapes, a single-value right-hand
// side, or a per-channel right-hand side of shape (1 or n, c, 1, 1).

#include <Eigen/Core>

#include <algorithm>
#include <cmath>
#include <string>

#include "dynisp/tensor.hpp"

namespace dynisp {

namespace detail {

enum class Broadcast { same, scalar, channel };

inline Broadcast broadcast_kind(const Shape& a, const Shape& b, const char* op) {
  if (a == b) return Broadcast::same;
  if (b.size() == 1) return Broadcast::scalar;
  if (b.h == 1 && b.w == 1 && b.c == a.c && (b.n == 1 || b.n == a.n)) return Broadcast::channel;
  throw std::invalid_argument(std::string(op) + ": cannot broadcast " + to_string(b) + " onto " + to_string(a));
}

/// Calls fn(i, j) for every element i of `a` with j the matching index of `b`.
template <class Fn>
void for_each_pair(const Shape& a, const Shape& b, Broadcast kind, Fn&& fn) {
  const std::size_t plane = a.plane();
  std::size_t i = 0;
  for (std::size_t n = 0; n < a.n; ++n) {
    for (std::size_t c = 0; c < a.c; ++c) {
      std::size_t j = 0;
      if (kind == Broadcast::channel) j = (b.n == 1 ? 0 : n) * b.c + c;
      for (std::size_t p = 0; p < plane; ++p, ++i) fn(i, kind == Broadcast::same ? i : j);
    }
  }
}

/// z = f(x, y) with partials dfx(x, y, z) and dfy(x, y, z).
template <class T, class F, class DX, class DY>
BasicTensor<T> binary(const BasicTensor<T>& a, const BasicTensor<T>& b, const char* op, F f, DX dfx, DY dfy) {
  const Broadcast kind = broadcast_kind(a.shape(), b.shape(), op);
  const auto av = a.values();
  const auto bv = b.values();
  std::vector<T> out(a.size());
  for_each_pair(a.shape(), b.shape(), kind, [&](std::size_t i, std::size_t j) { out[i] = f(av[i], bv[j]); });
  return make_result<T>(a.shape(), std::move(out), op, {&a, &b},
                        [a, b, kind, dfx, dfy](std::span<const T> g, std::span<const T> z) {
                          T* ga = grad_of(a);
                          T* gb = grad_of(b);
                          const auto av = a.values();
                          const auto bv = b.values();
                          for_each_pair(a.shape(), b.shape(), kind, [&](std::size_t i, std::size_t j) {
                            if (ga) ga[i] += g[i] * dfx(av[i], bv[j], z[i]);
                            if (gb) gb[j] += g[i] * dfy(av[i], bv[j], z[i]);
                          });
                        });
}

/// y = f(x) with derivative df(x, y).
template <class T, class F, class DF>
BasicTensor<T> unary(const BasicTensor<T>& a, const char* op, F f, DF df) {
  const auto av = a.values();
  std::vector<T> out(a.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = f(av[i]);
  return make_result<T>(a.shape(), std::move(out), op, {&a}, [a, df](std::span<const T> g, std::span<const T> y) {
    T* ga = grad_of(a);
    if (!ga) return;
    const auto av = a.values();
    for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * df(av[i], y[i]);
  });
}

template <class T>
using RowMatrix = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <class T>
using MatMap = Eigen::Map<RowMatrix<T>>;
template <class T>
using ConstMatMap = Eigen::Map<const RowMatrix<T>>;

}  // namespace detail

// ---- binary -----------------------------------------------------------------

template <class T>
BasicTensor<T> add(const BasicTensor<T>& a, const BasicTensor<T>& b) {
  return detail::binary(
      a, b, "add", [](T x, T y) { return x + y; }, [](T, T, T) { return T(1); }, [](T, T, T) { return T(1); });
}

template <class T>
BasicTensor<T> sub(const BasicTensor<T>& a, const BasicTensor<T>& b) {
  return detail::binary(
      a, b, "sub", [](T x, T y) { return x - y; }, [](T, T, T) { return T(1); }, [](T, T, T) { return T(-1); });
}

template <class T>
BasicTensor<T> mul(const BasicTensor<T>& a, const BasicTensor<T>& b) {
  return detail::binary(
      a, b, "mul", [](T x, T y) { return x * y; }, [](T, T y, T) { return y; }, [](T x, T, T) { return x; });
}

template <class T>
BasicTensor<T> div(const BasicTensor<T>& a, const BasicTensor<T>& b) {
  for (const T v : b.values()) {
    if (v == T(0)) throw std::domain_error("div: divisor contains zeros");
  }
  return detail::binary(
      a, b, "div", [](T x, T y) { return x / y; }, [](T, T y, T) { return T(1) / y; },
      [](T, T y, T z) { return -z / y; });
}

/// x^y. Negative bases require integral exponents; 0^y has zero gradient w.r.t. y.
template <class T>
BasicTensor<T> pow(const BasicTensor<T>& a, const BasicTensor<T>& b) {
  const auto kind = detail::broadcast_kind(a.shape(), b.shape(), "pow");
  const auto av = a.values();
  const auto bv = b.values();
  detail::for_each_pair(a.shape(), b.shape(), kind, [&](std::size_t i, std::size_t j) {
    if (av[i] < T(0) && std::trunc(bv[j]) != bv[j]) {
      throw std::domain_error("pow: negative base with non-integer exponent");
    }
  });
  return detail::binary(
      a, b, "pow", [](T x, T y) { return std::pow(x, y); },
      [](T x, T y, T z) { return x == T(0) ? (y == T(1) ? T(1) : T(0)) : y * z / x; },
      [](T x, T, T z) { return x > T(0) ? z * std::log(x) : T(0); });
}

template <class T>
BasicTensor<T> minimum(const BasicTensor<T>& a, const BasicTensor<T>& b) {
  return detail::binary(
      a, b, "min", [](T x, T y) { return std::min(x, y); }, [](T x, T y, T) { return x <= y ? T(1) : T(0); },
      [](T x, T y, T) { return x <= y ? T(0) : T(1); });
}

template <class T>
BasicTensor<T> maximum(const BasicTensor<T>& a, const BasicTensor<T>& b) {
  return detail::binary(
      a, b, "max", [](T x, T y) { return std::max(x, y); }, [](T x, T y, T) { return x >= y ? T(1) : T(0); },
      [](T x, T y, T) { return x >= y ? T(0) : T(1); });
}

/// Selects a where mask is non-zero, else b. Gradient reaches only the selected branch.
template <class T>
BasicTensor<T> where(const BasicTensor<T>& mask, const BasicTensor<T>& a, const BasicTensor<T>& b) {
  if (mask.shape() != a.shape() || a.shape() != b.shape()) {
    throw std::invalid_argument("where: mask " + to_string(mask.shape()) + ", a " + to_string(a.shape()) + ", b " +
                                to_string(b.shape()) + " must agree");
  }
  const auto mv = mask.values();
  const auto av = a.values();
  const auto bv = b.values();
  std::vector<T> out(a.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = mv[i] != T(0) ? av[i] : bv[i];
  return detail::make_result<T>(a.shape(), std::move(out), "where", {&a, &b},
                                [mask, a, b](std::span<const T> g, std::span<const T>) {
                                  T* ga = detail::grad_of(a);
                                  T* gb = detail::grad_of(b);
                                  const auto mv = mask.values();
                                  for (std::size_t i = 0; i < g.size(); ++i) {
                                    if (mv[i] != T(0)) {
                                      if (ga) ga[i] += g[i];
                                    } else if (gb) {
                                      gb[i] += g[i];
                                    }
                                  }
                                });
}

// ---- unary ------------------------------------------------------------------

template <class T>
BasicTensor<T> exp(const BasicTensor<T>& a) {
  return detail::unary(
      a, "exp", [](T x) { return std::exp(x); }, [](T, T y) { return y; });
}

template <class T>
BasicTensor<T> log(const BasicTensor<T>& a) {
  for (const T v : a.values()) {
    if (!(v > T(0))) throw std::domain_error("log: non-positive input");
  }
  return detail::unary(
      a, "log", [](T x) { return std::log(x); }, [](T x, T) { return T(1) / x; });
}

template <class T>
T sigmoid_value(T x) {
  return x >= T(0) ? T(1) / (T(1) + std::exp(-x)) : std::exp(x) / (T(1) + std::exp(x));
}

template <class T>
BasicTensor<T> sigmoid(const BasicTensor<T>& a) {
  return detail::unary(
      a, "sigmoid", [](T x) { return sigmoid_value(x); }, [](T, T y) { return y * (T(1) - y); });
}

template <class T>
BasicTensor<T> relu(const BasicTensor<T>& a) {
  return detail::unary(
      a, "relu", [](T x) { return x > T(0) ? x : T(0); }, [](T x, T) { return x > T(0) ? T(1) : T(0); });
}

template <class T>
BasicTensor<T> neg(const BasicTensor<T>& a) {
  return detail::unary(
      a, "neg", [](T x) { return -x; }, [](T, T) { return T(-1); });
}

template <class T>
BasicTensor<T> scale(const BasicTensor<T>& a, T s) {
  return detail::unary(
      a, "scale", [s](T x) { return s * x; }, [s](T, T) { return s; });
}

template <class T>
BasicTensor<T> add_scalar(const BasicTensor<T>& a, T s) {
  return detail::unary(
      a, "add_scalar", [s](T x) { return x + s; }, [](T, T) { return T(1); });
}

/// Clamps to [lo, hi] in the forward pass; the gradient passes straight through.
template <class T>
BasicTensor<T> clamp_straight_through(const BasicTensor<T>& a, T lo, T hi) {
  return detail::unary(
      a, "clamp", [lo, hi](T x) { return std::clamp(x, lo, hi); }, [](T, T) { return T(1); });
}

template <class T>
BasicTensor<T> operator+(const BasicTensor<T>& a, const BasicTensor<T>& b) {
  return add(a, b);
}
template <class T>
BasicTensor<T> operator-(const BasicTensor<T>& a, const BasicTensor<T>& b) {
  return sub(a, b);
}
template <class T>
BasicTensor<T> operator*(const BasicTensor<T>& a, const BasicTensor<T>& b) {
  return mul(a, b);
}
template <class T>
BasicTensor<T> operator/(const BasicTensor<T>& a, const BasicTensor<T>& b) {
  return div(a, b);
}

// ---- reductions -------------------------------------------------------------
// Sequential accumulation in memory order (w fastest, then h, c, n).

template <class T>
BasicTensor<T> sum(const BasicTensor<T>& a) {
  double acc = 0.0;
  for (const T v : a.values()) acc += static_cast<double>(v);
  return detail::make_result<T>(Shape{1, 1, 1, 1}, {static_cast<T>(acc)}, "sum", {&a},
                                [a](std::span<const T> g, std::span<const T>) {
                                  T* ga = detail::grad_of(a);
                                  if (!ga) return;
                                  for (std::size_t i = 0; i < a.size(); ++i) ga[i] += g[0];
                                });
}

template <class T>
BasicTensor<T> mean(const BasicTensor<T>& a) {
  if (a.size() == 0) throw std::invalid_argument("mean of empty tensor");
  double acc = 0.0;
  for (const T v : a.values()) acc += static_cast<double>(v);
  const double inv = 1.0 / static_cast<double>(a.size());
  return detail::make_result<T>(Shape{1, 1, 1, 1}, {static_cast<T>(acc * inv)}, "mean", {&a},
                                [a, inv](std::span<const T> g, std::span<const T>) {
                                  T* ga = detail::grad_of(a);
                                  if (!ga) return;
                                  const T d = static_cast<T>(g[0] * inv);
                                  for (std::size_t i = 0; i < a.size(); ++i) ga[i] += d;
                                });
}

/// Mean of squared differences.
template <class T>
BasicTensor<T> mse(const BasicTensor<T>& a, const BasicTensor<T>& b) {
  if (a.shape() != b.shape()) {
    throw std::invalid_argument("mse: " + to_string(a.shape()) + " vs " + to_string(b.shape()));
  }
  const auto av = a.values();
  const auto bv = b.values();
  double acc = 0.0;
  for (std::size_t i = 0; i < av.size(); ++i) {
    const double d = static_cast<double>(av[i]) - static_cast<double>(bv[i]);
    acc += d * d;
  }
  const double inv = 1.0 / static_cast<double>(av.size());
  return detail::make_result<T>(Shape{1, 1, 1, 1}, {static_cast<T>(acc * inv)}, "mse", {&a, &b},
                                [a, b, inv](std::span<const T> g, std::span<const T>) {
                                  T* ga = detail::grad_of(a);
                                  T* gb = detail::grad_of(b);
                                  const auto av = a.values();
                                  const auto bv = b.values();
                                  const T k = static_cast<T>(2.0 * g[0] * inv);
                                  for (std::size_t i = 0; i < av.size(); ++i) {
                                    const T d = k * (av[i] - bv[i]);
                                    if (ga) ga[i] += d;
                                    if (gb) gb[i] -= d;
                                  }
                                });
}

/// Mean of absolute differences; the subgradient at equality is zero.
template <class T>
BasicTensor<T> l1(const BasicTensor<T>& a, const BasicTensor<T>& b) {
  if (a.shape() != b.shape()) {
    throw std::invalid_argument("l1: " + to_string(a.shape()) + " vs " + to_string(b.shape()));
  }
  const auto av = a.values();
  const auto bv = b.values();
  double acc = 0.0;
  for (std::size_t i = 0; i < av.size(); ++i) acc += std::abs(static_cast<double>(av[i]) - static_cast<double>(bv[i]));
  const double inv = 1.0 / static_cast<double>(av.size());
  return detail::make_result<T>(Shape{1, 1, 1, 1}, {static_cast<T>(acc * inv)}, "l1", {&a, &b},
                                [a, b, inv](std::span<const T> g, std::span<const T>) {
                                  T* ga = detail::grad_of(a);
                                  T* gb = detail::grad_of(b);
                                  const auto av = a.values();
                                  const auto bv = b.values();
                                  const T k = static_cast<T>(g[0] * inv);
                                  for (std::size_t i = 0; i < av.size(); ++i) {
                                    const T d = av[i] > bv[i] ? k : (av[i] < bv[i] ? -k : T(0));
                                    if (ga) ga[i] += d;
                                    if (gb) gb[i] -= d;
                                  }
                                });
}

// ---- matrices ---------------------------------------------------------------
// A matrix is a tensor of shape (rows, cols, 1, 1).

inline void require_matrix(const Shape& s, const char* op) {
  if (s.h != 1 || s.w != 1) throw std::invalid_argument(std::string(op) + ": expected a matrix, got " + to_string(s));
}

template <class T>
BasicTensor<T> matmul(const BasicTensor<T>& a, const BasicTensor<T>& b) {
  require_matrix(a.shape(), "matmul");
  require_matrix(b.shape(), "matmul");
  const std::size_t m = a.shape().n, k = a.shape().c, p = b.shape().c;
  if (b.shape().n != k) {
    throw std::invalid_argument("matmul: " + to_string(a.shape()) + " x " + to_string(b.shape()));
  }
  std::vector<T> out(m * p);
  detail::MatMap<T>(out.data(), m, p).noalias() =
      detail::ConstMatMap<T>(a.values().data(), m, k) * detail::ConstMatMap<T>(b.values().data(), k, p);
  return detail::make_result<T>(Shape{m, p, 1, 1}, std::move(out), "matmul", {&a, &b},
                                [a, b, m, k, p](std::span<const T> g, std::span<const T>) {
                                  detail::ConstMatMap<T> G(g.data(), m, p);
                                  if (T* ga = detail::grad_of(a)) {
                                    detail::MatMap<T>(ga, m, k).noalias() +=
                                        G * detail::ConstMatMap<T>(b.values().data(), k, p).transpose();
                                  }
                                  if (T* gb = detail::grad_of(b)) {
                                    detail::MatMap<T>(gb, k, p).noalias() +=
                                        detail::ConstMatMap<T>(a.values().data(), m, k).transpose() * G;
                                  }
                                });
}

/// y = x W^T + bias for x (rows, in), W (out, in), bias (1, out) or empty.
template <class T>
BasicTensor<T> linear(const BasicTensor<T>& x, const BasicTensor<T>& weight, const BasicTensor<T>& bias) {
  require_matrix(x.shape(), "linear");
  require_matrix(weight.shape(), "linear");
  const std::size_t rows = x.shape().n, in = x.shape().c, outc = weight.shape().n;
  if (weight.shape().c != in) {
    throw std::invalid_argument("linear: input " + to_string(x.shape()) + " vs weight " + to_string(weight.shape()));
  }
  const bool has_bias = !bias.empty();
  if (has_bias && bias.size() != outc) {
    throw std::invalid_argument("linear: bias " + to_string(bias.shape()) + " for " + std::to_string(outc) +
                                " outputs");
  }
  std::vector<T> out(rows * outc);
  detail::MatMap<T> Y(out.data(), rows, outc);
  // Row by row, so a row's result does not depend on how many rows are batched.
  const detail::ConstMatMap<T> W(weight.values().data(), outc, in);
  const detail::ConstMatMap<T> X(x.values().data(), rows, in);
  for (std::size_t r = 0; r < rows; ++r) Y.row(r).noalias() = (W * X.row(r).transpose()).transpose();
  if (has_bias) {
    Y.rowwise() += Eigen::Map<const Eigen::Matrix<T, 1, Eigen::Dynamic>>(bias.values().data(), outc);
  }
  return detail::make_result<T>(
      Shape{rows, outc, 1, 1}, std::move(out), "linear", {&x, &weight, &bias},
      [x, weight, bias, rows, in, outc](std::span<const T> g, std::span<const T>) {
        detail::ConstMatMap<T> G(g.data(), rows, outc);
        if (T* gx = detail::grad_of(x)) {
          detail::MatMap<T>(gx, rows, in).noalias() += G * detail::ConstMatMap<T>(weight.values().data(), outc, in);
        }
        if (T* gw = detail::grad_of(weight)) {
          detail::MatMap<T>(gw, outc, in).noalias() +=
              G.transpose() * detail::ConstMatMap<T>(x.values().data(), rows, in);
        }
        if (!bias.empty()) {
          if (T* gb = detail::grad_of(bias)) {
            for (std::size_t r = 0; r < rows; ++r)
              for (std::size_t o = 0; o < outc; ++o) gb[o] += g[r * outc + o];
          }
        }
      });
}

/// Per-sample product of (n, 1, m, k) and (n, 1, k, p) giving (n, 1, m, p).
template <class T>
BasicTensor<T> batched_matmul(const BasicTensor<T>& a, const BasicTensor<T>& b) {
  const Shape& sa = a.shape();
  const Shape& sb = b.shape();
  if (sa.c != 1 || sb.c != 1 || sa.n != sb.n || sa.w != sb.h) {
    throw std::invalid_argument("batched_matmul: " + to_string(sa) + " x " + to_string(sb));
  }
  const std::size_t n = sa.n, m = sa.h, k = sa.w, p = sb.w;
  std::vector<T> out(n * m * p);
  for (std::size_t i = 0; i < n; ++i) {
    detail::MatMap<T>(out.data() + i * m * p, m, p).noalias() =
        detail::ConstMatMap<T>(a.values().data() + i * m * k, m, k) *
        detail::ConstMatMap<T>(b.values().data() + i * k * p, k, p);
  }
  return detail::make_result<T>(Shape{n, 1, m, p}, std::move(out), "batched_matmul", {&a, &b},
                                [a, b, n, m, k, p](std::span<const T> g, std::span<const T>) {
                                  T* ga = detail::grad_of(a);
                                  T* gb = detail::grad_of(b);
                                  for (std::size_t i = 0; i < n; ++i) {
                                    detail::ConstMatMap<T> G(g.data() + i * m * p, m, p);
                                    if (ga) {
                                      detail::MatMap<T>(ga + i * m * k, m, k).noalias() +=
                                          G * detail::ConstMatMap<T>(b.values().data() + i * k * p, k, p).transpose();
                                    }
                                    if (gb) {
                                      detail::MatMap<T>(gb + i * k * p, k, p).noalias() +=
                                          detail::ConstMatMap<T>(a.values().data() + i * m * k, m, k).transpose() * G;
                                    }
                                  }
                                });
}

// ---- layout -----------------------------------------------------------------

/// (n, c, h, w) -> (n*h*w, c, 1, 1): one row per spatial site.
template <class T>
BasicTensor<T> to_rows(const BasicTensor<T>& x) {
  const Shape s = x.shape();
  const std::size_t plane = s.plane();
  if (plane == 1) return x.reshape(Shape{s.n, s.c, 1, 1});
  std::vector<T> out(x.size());
  const auto xv = x.values();
  for (std::size_t n = 0; n < s.n; ++n)
    for (std::size_t c = 0; c < s.c; ++c)
      for (std::size_t p = 0; p < plane; ++p) out[(n * plane + p) * s.c + c] = xv[(n * s.c + c) * plane + p];
  return detail::make_result<T>(Shape{s.n * plane, s.c, 1, 1}, std::move(out), "to_rows", {&x},
                                [x, s, plane](std::span<const T> g, std::span<const T>) {
                                  T* gx = detail::grad_of(x);
                                  if (!gx) return;
                                  for (std::size_t n = 0; n < s.n; ++n)
                                    for (std::size_t c = 0; c < s.c; ++c)
                                      for (std::size_t p = 0; p < plane; ++p)
                                        gx[(n * s.c + c) * plane + p] += g[(n * plane + p) * s.c + c];
                                });
}

/// Inverse of to_rows.
template <class T>
BasicTensor<T> from_rows(const BasicTensor<T>& rows, std::size_t n, std::size_t h, std::size_t w) {
  const std::size_t plane = h * w;
  const std::size_t c = rows.shape().c;
  if (rows.shape().n != n * plane || rows.shape().h != 1 || rows.shape().w != 1) {
    throw std::invalid_argument("from_rows: " + to_string(rows.shape()) + " is not " + std::to_string(n) + "x" +
                                std::to_string(h) + "x" + std::to_string(w) + " rows");
  }
  if (plane == 1) return rows.reshape(Shape{n, c, 1, 1});
  std::vector<T> out(rows.size());
  const auto rv = rows.values();
  for (std::size_t b = 0; b < n; ++b)
    for (std::size_t ch = 0; ch < c; ++ch)
      for (std::size_t p = 0; p < plane; ++p) out[(b * c + ch) * plane + p] = rv[(b * plane + p) * c + ch];
  return detail::make_result<T>(Shape{n, c, h, w}, std::move(out), "from_rows", {&rows},
                                [rows, n, c, plane](std::span<const T> g, std::span<const T>) {
                                  T* gr = detail::grad_of(rows);
                                  if (!gr) return;
                                  for (std::size_t b = 0; b < n; ++b)
                                    for (std::size_t ch = 0; ch < c; ++ch)
                                      for (std::size_t p = 0; p < plane; ++p)
                                        gr[(b * plane + p) * c + ch] += g[(b * c + ch) * plane + p];
                                });
}

/// Concatenates tensors along the batch dimension.
template <class T>
BasicTensor<T> concat_batch(const std::vector<BasicTensor<T>>& parts) {
  if (parts.empty()) throw std::invalid_argument("concat_batch: no tensors");
  Shape s = parts.front().shape();
  s.n = 0;
  for (const auto& p : parts) {
    if (p.shape().c != s.c || p.shape().h != s.h || p.shape().w != s.w) {
      throw std::invalid_argument("concat_batch: " + to_string(p.shape()) + " does not match " +
                                  to_string(parts.front().shape()));
    }
    s.n += p.shape().n;
  }
  std::vector<T> out;
  out.reserve(s.size());
  for (const auto& p : parts) out.insert(out.end(), p.values().begin(), p.values().end());
  return BasicTensor<T>(s, std::move(out));
}

/// Copy of samples [begin, end) along the batch dimension (not recorded).
template <class T>
BasicTensor<T> slice_batch(const BasicTensor<T>& x, std::size_t begin, std::size_t end) {
  Shape s = x.shape();
  if (begin > end || end > s.n) throw std::invalid_argument("slice_batch: bad range");
  const std::size_t per = s.c * s.h * s.w;
  s.n = end - begin;
  std::vector<T> out(x.values().begin() + static_cast<std::ptrdiff_t>(begin * per),
                     x.values().begin() + static_cast<std::ptrdiff_t>(end * per));
  return BasicTensor<T>(s, std::move(out));
}

/// Converts between scalar types; the result is a fresh leaf.
template <class U, class T>
BasicTensor<U> cast(const BasicTensor<T>& x) {
  std::vector<U> out(x.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = static_cast<U>(x.values()[i]);
  return BasicTensor<U>(x.shape(), std::move(out));
}

}  // namespace dynisp
