#pragma once

// Dense rank-4 tensors (n, c, h, w) with reverse-mode gradient recording.
//
// A tensor is a shape plus a shared node holding the value buffer and an
// optional gradient buffer. Operations executed while a BasicTape is active
// on the current thread, and that touch at least one tensor with
// requires_grad set, push a backward closure onto the tape. Backward replays
// the closures in exact reverse order of recording.

#include <cmath>
#include <cstddef>
#include <functional>
#include <initializer_list>
#include <memory>
#include <new>
#include <span>
#include <sstream>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace dynisp {

struct Shape {
  std::size_t n = 0;
  std::size_t c = 0;
  std::size_t h = 0;
  std::size_t w = 0;

  constexpr std::size_t size() const noexcept { return n * c * h * w; }
  constexpr std::size_t plane() const noexcept { return h * w; }
  friend constexpr bool operator==(const Shape&, const Shape&) = default;
};

inline std::string to_string(const Shape& s) {
  std::ostringstream os;
  os << "[" << s.n << "," << s.c << "," << s.h << "," << s.w << "]";
  return os.str();
}

/// 64-byte aligned storage. Eigen's vectorised reductions split work by
/// pointer alignment, so a fixed alignment keeps results bit-reproducible.
template <class T>
struct AlignedAllocator {
  using value_type = T;
  static constexpr std::align_val_t kAlign{64};

  AlignedAllocator() noexcept = default;
  template <class U>
  AlignedAllocator(const AlignedAllocator<U>&) noexcept {}

  T* allocate(std::size_t n) { return static_cast<T*>(::operator new(n * sizeof(T), kAlign)); }
  void deallocate(T* p, std::size_t) noexcept { ::operator delete(p, kAlign); }

  template <class U>
  friend bool operator==(const AlignedAllocator&, const AlignedAllocator<U>&) noexcept {
    return true;
  }
};

template <class T>
using AlignedVector = std::vector<T, AlignedAllocator<T>>;

template <class T>
struct TensorNode {
  AlignedVector<T> value;
  AlignedVector<T> grad;
  bool requires_grad = false;

  AlignedVector<T>& grad_buffer() {
    if (grad.size() != value.size()) grad.assign(value.size(), T(0));
    return grad;
  }
};

template <class T>
class BasicTensor {
 public:
  using value_type = T;

  BasicTensor() : node_(std::make_shared<TensorNode<T>>()) {}

  explicit BasicTensor(Shape shape, T fill = T(0)) : shape_(shape), node_(std::make_shared<TensorNode<T>>()) {
    node_->value.assign(shape.size(), fill);
  }

  BasicTensor(Shape shape, std::vector<T> values) : shape_(shape), node_(std::make_shared<TensorNode<T>>()) {
    if (values.size() != shape.size()) {
      throw std::invalid_argument("tensor: " + std::to_string(values.size()) + " values for shape " +
                                  to_string(shape));
    }
    node_->value.assign(values.begin(), values.end());
  }

  static BasicTensor scalar(T v) { return BasicTensor(Shape{1, 1, 1, 1}, v); }

  /// Row-major matrix stored as (rows, cols, 1, 1).
  static BasicTensor matrix(std::size_t rows, std::size_t cols, std::vector<T> values) {
    return BasicTensor(Shape{rows, cols, 1, 1}, std::move(values));
  }

  const Shape& shape() const noexcept { return shape_; }
  std::size_t size() const noexcept { return node_->value.size(); }
  bool empty() const noexcept { return node_->value.empty(); }

  std::span<const T> values() const noexcept { return node_->value; }
  // Writing through this after the tensor has been consumed by a recorded
  // op invalidates that op's backward pass.
  std::span<T> mutable_values() noexcept { return node_->value; }

  std::size_t index(std::size_t n, std::size_t c, std::size_t h, std::size_t w) const noexcept {
    return ((n * shape_.c + c) * shape_.h + h) * shape_.w + w;
  }
  T operator()(std::size_t n, std::size_t c, std::size_t h = 0, std::size_t w = 0) const {
    return node_->value[index(n, c, h, w)];
  }
  T item() const {
    if (size() != 1) throw std::invalid_argument("item() on tensor of shape " + to_string(shape_));
    return node_->value[0];
  }

  bool requires_grad() const noexcept { return node_->requires_grad; }
  BasicTensor& set_requires_grad(bool on) {
    node_->requires_grad = on;
    return *this;
  }

  bool has_grad() const noexcept { return node_->grad.size() == node_->value.size() && !node_->value.empty(); }

  /// Gradient accumulated by the last backward pass; zeros if none reached this tensor.
  std::vector<T> grad() const {
    if (has_grad()) return std::vector<T>(node_->grad.begin(), node_->grad.end());
    return std::vector<T>(size(), T(0));
  }
  void zero_grad() { node_->grad.clear(); }

  /// New leaf with a copy of the values.
  BasicTensor detach() const {
    BasicTensor out(shape_);
    out.node_->value = node_->value;
    return out;
  }

  /// View with a different shape over the same storage and gradient.
  BasicTensor reshape(Shape s) const {
    if (s.size() != shape_.size()) {
      throw std::invalid_argument("reshape " + to_string(shape_) + " -> " + to_string(s));
    }
    BasicTensor out(*this);
    out.shape_ = s;
    return out;
  }

  const std::shared_ptr<TensorNode<T>>& node() const noexcept { return node_; }

 private:
  Shape shape_{};
  std::shared_ptr<TensorNode<T>> node_;
};

using Tensor = BasicTensor<float>;

template <class T>
class BasicTape {
 public:
  BasicTape() = default;
  BasicTape(const BasicTape&) = delete;
  BasicTape& operator=(const BasicTape&) = delete;

  /// Makes a tape the recording target of the calling thread for its lifetime.
  class Scope {
   public:
    explicit Scope(BasicTape& tape) : previous_(active_) { active_ = &tape; }
    ~Scope() { active_ = previous_; }
    Scope(const Scope&) = delete;
    Scope& operator=(const Scope&) = delete;

   private:
    BasicTape* previous_;
  };

  static BasicTape* active() noexcept { return active_; }

  void record(std::function<void()> backward) { entries_.push_back(std::move(backward)); }
  std::size_t size() const noexcept { return entries_.size(); }
  void clear() { entries_.clear(); }

  /// Seeds d(loss)/d(loss) = 1 and replays recorded closures newest first.
  void backward(const BasicTensor<T>& loss) {
    if (loss.size() != 1) throw std::invalid_argument("backward: loss must be a single value");
    if (!loss.requires_grad()) throw std::invalid_argument("backward: loss is not connected to any parameter");
    loss.node()->grad_buffer()[0] += T(1);
    for (auto it = entries_.rbegin(); it != entries_.rend(); ++it) (*it)();
  }

 private:
  std::vector<std::function<void()>> entries_;
  static inline thread_local BasicTape* active_ = nullptr;
};

using Tape = BasicTape<float>;

namespace detail {

template <class T>
void require_finite(std::span<const T> v, const char* op) {
  for (const T x : v) {
    if (!std::isfinite(x)) throw std::domain_error(std::string(op) + ": produced a non-finite value");
  }
}

template <class T>
bool any_requires_grad(std::initializer_list<const BasicTensor<T>*> inputs) {
  for (const auto* t : inputs) {
    if (t != nullptr && t->requires_grad()) return true;
  }
  return false;
}

/// Gradient buffer of `t` if it participates in differentiation, else nullptr.
template <class T>
T* grad_of(const BasicTensor<T>& t) {
  if (!t.requires_grad()) return nullptr;
  return t.node()->grad_buffer().data();
}

/// Wraps freshly computed values into a tensor and, when recording applies,
/// registers `backward(out_grad, out_values)` on the active tape.
template <class T, class Backward>
BasicTensor<T> make_result(Shape shape, std::vector<T>&& values, const char* op,
                           std::initializer_list<const BasicTensor<T>*> inputs, Backward&& backward) {
  require_finite<T>(values, op);
  BasicTensor<T> out(shape, std::move(values));
  auto* tape = BasicTape<T>::active();
  if (tape != nullptr && any_requires_grad<T>(inputs)) {
    out.set_requires_grad(true);
    std::weak_ptr<TensorNode<T>> weak = out.node();
    // The tape only needs the output's gradient while the output is alive or
    // referenced by a later op; later ops hold it strongly.
    tape->record([weak, fn = std::forward<Backward>(backward)]() mutable {
      auto node = weak.lock();
      if (!node || node->grad.size() != node->value.size()) return;
      fn(std::span<const T>(node->grad), std::span<const T>(node->value));
    });
  }
  return out;
}

}  // namespace detail
}  // namespace dynisp
