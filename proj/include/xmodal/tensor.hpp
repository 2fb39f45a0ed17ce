// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <functional>
#include <initializer_list>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "xmodal/common.hpp"
#include "xmodal/rng.hpp"

namespace xmodal {

// Element type. Training runs at F32 by default; gradient checks run at F64
// because central finite differences are unreliable in single precision.
enum class DType : std::uint8_t { F32 = 0, F64 = 1 };

using Shape = std::vector<std::size_t>;

std::size_t shape_numel(const Shape& shape);
std::string shape_str(const Shape& shape);

namespace detail {

struct TensorImpl {
  Shape shape;
  DType dtype = DType::F32;
  std::vector<float> f32;
  std::vector<double> f64;
  std::vector<float> grad_f32;
  std::vector<double> grad_f64;
  bool requires_grad = false;

  std::size_t numel() const { return shape_numel(shape); }
  bool has_grad() const {
    return dtype == DType::F32 ? !grad_f32.empty() : !grad_f64.empty();
  }
};

template <class T>
std::vector<T>& data_vec(TensorImpl& t);
template <class T>
const std::vector<T>& data_vec(const TensorImpl& t);
template <class T>
std::vector<T>& grad_vec(TensorImpl& t);
template <class T>
const std::vector<T>& grad_vec(const TensorImpl& t);

template <>
inline std::vector<float>& data_vec<float>(TensorImpl& t) { return t.f32; }
template <>
inline std::vector<double>& data_vec<double>(TensorImpl& t) { return t.f64; }
template <>
inline const std::vector<float>& data_vec<float>(const TensorImpl& t) { return t.f32; }
template <>
inline const std::vector<double>& data_vec<double>(const TensorImpl& t) { return t.f64; }
template <>
inline std::vector<float>& grad_vec<float>(TensorImpl& t) { return t.grad_f32; }
template <>
inline std::vector<double>& grad_vec<double>(TensorImpl& t) { return t.grad_f64; }
template <>
inline const std::vector<float>& grad_vec<float>(const TensorImpl& t) { return t.grad_f32; }
template <>
inline const std::vector<double>& grad_vec<double>(const TensorImpl& t) { return t.grad_f64; }

template <class T>
constexpr DType dtype_of();
template <>
constexpr DType dtype_of<float>() { return DType::F32; }
template <>
constexpr DType dtype_of<double>() { return DType::F64; }

}  // namespace detail

// Dense row-major tensor. Copies are shallow (shared storage), clone() is
// deep. Data is immutable after construction except through mutable_data(),
// which exists for parameter updates and initialization; gradient buffers
// accumulate across backward passes until zero_grad().
class Tensor {
 public:
  Tensor() = default;

  static Tensor zeros(Shape shape, DType dtype = DType::F32);
  static Tensor full(Shape shape, double value, DType dtype = DType::F32);
  static Tensor ones(Shape shape, DType dtype = DType::F32) { return full(std::move(shape), 1.0, dtype); }
  static Tensor scalar(double value, DType dtype = DType::F32) { return full(Shape{}, value, dtype); }
  static Tensor from_vector(Shape shape, const std::vector<double>& values, DType dtype = DType::F32);
  // Elements uniform in [lo, hi), drawn from `rng`.
  static Tensor uniform(Shape shape, double lo, double hi, Rng& rng, DType dtype = DType::F32);

  bool defined() const { return impl_ != nullptr; }
  const Shape& shape() const { return impl_->shape; }
  std::size_t rank() const { return impl_->shape.size(); }
  std::size_t numel() const { return impl_->numel(); }
  std::size_t dim(std::size_t axis) const { return impl_->shape.at(axis); }
  DType dtype() const { return impl_->dtype; }

  bool requires_grad() const { return impl_ && impl_->requires_grad; }
  Tensor& set_requires_grad(bool value) {
    impl_->requires_grad = value;
    return *this;
  }

  // Single-element read; throws unless numel() == 1.
  double item() const;
  // Element read by multi-index (rank checked), widened to double.
  double at(std::initializer_list<std::size_t> index) const;
  std::vector<double> to_vector() const;

  bool has_grad() const { return impl_ && impl_->has_grad(); }
  std::vector<double> grad_to_vector() const;
  void zero_grad();

  template <class T>
  std::span<const T> data_as() const {
    check_dtype(detail::dtype_of<T>());
    const auto& v = detail::data_vec<T>(*impl_);
    return {v.data(), v.size()};
  }
  // Mutation is reserved for optimizers, initializers and test fixtures; it
  // invalidates nothing because tapes capture storage, not values.
  template <class T>
  std::span<T> mutable_data() {
    check_dtype(detail::dtype_of<T>());
    auto& v = detail::data_vec<T>(*impl_);
    return {v.data(), v.size()};
  }
  template <class T>
  std::span<const T> grad_as() const {
    check_dtype(detail::dtype_of<T>());
    const auto& v = detail::grad_vec<T>(*impl_);
    return {v.data(), v.size()};
  }

  Tensor clone() const;  // deep copy of data (not grad), requires_grad preserved
  Tensor astype(DType dtype) const;
  // Bit-exact equality of dtype, shape and payload.
  bool same_bits(const Tensor& other) const;
  // Copies data bits from `src` (same dtype/shape) into this tensor's storage.
  void copy_data_from(const Tensor& src);

  std::shared_ptr<detail::TensorImpl> impl() const { return impl_; }

 private:
  void check_dtype(DType expected) const;
  explicit Tensor(std::shared_ptr<detail::TensorImpl> impl) : impl_(std::move(impl)) {}
  static Tensor make(Shape shape, DType dtype);

  std::shared_ptr<detail::TensorImpl> impl_;

  friend Tensor wrap_impl(std::shared_ptr<detail::TensorImpl>);
};

Tensor wrap_impl(std::shared_ptr<detail::TensorImpl> impl);

// Records every differentiable operation executed while the tape is alive on
// the current thread (tapes nest; the innermost one records). backward()
// replays the record once, in reverse execution order, accumulating into the
// grad buffer of every tensor on the path to a requires_grad leaf. A tape can
// be consumed once; gradients themselves keep accumulating across tapes until
// the parameters are zeroed.
class GradTape {
 public:
  GradTape();
  ~GradTape();
  GradTape(const GradTape&) = delete;
  GradTape& operator=(const GradTape&) = delete;

  static GradTape* active();

  void record(const char* op, std::function<void()> backward_fn);
  void backward(const Tensor& loss);
  std::size_t size() const { return nodes_.size(); }

 private:
  struct Node {
    const char* op;
    std::function<void()> backward_fn;
  };
  std::vector<Node> nodes_;
  bool consumed_ = false;
  GradTape* prev_ = nullptr;
};

// ---- differentiable operations ------------------------------------------
// Every op checks shapes/dtypes, computes the forward value, and records its
// gradient rule on the active tape when any input is tracked.

Tensor matmul(const Tensor& a, const Tensor& b);  // [m×k]·[k×n] → [m×n]
Tensor transpose(const Tensor& x);                // rank 2
Tensor add(const Tensor& a, const Tensor& b);     // same shape
Tensor mul(const Tensor& a, const Tensor& b);     // elementwise, same shape
Tensor scale(const Tensor& x, double c);
Tensor add_bias(const Tensor& x, const Tensor& bias);  // [t×d] + [d], row broadcast
Tensor softmax(const Tensor& x, int axis);
// Zero rows t..target appended after the input's rows. t > target is an error
// unless allow_truncation, in which case the first target rows are kept.
Tensor pad_to_length(const Tensor& x, std::size_t target_len, bool allow_truncation = false);
Tensor concat(const Tensor& a, const Tensor& b, std::size_t axis);
Tensor concat(std::span<const Tensor> parts, std::size_t axis);
Tensor reshape(const Tensor& x, Shape shape);
Tensor flatten(const Tensor& x);  // rank 2 → rank 1, row-major
Tensor slice_cols(const Tensor& x, std::size_t begin, std::size_t end);  // rank 2
// Entries in columns >= col are replaced by a large negative constant, so a
// following softmax assigns them zero weight. Gradient flows to kept columns.
Tensor mask_columns_from(const Tensor& x, std::size_t col);
// Inverted dropout: survivors scaled by 1/(1-p) at training time, identity in
// eval mode. Mask bits come from `rng` (one uniform per element, row-major).
Tensor dropout(const Tensor& x, double p, bool training, Rng& rng);
Tensor gelu(const Tensor& x);  // exact erf form
// Per-row normalization over the last axis of a rank-2 input, then affine
// transform by gain/bias (each [d]).
Tensor layer_norm(const Tensor& x, const Tensor& gain, const Tensor& bias, double eps = 1e-5);
Tensor sum(const Tensor& x);  // scalar

}  // namespace xmodal
