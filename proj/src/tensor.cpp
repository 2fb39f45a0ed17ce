// SPDX-License-Identifier: Apache-2.0
#include "xmodal/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <sstream>

namespace xmodal {

using detail::TensorImpl;

std::size_t shape_numel(const Shape& shape) {
  std::size_t n = 1;
  for (std::size_t d : shape) n *= d;
  return n;
}

std::string shape_str(const Shape& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) os << " x ";
    os << shape[i];
  }
  os << ']';
  return os.str();
}

namespace {

thread_local GradTape* g_active_tape = nullptr;

template <class Fn>
void with_dtype(DType d, Fn&& fn) {
  if (d == DType::F32)
    fn.template operator()<float>();
  else
    fn.template operator()<double>();
}

template <class T>
void ensure_grad(TensorImpl& t) {
  auto& g = detail::grad_vec<T>(t);
  if (g.empty()) g.assign(t.numel(), T(0));
}

void check_same_dtype(const Tensor& a, const Tensor& b, const char* op) {
  if (a.dtype() != b.dtype())
    throw ValueError(std::string(op) + ": dtype mismatch between operands");
}

// Returns the active tape when any input is tracked, else nullptr.
GradTape* tape_for(std::initializer_list<const Tensor*> inputs) {
  GradTape* tape = GradTape::active();
  if (!tape) return nullptr;
  for (const Tensor* t : inputs)
    if (t->requires_grad()) return tape;
  return nullptr;
}

// ---- matmul kernels: c[m x n] (+)= product, k is the contraction length ---

template <class T>
void mm_acc(const T* a, const T* b, T* c, std::size_t m, std::size_t k, std::size_t n) {
  for (std::size_t i = 0; i < m; ++i) {
    T* crow = c + i * n;
    for (std::size_t p = 0; p < k; ++p) {
      const T av = a[i * k + p];
      const T* brow = b + p * n;
      for (std::size_t j = 0; j < n; ++j) crow[j] += av * brow[j];
    }
  }
}

// c[m x n] += a[m x k] . b[n x k]^T
template <class T>
void mm_bt_acc(const T* a, const T* b, T* c, std::size_t m, std::size_t k, std::size_t n) {
  for (std::size_t i = 0; i < m; ++i) {
    for (std::size_t j = 0; j < n; ++j) {
      T acc = 0;
      const T* arow = a + i * k;
      const T* brow = b + j * k;
      for (std::size_t p = 0; p < k; ++p) acc += arow[p] * brow[p];
      c[i * n + j] += acc;
    }
  }
}

// c[m x n] += a[k x m]^T . b[k x n]
template <class T>
void mm_at_acc(const T* a, const T* b, T* c, std::size_t m, std::size_t k, std::size_t n) {
  for (std::size_t p = 0; p < k; ++p) {
    const T* arow = a + p * m;
    const T* brow = b + p * n;
    for (std::size_t i = 0; i < m; ++i) {
      const T av = arow[i];
      T* crow = c + i * n;
      for (std::size_t j = 0; j < n; ++j) crow[j] += av * brow[j];
    }
  }
}

// Axis decomposition for softmax and friends: [outer, len, inner].
struct AxisSplit {
  std::size_t outer = 1, len = 1, inner = 1;
};

AxisSplit split_axis(const Shape& shape, std::size_t axis) {
  AxisSplit s;
  for (std::size_t i = 0; i < axis; ++i) s.outer *= shape[i];
  s.len = shape[axis];
  for (std::size_t i = axis + 1; i < shape.size(); ++i) s.inner *= shape[i];
  return s;
}

std::size_t normalize_axis(int axis, std::size_t rank, const char* op) {
  int r = static_cast<int>(rank);
  if (axis < -r || axis >= r)
    throw ValueError(std::string(op) + ": axis " + std::to_string(axis) + " out of range for rank " +
                     std::to_string(rank));
  return static_cast<std::size_t>(axis < 0 ? axis + r : axis);
}

}  // namespace

// ---- Tensor ----------------------------------------------------------------

Tensor Tensor::make(Shape shape, DType dtype) {
  auto impl = std::make_shared<TensorImpl>();
  impl->shape = std::move(shape);
  impl->dtype = dtype;
  const std::size_t n = impl->numel();
  if (dtype == DType::F32)
    impl->f32.assign(n, 0.0f);
  else
    impl->f64.assign(n, 0.0);
  return Tensor(std::move(impl));
}

Tensor wrap_impl(std::shared_ptr<TensorImpl> impl) { return Tensor(std::move(impl)); }

Tensor Tensor::zeros(Shape shape, DType dtype) { return make(std::move(shape), dtype); }

Tensor Tensor::full(Shape shape, double value, DType dtype) {
  Tensor t = make(std::move(shape), dtype);
  with_dtype(dtype, [&]<class T>() {
    auto& v = detail::data_vec<T>(*t.impl_);
    std::fill(v.begin(), v.end(), static_cast<T>(value));
  });
  return t;
}

Tensor Tensor::from_vector(Shape shape, const std::vector<double>& values, DType dtype) {
  if (shape_numel(shape) != values.size())
    throw ValueError("from_vector: shape " + shape_str(shape) + " wants " +
                     std::to_string(shape_numel(shape)) + " values, got " + std::to_string(values.size()));
  Tensor t = make(std::move(shape), dtype);
  with_dtype(dtype, [&]<class T>() {
    auto& v = detail::data_vec<T>(*t.impl_);
    for (std::size_t i = 0; i < values.size(); ++i) v[i] = static_cast<T>(values[i]);
  });
  return t;
}

Tensor Tensor::uniform(Shape shape, double lo, double hi, Rng& rng, DType dtype) {
  Tensor t = make(std::move(shape), dtype);
  with_dtype(dtype, [&]<class T>() {
    auto& v = detail::data_vec<T>(*t.impl_);
    for (auto& x : v) x = static_cast<T>(rng.uniform(lo, hi));
  });
  return t;
}

void Tensor::check_dtype(DType expected) const {
  if (impl_->dtype != expected) throw ValueError("tensor dtype does not match requested element type");
}

double Tensor::item() const {
  if (!impl_ || numel() != 1)
    throw ValueError("item: tensor is not a scalar, shape " + (impl_ ? shape_str(shape()) : "<null>"));
  double out = 0;
  with_dtype(dtype(), [&]<class T>() { out = static_cast<double>(detail::data_vec<T>(*impl_)[0]); });
  return out;
}

double Tensor::at(std::initializer_list<std::size_t> index) const {
  if (index.size() != rank())
    throw ValueError("at: index rank " + std::to_string(index.size()) + " does not match tensor rank " +
                     std::to_string(rank()));
  std::size_t flat = 0;
  std::size_t axis = 0;
  for (std::size_t i : index) {
    if (i >= impl_->shape[axis]) throw ValueError("at: index out of bounds");
    flat = flat * impl_->shape[axis] + i;
    ++axis;
  }
  double out = 0;
  with_dtype(dtype(), [&]<class T>() { out = static_cast<double>(detail::data_vec<T>(*impl_)[flat]); });
  return out;
}

std::vector<double> Tensor::to_vector() const {
  std::vector<double> out(numel());
  with_dtype(dtype(), [&]<class T>() {
    const auto& v = detail::data_vec<T>(*impl_);
    for (std::size_t i = 0; i < v.size(); ++i) out[i] = static_cast<double>(v[i]);
  });
  return out;
}

std::vector<double> Tensor::grad_to_vector() const {
  if (!has_grad()) throw ValueError("grad_to_vector: no gradient present (run backward first)");
  std::vector<double> out(numel());
  with_dtype(dtype(), [&]<class T>() {
    const auto& v = detail::grad_vec<T>(*impl_);
    for (std::size_t i = 0; i < v.size(); ++i) out[i] = static_cast<double>(v[i]);
  });
  return out;
}

void Tensor::zero_grad() {
  impl_->grad_f32.clear();
  impl_->grad_f64.clear();
}

Tensor Tensor::clone() const {
  Tensor t = make(shape(), dtype());
  t.impl_->f32 = impl_->f32;
  t.impl_->f64 = impl_->f64;
  t.impl_->requires_grad = impl_->requires_grad;
  return t;
}

Tensor Tensor::astype(DType dtype) const {
  if (dtype == this->dtype()) return clone();
  return from_vector(shape(), to_vector(), dtype);
}

bool Tensor::same_bits(const Tensor& other) const {
  if (dtype() != other.dtype() || shape() != other.shape()) return false;
  bool eq = true;
  with_dtype(dtype(), [&]<class T>() {
    const auto& a = detail::data_vec<T>(*impl_);
    const auto& b = detail::data_vec<T>(*other.impl_);
    eq = a.size() == b.size() &&
         (a.empty() || std::memcmp(a.data(), b.data(), a.size() * sizeof(T)) == 0);
  });
  return eq;
}

void Tensor::copy_data_from(const Tensor& src) {
  if (dtype() != src.dtype() || shape() != src.shape())
    throw ValueError("copy_data_from: dtype/shape mismatch: " + shape_str(shape()) + " vs " +
                     shape_str(src.shape()));
  impl_->f32 = src.impl_->f32;
  impl_->f64 = src.impl_->f64;
}

// ---- GradTape ---------------------------------------------------------------

GradTape::GradTape() : prev_(g_active_tape) { g_active_tape = this; }

GradTape::~GradTape() { g_active_tape = prev_; }

GradTape* GradTape::active() { return g_active_tape; }

void GradTape::record(const char* op, std::function<void()> backward_fn) {
  nodes_.push_back({op, std::move(backward_fn)});
}

void GradTape::backward(const Tensor& loss) {
  if (consumed_)
    throw ValueError("backward: tape already consumed; gradients would accumulate twice without a reset");
  if (!loss.defined() || loss.numel() != 1)
    throw ValueError("backward: loss must be a scalar, got shape " +
                     (loss.defined() ? shape_str(loss.shape()) : std::string("<null>")));
  if (!loss.requires_grad())
    throw ValueError("backward: loss is not tracked (no recorded operation produced it)");
  consumed_ = true;
  auto impl = loss.impl();
  with_dtype(impl->dtype, [&]<class T>() {
    ensure_grad<T>(*impl);
    detail::grad_vec<T>(*impl)[0] += T(1);
  });
  for (auto it = nodes_.rbegin(); it != nodes_.rend(); ++it) it->backward_fn();
}

// ---- operations --------------------------------------------------------------

Tensor matmul(const Tensor& a, const Tensor& b) {
  check_same_dtype(a, b, "matmul");
  if (a.rank() != 2 || b.rank() != 2)
    throw ValueError("matmul: expects rank-2 operands, got " + shape_str(a.shape()) + " and " +
                     shape_str(b.shape()));
  const std::size_t m = a.dim(0), k = a.dim(1), n = b.dim(1);
  if (b.dim(0) != k)
    throw ValueError("matmul: inner dimensions differ: " + shape_str(a.shape()) + " vs " +
                     shape_str(b.shape()));
  Tensor out = Tensor::zeros({m, n}, a.dtype());
  with_dtype(a.dtype(), [&]<class T>() {
    mm_acc<T>(a.data_as<T>().data(), b.data_as<T>().data(), out.mutable_data<T>().data(), m, k, n);
  });
  if (GradTape* tape = tape_for({&a, &b})) {
    out.set_requires_grad(true);
    tape->record("matmul", [ai = a.impl(), bi = b.impl(), oi = out.impl(), m, k, n] {
      if (!oi->has_grad()) return;
      with_dtype(oi->dtype, [&]<class T>() {
        const T* dc = detail::grad_vec<T>(*oi).data();
        if (ai->requires_grad) {
          ensure_grad<T>(*ai);
          mm_bt_acc<T>(dc, detail::data_vec<T>(*bi).data(), detail::grad_vec<T>(*ai).data(), m, n, k);
        }
        if (bi->requires_grad) {
          ensure_grad<T>(*bi);
          mm_at_acc<T>(detail::data_vec<T>(*ai).data(), dc, detail::grad_vec<T>(*bi).data(), k, m, n);
        }
      });
    });
  }
  return out;
}

Tensor transpose(const Tensor& x) {
  if (x.rank() != 2) throw ValueError("transpose: expects rank 2, got " + shape_str(x.shape()));
  const std::size_t r = x.dim(0), c = x.dim(1);
  Tensor out = Tensor::zeros({c, r}, x.dtype());
  with_dtype(x.dtype(), [&]<class T>() {
    const T* src = x.data_as<T>().data();
    T* dst = out.mutable_data<T>().data();
    for (std::size_t i = 0; i < r; ++i)
      for (std::size_t j = 0; j < c; ++j) dst[j * r + i] = src[i * c + j];
  });
  if (GradTape* tape = tape_for({&x})) {
    out.set_requires_grad(true);
    tape->record("transpose", [xi = x.impl(), oi = out.impl(), r, c] {
      if (!oi->has_grad() || !xi->requires_grad) return;
      with_dtype(oi->dtype, [&]<class T>() {
        ensure_grad<T>(*xi);
        const T* dy = detail::grad_vec<T>(*oi).data();
        T* dx = detail::grad_vec<T>(*xi).data();
        for (std::size_t i = 0; i < r; ++i)
          for (std::size_t j = 0; j < c; ++j) dx[i * c + j] += dy[j * r + i];
      });
    });
  }
  return out;
}

namespace {

// Shared pattern for elementwise binary ops with same-shape operands.
template <class Fwd>
Tensor elementwise2(const Tensor& a, const Tensor& b, const char* op, Fwd&& fwd) {
  check_same_dtype(a, b, op);
  if (a.shape() != b.shape())
    throw ValueError(std::string(op) + ": shape mismatch: " + shape_str(a.shape()) + " vs " +
                     shape_str(b.shape()));
  Tensor out = Tensor::zeros(a.shape(), a.dtype());
  with_dtype(a.dtype(), [&]<class T>() {
    auto av = a.data_as<T>();
    auto bv = b.data_as<T>();
    auto ov = out.mutable_data<T>();
    for (std::size_t i = 0; i < av.size(); ++i) ov[i] = fwd(av[i], bv[i]);
  });
  return out;
}

}  // namespace

Tensor add(const Tensor& a, const Tensor& b) {
  Tensor out = elementwise2(a, b, "add", [](auto x, auto y) { return x + y; });
  if (GradTape* tape = tape_for({&a, &b})) {
    out.set_requires_grad(true);
    tape->record("add", [ai = a.impl(), bi = b.impl(), oi = out.impl()] {
      if (!oi->has_grad()) return;
      with_dtype(oi->dtype, [&]<class T>() {
        const auto& dy = detail::grad_vec<T>(*oi);
        for (auto* in : {ai.get(), bi.get()}) {
          if (!in->requires_grad) continue;
          ensure_grad<T>(*in);
          auto& g = detail::grad_vec<T>(*in);
          for (std::size_t i = 0; i < dy.size(); ++i) g[i] += dy[i];
        }
      });
    });
  }
  return out;
}

Tensor mul(const Tensor& a, const Tensor& b) {
  Tensor out = elementwise2(a, b, "mul", [](auto x, auto y) { return x * y; });
  if (GradTape* tape = tape_for({&a, &b})) {
    out.set_requires_grad(true);
    tape->record("mul", [ai = a.impl(), bi = b.impl(), oi = out.impl()] {
      if (!oi->has_grad()) return;
      with_dtype(oi->dtype, [&]<class T>() {
        const auto& dy = detail::grad_vec<T>(*oi);
        if (ai->requires_grad) {
          ensure_grad<T>(*ai);
          auto& g = detail::grad_vec<T>(*ai);
          const auto& other = detail::data_vec<T>(*bi);
          for (std::size_t i = 0; i < dy.size(); ++i) g[i] += dy[i] * other[i];
        }
        if (bi->requires_grad) {
          ensure_grad<T>(*bi);
          auto& g = detail::grad_vec<T>(*bi);
          const auto& other = detail::data_vec<T>(*ai);
          for (std::size_t i = 0; i < dy.size(); ++i) g[i] += dy[i] * other[i];
        }
      });
    });
  }
  return out;
}

Tensor scale(const Tensor& x, double c) {
  Tensor out = Tensor::zeros(x.shape(), x.dtype());
  with_dtype(x.dtype(), [&]<class T>() {
    auto xv = x.data_as<T>();
    auto ov = out.mutable_data<T>();
    const T cv = static_cast<T>(c);
    for (std::size_t i = 0; i < xv.size(); ++i) ov[i] = cv * xv[i];
  });
  if (GradTape* tape = tape_for({&x})) {
    out.set_requires_grad(true);
    tape->record("scale", [xi = x.impl(), oi = out.impl(), c] {
      if (!oi->has_grad() || !xi->requires_grad) return;
      with_dtype(oi->dtype, [&]<class T>() {
        ensure_grad<T>(*xi);
        const auto& dy = detail::grad_vec<T>(*oi);
        auto& dx = detail::grad_vec<T>(*xi);
        const T cv = static_cast<T>(c);
        for (std::size_t i = 0; i < dy.size(); ++i) dx[i] += cv * dy[i];
      });
    });
  }
  return out;
}

Tensor add_bias(const Tensor& x, const Tensor& bias) {
  check_same_dtype(x, bias, "add_bias");
  if (x.rank() != 2 || bias.rank() != 1 || bias.dim(0) != x.dim(1))
    throw ValueError("add_bias: expects [t x d] + [d], got " + shape_str(x.shape()) + " and " +
                     shape_str(bias.shape()));
  const std::size_t t = x.dim(0), d = x.dim(1);
  Tensor out = Tensor::zeros(x.shape(), x.dtype());
  with_dtype(x.dtype(), [&]<class T>() {
    auto xv = x.data_as<T>();
    auto bv = bias.data_as<T>();
    auto ov = out.mutable_data<T>();
    for (std::size_t i = 0; i < t; ++i)
      for (std::size_t j = 0; j < d; ++j) ov[i * d + j] = xv[i * d + j] + bv[j];
  });
  if (GradTape* tape = tape_for({&x, &bias})) {
    out.set_requires_grad(true);
    tape->record("add_bias", [xi = x.impl(), bi = bias.impl(), oi = out.impl(), t, d] {
      if (!oi->has_grad()) return;
      with_dtype(oi->dtype, [&]<class T>() {
        const auto& dy = detail::grad_vec<T>(*oi);
        if (xi->requires_grad) {
          ensure_grad<T>(*xi);
          auto& dx = detail::grad_vec<T>(*xi);
          for (std::size_t i = 0; i < dy.size(); ++i) dx[i] += dy[i];
        }
        if (bi->requires_grad) {
          ensure_grad<T>(*bi);
          auto& db = detail::grad_vec<T>(*bi);
          for (std::size_t i = 0; i < t; ++i)
            for (std::size_t j = 0; j < d; ++j) db[j] += dy[i * d + j];
        }
      });
    });
  }
  return out;
}

Tensor softmax(const Tensor& x, int axis) {
  const std::size_t ax = normalize_axis(axis, x.rank(), "softmax");
  const AxisSplit s = split_axis(x.shape(), ax);
  Tensor out = Tensor::zeros(x.shape(), x.dtype());
  if (s.len == 0) return out;
  with_dtype(x.dtype(), [&]<class T>() {
    const T* in = x.data_as<T>().data();
    T* o = out.mutable_data<T>().data();
    for (std::size_t u = 0; u < s.outer; ++u) {
      for (std::size_t v = 0; v < s.inner; ++v) {
        const std::size_t base = u * s.len * s.inner + v;
        // Max-subtraction keeps exp() in range for arbitrarily large logits.
        T mx = in[base];
        for (std::size_t l = 1; l < s.len; ++l) mx = std::max(mx, in[base + l * s.inner]);
        T total = 0;
        for (std::size_t l = 0; l < s.len; ++l) {
          const T e = std::exp(in[base + l * s.inner] - mx);
          o[base + l * s.inner] = e;
          total += e;
        }
        for (std::size_t l = 0; l < s.len; ++l) o[base + l * s.inner] /= total;
      }
    }
  });
  if (GradTape* tape = tape_for({&x})) {
    out.set_requires_grad(true);
    tape->record("softmax", [xi = x.impl(), oi = out.impl(), s] {
      if (!oi->has_grad() || !xi->requires_grad) return;
      with_dtype(oi->dtype, [&]<class T>() {
        ensure_grad<T>(*xi);
        const T* y = detail::data_vec<T>(*oi).data();
        const T* dy = detail::grad_vec<T>(*oi).data();
        T* dx = detail::grad_vec<T>(*xi).data();
        for (std::size_t u = 0; u < s.outer; ++u) {
          for (std::size_t v = 0; v < s.inner; ++v) {
            const std::size_t base = u * s.len * s.inner + v;
            T dot = 0;
            for (std::size_t l = 0; l < s.len; ++l) {
              const std::size_t idx = base + l * s.inner;
              dot += dy[idx] * y[idx];
            }
            for (std::size_t l = 0; l < s.len; ++l) {
              const std::size_t idx = base + l * s.inner;
              dx[idx] += y[idx] * (dy[idx] - dot);
            }
          }
        }
      });
    });
  }
  return out;
}

Tensor pad_to_length(const Tensor& x, std::size_t target_len, bool allow_truncation) {
  if (x.rank() != 2) throw ValueError("pad_to_length: expects rank 2, got " + shape_str(x.shape()));
  const std::size_t t = x.dim(0), d = x.dim(1);
  if (t > target_len && !allow_truncation)
    throw ValueError("pad_to_length: sequence length " + std::to_string(t) + " exceeds target " +
                     std::to_string(target_len) + " and truncation is disabled");
  const std::size_t keep = std::min(t, target_len);
  Tensor out = Tensor::zeros({target_len, d}, x.dtype());
  with_dtype(x.dtype(), [&]<class T>() {
    auto src = x.data_as<T>();
    auto dst = out.mutable_data<T>();
    if (keep * d > 0) std::memcpy(dst.data(), src.data(), keep * d * sizeof(T));
  });
  if (GradTape* tape = tape_for({&x})) {
    out.set_requires_grad(true);
    tape->record("pad_to_length", [xi = x.impl(), oi = out.impl(), keep, d] {
      if (!oi->has_grad() || !xi->requires_grad) return;
      with_dtype(oi->dtype, [&]<class T>() {
        ensure_grad<T>(*xi);
        const T* dy = detail::grad_vec<T>(*oi).data();
        T* dx = detail::grad_vec<T>(*xi).data();
        for (std::size_t i = 0; i < keep * d; ++i) dx[i] += dy[i];
      });
    });
  }
  return out;
}

Tensor concat(std::span<const Tensor> parts, std::size_t axis) {
  if (parts.empty()) throw ValueError("concat: no inputs");
  const Tensor& first = parts[0];
  const std::size_t rank = first.rank();
  if (axis >= rank) throw ValueError("concat: axis out of range");
  Shape out_shape = first.shape();
  std::size_t axis_total = 0;
  for (const Tensor& p : parts) {
    check_same_dtype(first, p, "concat");
    if (p.rank() != rank) throw ValueError("concat: rank mismatch");
    for (std::size_t i = 0; i < rank; ++i) {
      if (i != axis && p.shape()[i] != out_shape[i])
        throw ValueError("concat: non-axis dimension mismatch: " + shape_str(first.shape()) + " vs " +
                         shape_str(p.shape()));
    }
    axis_total += p.dim(axis);
  }
  out_shape[axis] = axis_total;
  const AxisSplit s = split_axis(out_shape, axis);
  Tensor out = Tensor::zeros(out_shape, first.dtype());

  bool any_grad = false;
  for (const Tensor& p : parts) any_grad |= p.requires_grad();

  std::vector<std::shared_ptr<TensorImpl>> impls;
  std::vector<std::size_t> lens;
  impls.reserve(parts.size());
  for (const Tensor& p : parts) {
    impls.push_back(p.impl());
    lens.push_back(p.dim(axis));
  }

  with_dtype(first.dtype(), [&]<class T>() {
    T* dst = out.mutable_data<T>().data();
    for (std::size_t u = 0; u < s.outer; ++u) {
      std::size_t offset = 0;
      for (std::size_t p = 0; p < impls.size(); ++p) {
        const T* src = detail::data_vec<T>(*impls[p]).data();
        const std::size_t block = lens[p] * s.inner;
        if (block > 0)
          std::memcpy(dst + (u * s.len + offset) * s.inner, src + u * block, block * sizeof(T));
        offset += lens[p];
      }
    }
  });

  if (any_grad && GradTape::active()) {
    out.set_requires_grad(true);
    GradTape::active()->record("concat", [impls, lens, oi = out.impl(), s] {
      if (!oi->has_grad()) return;
      with_dtype(oi->dtype, [&]<class T>() {
        const T* dy = detail::grad_vec<T>(*oi).data();
        for (std::size_t u = 0; u < s.outer; ++u) {
          std::size_t offset = 0;
          for (std::size_t p = 0; p < impls.size(); ++p) {
            const std::size_t block = lens[p] * s.inner;
            if (impls[p]->requires_grad && block > 0) {
              ensure_grad<T>(*impls[p]);
              T* dx = detail::grad_vec<T>(*impls[p]).data();
              const T* src = dy + (u * s.len + offset) * s.inner;
              for (std::size_t i = 0; i < block; ++i) dx[u * block + i] += src[i];
            }
            offset += lens[p];
          }
        }
      });
    });
  }
  return out;
}

Tensor concat(const Tensor& a, const Tensor& b, std::size_t axis) {
  Tensor parts[] = {a, b};
  return concat(std::span<const Tensor>(parts, 2), axis);
}

Tensor reshape(const Tensor& x, Shape shape) {
  if (shape_numel(shape) != x.numel())
    throw ValueError("reshape: cannot view " + shape_str(x.shape()) + " as " + shape_str(shape));
  Tensor out = Tensor::zeros(std::move(shape), x.dtype());
  with_dtype(x.dtype(), [&]<class T>() {
    auto src = x.data_as<T>();
    auto dst = out.mutable_data<T>();
    if (!src.empty()) std::memcpy(dst.data(), src.data(), src.size() * sizeof(T));
  });
  if (GradTape* tape = tape_for({&x})) {
    out.set_requires_grad(true);
    tape->record("reshape", [xi = x.impl(), oi = out.impl()] {
      if (!oi->has_grad() || !xi->requires_grad) return;
      with_dtype(oi->dtype, [&]<class T>() {
        ensure_grad<T>(*xi);
        const auto& dy = detail::grad_vec<T>(*oi);
        auto& dx = detail::grad_vec<T>(*xi);
        for (std::size_t i = 0; i < dy.size(); ++i) dx[i] += dy[i];
      });
    });
  }
  return out;
}

Tensor flatten(const Tensor& x) {
  if (x.rank() != 2) throw ValueError("flatten: expects rank 2, got " + shape_str(x.shape()));
  return reshape(x, {x.dim(0) * x.dim(1)});
}

Tensor slice_cols(const Tensor& x, std::size_t begin, std::size_t end) {
  if (x.rank() != 2) throw ValueError("slice_cols: expects rank 2, got " + shape_str(x.shape()));
  const std::size_t t = x.dim(0), d = x.dim(1);
  if (begin > end || end > d) throw ValueError("slice_cols: bad column range");
  const std::size_t w = end - begin;
  Tensor out = Tensor::zeros({t, w}, x.dtype());
  with_dtype(x.dtype(), [&]<class T>() {
    const T* src = x.data_as<T>().data();
    T* dst = out.mutable_data<T>().data();
    for (std::size_t i = 0; i < t; ++i)
      std::memcpy(dst + i * w, src + i * d + begin, w * sizeof(T));
  });
  if (GradTape* tape = tape_for({&x})) {
    out.set_requires_grad(true);
    tape->record("slice_cols", [xi = x.impl(), oi = out.impl(), t, d, begin, w] {
      if (!oi->has_grad() || !xi->requires_grad) return;
      with_dtype(oi->dtype, [&]<class T>() {
        ensure_grad<T>(*xi);
        const T* dy = detail::grad_vec<T>(*oi).data();
        T* dx = detail::grad_vec<T>(*xi).data();
        for (std::size_t i = 0; i < t; ++i)
          for (std::size_t j = 0; j < w; ++j) dx[i * d + begin + j] += dy[i * w + j];
      });
    });
  }
  return out;
}

Tensor mask_columns_from(const Tensor& x, std::size_t col) {
  if (x.rank() != 2) throw ValueError("mask_columns_from: expects rank 2, got " + shape_str(x.shape()));
  const std::size_t t = x.dim(0), d = x.dim(1);
  if (col > d) throw ValueError("mask_columns_from: column out of range");
  Tensor out = Tensor::zeros({t, d}, x.dtype());
  with_dtype(x.dtype(), [&]<class T>() {
    const T* src = x.data_as<T>().data();
    T* dst = out.mutable_data<T>().data();
    const T neg = static_cast<T>(-1e30);
    for (std::size_t i = 0; i < t; ++i) {
      for (std::size_t j = 0; j < d; ++j) dst[i * d + j] = j < col ? src[i * d + j] : neg;
    }
  });
  if (GradTape* tape = tape_for({&x})) {
    out.set_requires_grad(true);
    tape->record("mask_columns_from", [xi = x.impl(), oi = out.impl(), t, d, col] {
      if (!oi->has_grad() || !xi->requires_grad) return;
      with_dtype(oi->dtype, [&]<class T>() {
        ensure_grad<T>(*xi);
        const T* dy = detail::grad_vec<T>(*oi).data();
        T* dx = detail::grad_vec<T>(*xi).data();
        for (std::size_t i = 0; i < t; ++i)
          for (std::size_t j = 0; j < col; ++j) dx[i * d + j] += dy[i * d + j];
      });
    });
  }
  return out;
}

Tensor dropout(const Tensor& x, double p, bool training, Rng& rng) {
  if (p < 0.0 || p >= 1.0)
    throw ValueError("dropout: probability must be in [0, 1), got " + std::to_string(p));
  if (!training || p == 0.0) return x;  // identity; no RNG draws consumed

  const double keep_scale = 1.0 / (1.0 - p);
  Tensor out = Tensor::zeros(x.shape(), x.dtype());
  // The mask holds 0 or 1/(1-p); backward reuses it unchanged.
  auto mask = std::make_shared<std::vector<double>>(x.numel());
  for (auto& m : *mask) m = rng.uniform() < p ? 0.0 : keep_scale;
  with_dtype(x.dtype(), [&]<class T>() {
    auto src = x.data_as<T>();
    auto dst = out.mutable_data<T>();
    for (std::size_t i = 0; i < src.size(); ++i) dst[i] = src[i] * static_cast<T>((*mask)[i]);
  });
  if (GradTape* tape = tape_for({&x})) {
    out.set_requires_grad(true);
    tape->record("dropout", [xi = x.impl(), oi = out.impl(), mask] {
      if (!oi->has_grad() || !xi->requires_grad) return;
      with_dtype(oi->dtype, [&]<class T>() {
        ensure_grad<T>(*xi);
        const auto& dy = detail::grad_vec<T>(*oi);
        auto& dx = detail::grad_vec<T>(*xi);
        for (std::size_t i = 0; i < dy.size(); ++i) dx[i] += dy[i] * static_cast<T>((*mask)[i]);
      });
    });
  }
  return out;
}

Tensor gelu(const Tensor& x) {
  Tensor out = Tensor::zeros(x.shape(), x.dtype());
  with_dtype(x.dtype(), [&]<class T>() {
    auto src = x.data_as<T>();
    auto dst = out.mutable_data<T>();
    for (std::size_t i = 0; i < src.size(); ++i) {
      const double v = static_cast<double>(src[i]);
      dst[i] = static_cast<T>(v * 0.5 * (1.0 + std::erf(v / std::sqrt(2.0))));
    }
  });
  if (GradTape* tape = tape_for({&x})) {
    out.set_requires_grad(true);
    tape->record("gelu", [xi = x.impl(), oi = out.impl()] {
      if (!oi->has_grad() || !xi->requires_grad) return;
      with_dtype(oi->dtype, [&]<class T>() {
        ensure_grad<T>(*xi);
        const auto& xv = detail::data_vec<T>(*xi);
        const auto& dy = detail::grad_vec<T>(*oi);
        auto& dx = detail::grad_vec<T>(*xi);
        constexpr double inv_sqrt2 = 0.70710678118654752440;
        constexpr double inv_sqrt2pi = 0.39894228040143267794;
        for (std::size_t i = 0; i < dy.size(); ++i) {
          const double v = static_cast<double>(xv[i]);
          const double cdf = 0.5 * (1.0 + std::erf(v * inv_sqrt2));
          const double pdf = inv_sqrt2pi * std::exp(-0.5 * v * v);
          dx[i] += dy[i] * static_cast<T>(cdf + v * pdf);
        }
      });
    });
  }
  return out;
}

Tensor layer_norm(const Tensor& x, const Tensor& gain, const Tensor& bias, double eps) {
  check_same_dtype(x, gain, "layer_norm");
  check_same_dtype(x, bias, "layer_norm");
  if (x.rank() != 2 || gain.rank() != 1 || bias.rank() != 1 || gain.dim(0) != x.dim(1) ||
      bias.dim(0) != x.dim(1))
    throw ValueError("layer_norm: expects x [t x d] with gain/bias [d], got " + shape_str(x.shape()) +
                     ", " + shape_str(gain.shape()) + ", " + shape_str(bias.shape()));
  const std::size_t t = x.dim(0), d = x.dim(1);
  Tensor out = Tensor::zeros(x.shape(), x.dtype());
  // Saved for backward: normalized activations and per-row inverse sigma.
  auto xhat = std::make_shared<std::vector<double>>(t * d);
  auto inv_sigma = std::make_shared<std::vector<double>>(t);
  with_dtype(x.dtype(), [&]<class T>() {
    const T* in = x.data_as<T>().data();
    const T* g = gain.data_as<T>().data();
    const T* b = bias.data_as<T>().data();
    T* o = out.mutable_data<T>().data();
    for (std::size_t i = 0; i < t; ++i) {
      double mean = 0;
      for (std::size_t j = 0; j < d; ++j) mean += static_cast<double>(in[i * d + j]);
      mean /= d;
      double var = 0;
      for (std::size_t j = 0; j < d; ++j) {
        const double c = static_cast<double>(in[i * d + j]) - mean;
        var += c * c;
      }
      var /= d;
      const double is = 1.0 / std::sqrt(var + eps);
      (*inv_sigma)[i] = is;
      for (std::size_t j = 0; j < d; ++j) {
        const double xh = (static_cast<double>(in[i * d + j]) - mean) * is;
        (*xhat)[i * d + j] = xh;
        o[i * d + j] = static_cast<T>(xh * static_cast<double>(g[j]) + static_cast<double>(b[j]));
      }
    }
  });
  if (GradTape* tape = tape_for({&x, &gain, &bias})) {
    out.set_requires_grad(true);
    tape->record("layer_norm",
                 [xi = x.impl(), gi = gain.impl(), bi = bias.impl(), oi = out.impl(), xhat, inv_sigma, t, d] {
      if (!oi->has_grad()) return;
      with_dtype(oi->dtype, [&]<class T>() {
        const T* dy = detail::grad_vec<T>(*oi).data();
        const T* g = detail::data_vec<T>(*gi).data();
        if (gi->requires_grad) {
          ensure_grad<T>(*gi);
          T* dg = detail::grad_vec<T>(*gi).data();
          for (std::size_t i = 0; i < t; ++i)
            for (std::size_t j = 0; j < d; ++j)
              dg[j] += dy[i * d + j] * static_cast<T>((*xhat)[i * d + j]);
        }
        if (bi->requires_grad) {
          ensure_grad<T>(*bi);
          T* db = detail::grad_vec<T>(*bi).data();
          for (std::size_t i = 0; i < t; ++i)
            for (std::size_t j = 0; j < d; ++j) db[j] += dy[i * d + j];
        }
        if (xi->requires_grad) {
          ensure_grad<T>(*xi);
          T* dx = detail::grad_vec<T>(*xi).data();
          for (std::size_t i = 0; i < t; ++i) {
            double mean_dxhat = 0, mean_dxhat_xhat = 0;
            for (std::size_t j = 0; j < d; ++j) {
              const double dxh = static_cast<double>(dy[i * d + j]) * static_cast<double>(g[j]);
              mean_dxhat += dxh;
              mean_dxhat_xhat += dxh * (*xhat)[i * d + j];
            }
            mean_dxhat /= d;
            mean_dxhat_xhat /= d;
            for (std::size_t j = 0; j < d; ++j) {
              const double dxh = static_cast<double>(dy[i * d + j]) * static_cast<double>(g[j]);
              const double v =
                  (*inv_sigma)[i] * (dxh - mean_dxhat - (*xhat)[i * d + j] * mean_dxhat_xhat);
              dx[i * d + j] += static_cast<T>(v);
            }
          }
        }
      });
    });
  }
  return out;
}

Tensor sum(const Tensor& x) {
  Tensor out = Tensor::zeros(Shape{}, x.dtype());
  with_dtype(x.dtype(), [&]<class T>() {
    auto src = x.data_as<T>();
    T total = 0;
    for (T v : src) total += v;
    out.mutable_data<T>()[0] = total;
  });
  if (GradTape* tape = tape_for({&x})) {
    out.set_requires_grad(true);
    tape->record("sum", [xi = x.impl(), oi = out.impl()] {
      if (!oi->has_grad() || !xi->requires_grad) return;
      with_dtype(oi->dtype, [&]<class T>() {
        ensure_grad<T>(*xi);
        const T dy = detail::grad_vec<T>(*oi)[0];
        auto& dx = detail::grad_vec<T>(*xi);
        for (auto& v : dx) v += dy;
      });
    });
  }
  return out;
}

}  // namespace xmodal
