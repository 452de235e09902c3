#pragma once

#include <cmath>
#include <cstddef>
#include <functional>
#include <memory>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

namespace mrt {

inline std::string shape_str(const std::vector<std::size_t>& s) {
  std::ostringstream os;
  os << "[";
  for (std::size_t i = 0; i < s.size(); ++i) os << (i ? "," : "") << s[i];
  os << "]";
  return os.str();
}

inline std::size_t shape_numel(const std::vector<std::size_t>& s) {
  std::size_t n = 1;
  for (std::size_t d : s) n *= d;
  return n;
}

template <typename T>
struct TensorImpl {
  std::vector<std::size_t> shape;
  std::vector<T> v;  // values, dense row-major
  std::vector<T> g;  // gradient; allocated lazily, same length as v
  bool requires_grad = false;
};

// Value-semantics handle to a dense n-d array participating in a tape.
// Copies share storage; the tape's backward lambdas keep impls alive.
template <typename T>
class Tensor {
 public:
  Tensor() : impl_(std::make_shared<TensorImpl<T>>()) {}

  static Tensor zeros(std::vector<std::size_t> shape, bool requires_grad = false) {
    Tensor t;
    t.impl_->shape = std::move(shape);
    t.impl_->v.assign(shape_numel(t.impl_->shape), T(0));
    t.impl_->requires_grad = requires_grad;
    return t;
  }

  static Tensor from(std::vector<std::size_t> shape, std::vector<T> values,
                     bool requires_grad = false) {
    if (shape_numel(shape) != values.size())
      throw std::invalid_argument("tensor: shape " + shape_str(shape) + " wants " +
                                  std::to_string(shape_numel(shape)) + " values, got " +
                                  std::to_string(values.size()));
    Tensor t;
    t.impl_->shape = std::move(shape);
    t.impl_->v = std::move(values);
    t.impl_->requires_grad = requires_grad;
    return t;
  }

  static Tensor scalar(T value) { return from({1}, {value}); }

  const std::vector<std::size_t>& shape() const { return impl_->shape; }
  std::size_t rank() const { return impl_->shape.size(); }
  std::size_t numel() const { return impl_->v.size(); }
  std::size_t dim(std::size_t i) const { return impl_->shape[i]; }
  bool is_scalar() const { return numel() == 1; }

  std::vector<T>& values() { return impl_->v; }
  const std::vector<T>& values() const { return impl_->v; }
  T item() const { return impl_->v.at(0); }

  bool requires_grad() const { return impl_->requires_grad; }
  void set_requires_grad(bool b) { impl_->requires_grad = b; }

  bool has_grad() const { return !impl_->g.empty(); }
  std::vector<T>& grad() {
    ensure_grad();
    return impl_->g;
  }
  const std::vector<T>& grad() const { return impl_->g; }
  void ensure_grad() {
    if (impl_->g.size() != impl_->v.size()) impl_->g.assign(impl_->v.size(), T(0));
  }
  void zero_grad() {
    if (!impl_->g.empty()) impl_->g.assign(impl_->v.size(), T(0));
  }

  // strided access for rank <= 3
  T& at(std::size_t i) { return impl_->v[i]; }
  const T& at(std::size_t i) const { return impl_->v[i]; }
  T& at(std::size_t i, std::size_t j) { return impl_->v[i * impl_->shape[1] + j]; }
  const T& at(std::size_t i, std::size_t j) const { return impl_->v[i * impl_->shape[1] + j]; }
  T& at(std::size_t i, std::size_t j, std::size_t k) {
    return impl_->v[(i * impl_->shape[1] + j) * impl_->shape[2] + k];
  }
  const T& at(std::size_t i, std::size_t j, std::size_t k) const {
    return impl_->v[(i * impl_->shape[1] + j) * impl_->shape[2] + k];
  }

  std::shared_ptr<TensorImpl<T>> impl() const { return impl_; }
  bool same_impl(const Tensor& o) const { return impl_ == o.impl_; }

 private:
  std::shared_ptr<TensorImpl<T>> impl_;
};

template <typename T>
void check_finite(const Tensor<T>& t, const char* where) {
  for (T x : t.values()) {
    if (!std::isfinite(static_cast<double>(x)))
      throw std::runtime_error(std::string("non-finite value produced by ") + where);
  }
}

#if !defined(NDEBUG) || defined(MRT_ENABLE_FINITE_CHECKS)
#define MRT_DEBUG_CHECK_FINITE(t, where) ::mrt::check_finite((t), (where))
#else
#define MRT_DEBUG_CHECK_FINITE(t, where) ((void)0)
#endif

// Define-by-run tape: operations are recorded in forward order, so reverse
// iteration is a valid topological backward order. One tape per forward pass.
template <typename T>
class Tape {
 public:
  void record(std::function<void()> backward_fn) { ops_.push_back(std::move(backward_fn)); }

  std::size_t size() const { return ops_.size(); }
  void clear() { ops_.clear(); }

  // Seeds d(loss)/d(loss) = 1 and sweeps the tape once in reverse order.
  void backward(Tensor<T>& loss) {
    if (!loss.is_scalar())
      throw std::invalid_argument("backward: loss must be scalar, got shape " +
                                  shape_str(loss.shape()));
    loss.ensure_grad();
    loss.grad()[0] += T(1);
    for (auto it = ops_.rbegin(); it != ops_.rend(); ++it) (*it)();
  }

 private:
  std::vector<std::function<void()>> ops_;
};

namespace detail {

template <typename T>
inline bool want_grad(const Tape<T>* tape, const Tensor<T>& a) {
  return tape != nullptr && a.requires_grad();
}

template <typename T>
inline bool want_grad(const Tape<T>* tape, const Tensor<T>& a, const Tensor<T>& b) {
  return tape != nullptr && (a.requires_grad() || b.requires_grad());
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Elementwise ops
// ---------------------------------------------------------------------------

template <typename T, typename Fwd, typename Bwd>
Tensor<T> binary_elementwise(Tape<T>* tape, const Tensor<T>& a, const Tensor<T>& b, Fwd fwd,
                             Bwd bwd, const char* name) {
  if (a.shape() != b.shape())
    throw std::invalid_argument(std::string(name) + ": shape mismatch " + shape_str(a.shape()) +
                                " vs " + shape_str(b.shape()));
  Tensor<T> out = Tensor<T>::zeros(a.shape());
  const std::size_t n = a.numel();
  for (std::size_t i = 0; i < n; ++i) out.at(i) = fwd(a.at(i), b.at(i));
  MRT_DEBUG_CHECK_FINITE(out, name);
  if (detail::want_grad(tape, a, b)) {
    out.set_requires_grad(true);
    auto ai = a.impl(), bi = b.impl(), oi = out.impl();
    bool ga = a.requires_grad(), gb = b.requires_grad();
    tape->record([ai, bi, oi, ga, gb, bwd, n]() {
      if (ga && ai->g.size() != n) ai->g.assign(n, T(0));
      if (gb && bi->g.size() != n) bi->g.assign(n, T(0));
      for (std::size_t i = 0; i < n; ++i) {
        T da = 0, db = 0;
        bwd(ai->v[i], bi->v[i], oi->g[i], da, db);
        if (ga) ai->g[i] += da;
        if (gb) bi->g[i] += db;
      }
    });
    out.ensure_grad();
  }
  return out;
}

template <typename T>
Tensor<T> add(Tape<T>* tape, const Tensor<T>& a, const Tensor<T>& b) {
  return binary_elementwise<T>(
      tape, a, b, [](T x, T y) { return x + y; },
      [](T, T, T go, T& da, T& db) {
        da = go;
        db = go;
      },
      "add");
}

template <typename T>
Tensor<T> sub(Tape<T>* tape, const Tensor<T>& a, const Tensor<T>& b) {
  return binary_elementwise<T>(
      tape, a, b, [](T x, T y) { return x - y; },
      [](T, T, T go, T& da, T& db) {
        da = go;
        db = -go;
      },
      "sub");
}

template <typename T>
Tensor<T> mul(Tape<T>* tape, const Tensor<T>& a, const Tensor<T>& b) {
  return binary_elementwise<T>(
      tape, a, b, [](T x, T y) { return x * y; },
      [](T x, T y, T go, T& da, T& db) {
        da = go * y;
        db = go * x;
      },
      "mul");
}

template <typename T, typename Fwd, typename Bwd>
Tensor<T> unary_elementwise(Tape<T>* tape, const Tensor<T>& a, Fwd fwd, Bwd bwd,
                            const char* name) {
  Tensor<T> out = Tensor<T>::zeros(a.shape());
  const std::size_t n = a.numel();
  for (std::size_t i = 0; i < n; ++i) out.at(i) = fwd(a.at(i));
  MRT_DEBUG_CHECK_FINITE(out, name);
  if (detail::want_grad(tape, a)) {
    out.set_requires_grad(true);
    auto ai = a.impl(), oi = out.impl();
    tape->record([ai, oi, bwd, n]() {
      if (ai->g.size() != n) ai->g.assign(n, T(0));
      for (std::size_t i = 0; i < n; ++i) ai->g[i] += bwd(ai->v[i], oi->v[i], oi->g[i]);
    });
    out.ensure_grad();
  }
  return out;
}

template <typename T>
Tensor<T> relu(Tape<T>* tape, const Tensor<T>& a) {
  return unary_elementwise<T>(
      tape, a, [](T x) { return x > T(0) ? x : T(0); },
      [](T x, T, T go) { return x > T(0) ? go : T(0); }, "relu");
}

template <typename T>
Tensor<T> tanh_op(Tape<T>* tape, const Tensor<T>& a) {
  return unary_elementwise<T>(
      tape, a, [](T x) { return std::tanh(x); },
      [](T, T y, T go) { return go * (T(1) - y * y); }, "tanh");
}

template <typename T>
Tensor<T> scale(Tape<T>* tape, const Tensor<T>& a, T c) {
  return unary_elementwise<T>(
      tape, a, [c](T x) { return c * x; }, [c](T, T, T go) { return go * c; }, "scale");
}

// ---------------------------------------------------------------------------
// Reductions
// ---------------------------------------------------------------------------

namespace detail {

// Decompose index space around a reduction axis: out[outer, inner], reducing
// over `axis_len` elements with stride `inner`.
struct AxisSplit {
  std::size_t outer = 1, axis_len = 1, inner = 1;
};

inline AxisSplit split_axis(const std::vector<std::size_t>& shape, std::size_t axis) {
  AxisSplit s;
  for (std::size_t i = 0; i < axis; ++i) s.outer *= shape[i];
  s.axis_len = shape[axis];
  for (std::size_t i = axis + 1; i < shape.size(); ++i) s.inner *= shape[i];
  return s;
}

inline std::vector<std::size_t> drop_axis(const std::vector<std::size_t>& shape,
                                          std::size_t axis) {
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < shape.size(); ++i)
    if (i != axis) out.push_back(shape[i]);
  if (out.empty()) out.push_back(1);
  return out;
}

}  // namespace detail

template <typename T>
Tensor<T> sum(Tape<T>* tape, const Tensor<T>& a) {
  T acc = 0;
  for (std::size_t i = 0; i < a.numel(); ++i) acc += a.at(i);
  Tensor<T> out = Tensor<T>::scalar(acc);
  if (detail::want_grad(tape, a)) {
    out.set_requires_grad(true);
    auto ai = a.impl(), oi = out.impl();
    tape->record([ai, oi]() {
      if (ai->g.size() != ai->v.size()) ai->g.assign(ai->v.size(), T(0));
      for (std::size_t i = 0; i < ai->v.size(); ++i) ai->g[i] += oi->g[0];
    });
    out.ensure_grad();
  }
  return out;
}

template <typename T>
Tensor<T> mean(Tape<T>* tape, const Tensor<T>& a) {
  const T inv = T(1) / static_cast<T>(a.numel());
  Tensor<T> s = sum(tape, a);
  return scale(tape, s, inv);
}

template <typename T>
Tensor<T> sum_axis(Tape<T>* tape, const Tensor<T>& a, std::size_t axis) {
  if (axis >= a.rank())
    throw std::invalid_argument("sum_axis: axis " + std::to_string(axis) + " out of range for " +
                                shape_str(a.shape()));
  const auto sp = detail::split_axis(a.shape(), axis);
  Tensor<T> out = Tensor<T>::zeros(detail::drop_axis(a.shape(), axis));
  for (std::size_t o = 0; o < sp.outer; ++o)
    for (std::size_t k = 0; k < sp.axis_len; ++k)
      for (std::size_t i = 0; i < sp.inner; ++i)
        out.at(o * sp.inner + i) += a.at((o * sp.axis_len + k) * sp.inner + i);
  if (detail::want_grad(tape, a)) {
    out.set_requires_grad(true);
    auto ai = a.impl(), oi = out.impl();
    tape->record([ai, oi, sp]() {
      if (ai->g.size() != ai->v.size()) ai->g.assign(ai->v.size(), T(0));
      for (std::size_t o = 0; o < sp.outer; ++o)
        for (std::size_t k = 0; k < sp.axis_len; ++k)
          for (std::size_t i = 0; i < sp.inner; ++i)
            ai->g[(o * sp.axis_len + k) * sp.inner + i] += oi->g[o * sp.inner + i];
    });
    out.ensure_grad();
  }
  return out;
}

template <typename T>
Tensor<T> mean_axis(Tape<T>* tape, const Tensor<T>& a, std::size_t axis) {
  if (axis >= a.rank())
    throw std::invalid_argument("mean_axis: axis " + std::to_string(axis) + " out of range for " +
                                shape_str(a.shape()));
  if (a.dim(axis) == 0) throw std::invalid_argument("mean_axis: empty axis");
  return scale(tape, sum_axis(tape, a, axis), T(1) / static_cast<T>(a.dim(axis)));
}

template <typename T>
struct MinResult {
  Tensor<T> values;
  std::vector<std::size_t> argmin;  // index along reduced axis (or flat index)
};

// min with argmin; ties resolved to the lowest index so backward is
// deterministic. Gradient flows only to the selected element per slot.
template <typename T>
MinResult<T> reduce_min(Tape<T>* tape, const Tensor<T>& a, std::ptrdiff_t axis = -1) {
  if (a.numel() == 0) throw std::invalid_argument("reduce_min: empty tensor");
  MinResult<T> res;
  detail::AxisSplit sp;
  if (axis < 0) {
    sp.outer = 1;
    sp.axis_len = a.numel();
    sp.inner = 1;
    res.values = Tensor<T>::zeros({1});
  } else {
    if (static_cast<std::size_t>(axis) >= a.rank())
      throw std::invalid_argument("reduce_min: axis " + std::to_string(axis) +
                                  " out of range for " + shape_str(a.shape()));
    sp = detail::split_axis(a.shape(), static_cast<std::size_t>(axis));
    res.values = Tensor<T>::zeros(detail::drop_axis(a.shape(), static_cast<std::size_t>(axis)));
  }
  res.argmin.assign(sp.outer * sp.inner, 0);
  for (std::size_t o = 0; o < sp.outer; ++o)
    for (std::size_t i = 0; i < sp.inner; ++i) {
      T best = a.at((o * sp.axis_len) * sp.inner + i);
      std::size_t bk = 0;
      for (std::size_t k = 1; k < sp.axis_len; ++k) {
        const T x = a.at((o * sp.axis_len + k) * sp.inner + i);
        if (x < best) {
          best = x;
          bk = k;
        }
      }
      res.values.at(o * sp.inner + i) = best;
      res.argmin[o * sp.inner + i] = bk;
    }
  if (detail::want_grad(tape, a)) {
    res.values.set_requires_grad(true);
    auto ai = a.impl(), oi = res.values.impl();
    auto arg = res.argmin;
    tape->record([ai, oi, arg, sp]() {
      if (ai->g.size() != ai->v.size()) ai->g.assign(ai->v.size(), T(0));
      for (std::size_t o = 0; o < sp.outer; ++o)
        for (std::size_t i = 0; i < sp.inner; ++i) {
          const std::size_t slot = o * sp.inner + i;
          ai->g[(o * sp.axis_len + arg[slot]) * sp.inner + i] += oi->g[slot];
        }
    });
    res.values.ensure_grad();
  }
  return res;
}

// ---------------------------------------------------------------------------
// Shape ops
// ---------------------------------------------------------------------------

// Concatenate along the channel dimension: dim 1 for rank-3 [B,C,L] tensors,
// dim 0 for rank-2 [C,L]. Backward splits the incoming gradient at the
// recorded offsets.
template <typename T>
Tensor<T> concat_channels(Tape<T>* tape, const std::vector<Tensor<T>>& parts) {
  if (parts.empty()) throw std::invalid_argument("concat_channels: no parts");
  const std::size_t rank = parts[0].rank();
  const std::size_t cdim = rank == 3 ? 1 : 0;
  std::size_t total_c = 0;
  for (const auto& p : parts) {
    if (p.rank() != rank)
      throw std::invalid_argument("concat_channels: rank mismatch " + shape_str(p.shape()) +
                                  " vs " + shape_str(parts[0].shape()));
    for (std::size_t d = 0; d < rank; ++d)
      if (d != cdim && p.dim(d) != parts[0].dim(d))
        throw std::invalid_argument("concat_channels: incompatible shapes " +
                                    shape_str(p.shape()) + " vs " + shape_str(parts[0].shape()));
    total_c += p.dim(cdim);
  }
  std::vector<std::size_t> oshape = parts[0].shape();
  oshape[cdim] = total_c;
  Tensor<T> out = Tensor<T>::zeros(oshape);

  std::size_t outer = 1, inner = 1;
  for (std::size_t d = 0; d < cdim; ++d) outer *= parts[0].dim(d);
  for (std::size_t d = cdim + 1; d < rank; ++d) inner *= parts[0].dim(d);
  std::size_t coff = 0;
  bool any_grad = false;
  for (const auto& p : parts) {
    const std::size_t pc = p.dim(cdim);
    for (std::size_t o = 0; o < outer; ++o)
      for (std::size_t c = 0; c < pc; ++c)
        for (std::size_t i = 0; i < inner; ++i)
          out.at((o * total_c + coff + c) * inner + i) = p.at((o * pc + c) * inner + i);
    coff += pc;
    any_grad = any_grad || p.requires_grad();
  }
  if (tape != nullptr && any_grad) {
    out.set_requires_grad(true);
    std::vector<std::shared_ptr<TensorImpl<T>>> impls;
    std::vector<std::size_t> offs;
    std::vector<std::size_t> chans;
    std::vector<char> needs;
    std::size_t off = 0;
    for (const auto& p : parts) {
      impls.push_back(p.impl());
      offs.push_back(off);
      chans.push_back(p.dim(cdim));
      needs.push_back(p.requires_grad() ? 1 : 0);
      off += p.dim(cdim);
    }
    auto oi = out.impl();
    tape->record([impls, offs, chans, needs, oi, outer, inner, total_c]() {
      for (std::size_t pi = 0; pi < impls.size(); ++pi) {
        if (!needs[pi]) continue;
        auto& p = *impls[pi];
        if (p.g.size() != p.v.size()) p.g.assign(p.v.size(), T(0));
        const std::size_t pc = chans[pi];
        for (std::size_t o = 0; o < outer; ++o)
          for (std::size_t c = 0; c < pc; ++c)
            for (std::size_t i = 0; i < inner; ++i)
              p.g[(o * pc + c) * inner + i] += oi->g[(o * total_c + offs[pi] + c) * inner + i];
      }
    });
    out.ensure_grad();
  }
  return out;
}

// Reshape without copying semantics for grad: pass-through backward.
template <typename T>
Tensor<T> reshape(Tape<T>* tape, const Tensor<T>& a, std::vector<std::size_t> new_shape) {
  if (shape_numel(new_shape) != a.numel())
    throw std::invalid_argument("reshape: " + shape_str(a.shape()) + " -> " +
                                shape_str(new_shape) + " changes element count");
  Tensor<T> out = Tensor<T>::from(std::move(new_shape), a.values());
  if (detail::want_grad(tape, a)) {
    out.set_requires_grad(true);
    auto ai = a.impl(), oi = out.impl();
    tape->record([ai, oi]() {
      if (ai->g.size() != ai->v.size()) ai->g.assign(ai->v.size(), T(0));
      for (std::size_t i = 0; i < ai->v.size(); ++i) ai->g[i] += oi->g[i];
    });
    out.ensure_grad();
  }
  return out;
}

// [B,C,L] -> [B,L,C]
template <typename T>
Tensor<T> transpose_cl(Tape<T>* tape, const Tensor<T>& a) {
  if (a.rank() != 3)
    throw std::invalid_argument("transpose_cl: want rank 3, got " + shape_str(a.shape()));
  const std::size_t B = a.dim(0), C = a.dim(1), L = a.dim(2);
  Tensor<T> out = Tensor<T>::zeros({B, L, C});
  for (std::size_t b = 0; b < B; ++b)
    for (std::size_t c = 0; c < C; ++c)
      for (std::size_t l = 0; l < L; ++l) out.at(b, l, c) = a.at(b, c, l);
  if (detail::want_grad(tape, a)) {
    out.set_requires_grad(true);
    auto ai = a.impl(), oi = out.impl();
    tape->record([ai, oi, B, C, L]() {
      if (ai->g.size() != ai->v.size()) ai->g.assign(ai->v.size(), T(0));
      for (std::size_t b = 0; b < B; ++b)
        for (std::size_t c = 0; c < C; ++c)
          for (std::size_t l = 0; l < L; ++l)
            ai->g[(b * C + c) * L + l] += oi->g[(b * L + l) * C + c];
    });
    out.ensure_grad();
  }
  return out;
}

}  // namespace mrt
