#pragma once

#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "mrt/rng.hpp"
#include "mrt/tensor.hpp"

namespace mrt {

enum class Mode { train, eval };

// ---------------------------------------------------------------------------
// 1D convolutions. Only the two shapes the architecture uses exist: kernel 2 /
// stride 2 (halves L) and kernel 1 / stride 1 (pointwise). Transposed k2s2
// doubles L and is the exact channel-transposed adjoint of conv k2s2.
// ---------------------------------------------------------------------------

template <typename T>
struct Conv1d {
  Tensor<T> w;  // [C_out, C_in, kernel]
  Tensor<T> b;  // [C_out]
  int kernel = 2;
  int stride = 2;
  bool transposed = false;

  Conv1d() = default;
  Conv1d(std::size_t c_out, std::size_t c_in, int kernel_, bool transposed_, Rng& rng)
      : kernel(kernel_), stride(kernel_), transposed(transposed_) {
    w = Tensor<T>::zeros({c_out, c_in, static_cast<std::size_t>(kernel_)}, true);
    b = Tensor<T>::zeros({c_out}, true);
    const double bound = 1.0 / std::sqrt(static_cast<double>(c_in * kernel_));
    for (std::size_t i = 0; i < w.numel(); ++i)
      w.at(i) = static_cast<T>(rng.uniform(-bound, bound));
  }

  std::size_t c_out() const { return w.dim(0); }
  std::size_t c_in() const { return w.dim(1); }

  Tensor<T> forward(Tape<T>* tape, const Tensor<T>& x) const {
    return transposed ? tconv_forward(tape, x) : conv_forward(tape, x);
  }

 private:
  Tensor<T> conv_forward(Tape<T>* tape, const Tensor<T>& x) const {
    if (x.rank() != 3 || x.dim(1) != c_in())
      throw std::invalid_argument("conv1d: want [B," + std::to_string(c_in()) + ",L], got " +
                                  shape_str(x.shape()));
    const std::size_t B = x.dim(0), Ci = c_in(), Co = c_out(), L = x.dim(2);
    const std::size_t K = static_cast<std::size_t>(kernel);
    if (K == 2 && L % 2 != 0)
      throw std::invalid_argument("conv1d k2s2: odd length " + std::to_string(L));
    const std::size_t Lo = K == 2 ? L / 2 : L;
    Tensor<T> out = Tensor<T>::zeros({B, Co, Lo});
    for (std::size_t bi = 0; bi < B; ++bi)
      for (std::size_t co = 0; co < Co; ++co) {
        T* orow = &out.at(bi, co, 0);
        const T bias = b.at(co);
        for (std::size_t t = 0; t < Lo; ++t) orow[t] = bias;
        for (std::size_t ci = 0; ci < Ci; ++ci) {
          const T* xrow = &x.at(bi, ci, 0);
          if (K == 2) {
            const T w0 = w.at(co, ci, 0), w1 = w.at(co, ci, 1);
            for (std::size_t t = 0; t < Lo; ++t) orow[t] += w0 * xrow[2 * t] + w1 * xrow[2 * t + 1];
          } else {
            const T w0 = w.at(co, ci, 0);
            for (std::size_t t = 0; t < Lo; ++t) orow[t] += w0 * xrow[t];
          }
        }
      }
    MRT_DEBUG_CHECK_FINITE(out, "conv1d");
    if (tape != nullptr && (x.requires_grad() || w.requires_grad() || b.requires_grad())) {
      out.set_requires_grad(true);
      auto xi = x.impl(), wi = w.impl(), bi_ = b.impl(), oi = out.impl();
      const bool gx = x.requires_grad(), gw = w.requires_grad(), gb = b.requires_grad();
      tape->record([xi, wi, bi_, oi, gx, gw, gb, B, Ci, Co, L, Lo, K]() {
        if (gx && xi->g.size() != xi->v.size()) xi->g.assign(xi->v.size(), T(0));
        if (gw && wi->g.size() != wi->v.size()) wi->g.assign(wi->v.size(), T(0));
        if (gb && bi_->g.size() != bi_->v.size()) bi_->g.assign(bi_->v.size(), T(0));
        for (std::size_t bb = 0; bb < B; ++bb)
          for (std::size_t co = 0; co < Co; ++co) {
            const T* go = &oi->g[(bb * Co + co) * Lo];
            if (gb) {
              T acc = 0;
              for (std::size_t t = 0; t < Lo; ++t) acc += go[t];
              bi_->g[co] += acc;
            }
            for (std::size_t ci = 0; ci < Ci; ++ci) {
              const T* xrow = &xi->v[(bb * Ci + ci) * L];
              T* xg = gx ? &xi->g[(bb * Ci + ci) * L] : nullptr;
              if (K == 2) {
                const T w0 = wi->v[(co * Ci + ci) * 2];
                const T w1 = wi->v[(co * Ci + ci) * 2 + 1];
                T dw0 = 0, dw1 = 0;
                for (std::size_t t = 0; t < Lo; ++t) {
                  const T g = go[t];
                  if (gx) {
                    xg[2 * t] += w0 * g;
                    xg[2 * t + 1] += w1 * g;
                  }
                  dw0 += g * xrow[2 * t];
                  dw1 += g * xrow[2 * t + 1];
                }
                if (gw) {
                  wi->g[(co * Ci + ci) * 2] += dw0;
                  wi->g[(co * Ci + ci) * 2 + 1] += dw1;
                }
              } else {
                const T w0 = wi->v[co * Ci + ci];
                T dw0 = 0;
                for (std::size_t t = 0; t < Lo; ++t) {
                  const T g = go[t];
                  if (gx) xg[t] += w0 * g;
                  dw0 += g * xrow[t];
                }
                if (gw) wi->g[co * Ci + ci] += dw0;
              }
            }
          }
      });
      out.ensure_grad();
    }
    return out;
  }

  // out[b,co,2t+j] = bias[co] + sum_ci w[co,ci,j] * x[b,ci,t]
  Tensor<T> tconv_forward(Tape<T>* tape, const Tensor<T>& x) const {
    if (x.rank() != 3 || x.dim(1) != c_in())
      throw std::invalid_argument("tconv1d: want [B," + std::to_string(c_in()) + ",L], got " +
                                  shape_str(x.shape()));
    if (kernel != 2)
      throw std::invalid_argument("tconv1d: only kernel 2 / stride 2 is supported");
    const std::size_t B = x.dim(0), Ci = c_in(), Co = c_out(), L = x.dim(2), Lo = 2 * L;
    Tensor<T> out = Tensor<T>::zeros({B, Co, Lo});
    for (std::size_t bi = 0; bi < B; ++bi)
      for (std::size_t co = 0; co < Co; ++co) {
        T* orow = &out.at(bi, co, 0);
        const T bias = b.at(co);
        for (std::size_t t = 0; t < Lo; ++t) orow[t] = bias;
        for (std::size_t ci = 0; ci < Ci; ++ci) {
          const T* xrow = &x.at(bi, ci, 0);
          const T w0 = w.at(co, ci, 0), w1 = w.at(co, ci, 1);
          for (std::size_t t = 0; t < L; ++t) {
            orow[2 * t] += w0 * xrow[t];
            orow[2 * t + 1] += w1 * xrow[t];
          }
        }
      }
    MRT_DEBUG_CHECK_FINITE(out, "tconv1d");
    if (tape != nullptr && (x.requires_grad() || w.requires_grad() || b.requires_grad())) {
      out.set_requires_grad(true);
      auto xi = x.impl(), wi = w.impl(), bi_ = b.impl(), oi = out.impl();
      const bool gx = x.requires_grad(), gw = w.requires_grad(), gb = b.requires_grad();
      tape->record([xi, wi, bi_, oi, gx, gw, gb, B, Ci, Co, L, Lo]() {
        if (gx && xi->g.size() != xi->v.size()) xi->g.assign(xi->v.size(), T(0));
        if (gw && wi->g.size() != wi->v.size()) wi->g.assign(wi->v.size(), T(0));
        if (gb && bi_->g.size() != bi_->v.size()) bi_->g.assign(bi_->v.size(), T(0));
        for (std::size_t bb = 0; bb < B; ++bb)
          for (std::size_t co = 0; co < Co; ++co) {
            const T* go = &oi->g[(bb * Co + co) * Lo];
            if (gb) {
              T acc = 0;
              for (std::size_t t = 0; t < Lo; ++t) acc += go[t];
              bi_->g[co] += acc;
            }
            for (std::size_t ci = 0; ci < Ci; ++ci) {
              const T* xrow = &xi->v[(bb * Ci + ci) * L];
              T* xg = gx ? &xi->g[(bb * Ci + ci) * L] : nullptr;
              const T w0 = wi->v[(co * Ci + ci) * 2];
              const T w1 = wi->v[(co * Ci + ci) * 2 + 1];
              T dw0 = 0, dw1 = 0;
              for (std::size_t t = 0; t < L; ++t) {
                const T g0 = go[2 * t], g1 = go[2 * t + 1];
                if (gx) xg[t] += w0 * g0 + w1 * g1;
                dw0 += g0 * xrow[t];
                dw1 += g1 * xrow[t];
              }
              if (gw) {
                wi->g[(co * Ci + ci) * 2] += dw0;
                wi->g[(co * Ci + ci) * 2 + 1] += dw1;
              }
            }
          }
      });
      out.ensure_grad();
    }
    return out;
  }
};

// Channel-transposed copy of a conv weight tensor; tconv with these weights is
// the exact adjoint of conv with the originals.
template <typename T>
Tensor<T> adjoint_weights(const Tensor<T>& w) {
  const std::size_t Co = w.dim(0), Ci = w.dim(1), K = w.dim(2);
  Tensor<T> out = Tensor<T>::zeros({Ci, Co, K});
  for (std::size_t a = 0; a < Co; ++a)
    for (std::size_t b = 0; b < Ci; ++b)
      for (std::size_t k = 0; k < K; ++k) out.at(b, a, k) = w.at(a, b, k);
  return out;
}

// ---------------------------------------------------------------------------
// Pooling / upsampling
// ---------------------------------------------------------------------------

template <typename T>
Tensor<T> avg_pool1d(Tape<T>* tape, const Tensor<T>& x, std::size_t k) {
  if (x.rank() != 3) throw std::invalid_argument("avg_pool1d: want rank 3");
  const std::size_t B = x.dim(0), C = x.dim(1), L = x.dim(2);
  if (k == 0 || L % k != 0)
    throw std::invalid_argument("avg_pool1d: k=" + std::to_string(k) +
                                " does not divide L=" + std::to_string(L));
  const std::size_t Lo = L / k;
  Tensor<T> out = Tensor<T>::zeros({B, C, Lo});
  const T inv = T(1) / static_cast<T>(k);
  const bool pow2 = (k & (k - 1)) == 0;
  std::vector<T> buf(k);
  for (std::size_t b = 0; b < B; ++b)
    for (std::size_t c = 0; c < C; ++c) {
      const T* xr = &x.at(b, c, 0);
      T* orow = &out.at(b, c, 0);
      for (std::size_t t = 0; t < Lo; ++t) {
        T acc;
        if (pow2) {
          // pairwise sum: exact for constant windows at power-of-two k, which
          // makes avg_pool(nn_upsample(x,k),k) the identity bit-for-bit
          for (std::size_t j = 0; j < k; ++j) buf[j] = xr[t * k + j];
          for (std::size_t w = k; w > 1; w /= 2)
            for (std::size_t j = 0; j < w / 2; ++j) buf[j] = buf[2 * j] + buf[2 * j + 1];
          acc = buf[0];
        } else {
          acc = 0;
          for (std::size_t j = 0; j < k; ++j) acc += xr[t * k + j];
        }
        orow[t] = acc * inv;
      }
    }
  if (detail::want_grad(tape, x)) {
    out.set_requires_grad(true);
    auto xi = x.impl(), oi = out.impl();
    tape->record([xi, oi, B, C, L, Lo, k, inv]() {
      if (xi->g.size() != xi->v.size()) xi->g.assign(xi->v.size(), T(0));
      for (std::size_t b = 0; b < B; ++b)
        for (std::size_t c = 0; c < C; ++c) {
          T* xg = &xi->g[(b * C + c) * L];
          const T* og = &oi->g[(b * C + c) * Lo];
          for (std::size_t t = 0; t < Lo; ++t)
            for (std::size_t j = 0; j < k; ++j) xg[t * k + j] += og[t] * inv;
        }
    });
    out.ensure_grad();
  }
  return out;
}

template <typename T>
Tensor<T> nn_upsample(Tape<T>* tape, const Tensor<T>& x, std::size_t k) {
  if (x.rank() != 3) throw std::invalid_argument("nn_upsample: want rank 3");
  if (k < 1) throw std::invalid_argument("nn_upsample: k must be >= 1");
  const std::size_t B = x.dim(0), C = x.dim(1), L = x.dim(2), Lo = L * k;
  Tensor<T> out = Tensor<T>::zeros({B, C, Lo});
  for (std::size_t b = 0; b < B; ++b)
    for (std::size_t c = 0; c < C; ++c) {
      const T* xr = &x.at(b, c, 0);
      T* orow = &out.at(b, c, 0);
      for (std::size_t t = 0; t < L; ++t)
        for (std::size_t j = 0; j < k; ++j) orow[t * k + j] = xr[t];
    }
  if (detail::want_grad(tape, x)) {
    out.set_requires_grad(true);
    auto xi = x.impl(), oi = out.impl();
    tape->record([xi, oi, B, C, L, Lo, k]() {
      if (xi->g.size() != xi->v.size()) xi->g.assign(xi->v.size(), T(0));
      for (std::size_t b = 0; b < B; ++b)
        for (std::size_t c = 0; c < C; ++c) {
          T* xg = &xi->g[(b * C + c) * L];
          const T* og = &oi->g[(b * C + c) * Lo];
          for (std::size_t t = 0; t < L; ++t) {
            T acc = 0;
            for (std::size_t j = 0; j < k; ++j) acc += og[t * k + j];
            xg[t] += acc;
          }
        }
    });
    out.ensure_grad();
  }
  return out;
}

// ---------------------------------------------------------------------------
// Batch normalization over (B, L) per channel
// ---------------------------------------------------------------------------

template <typename T>
struct BatchNorm1d {
  Tensor<T> gamma;  // [C]
  Tensor<T> beta;   // [C]
  std::vector<double> running_mean;
  std::vector<double> running_var;
  double momentum = 0.1;
  double epsilon = 1e-5;

  BatchNorm1d() = default;
  explicit BatchNorm1d(std::size_t c) {
    gamma = Tensor<T>::zeros({c}, true);
    beta = Tensor<T>::zeros({c}, true);
    for (std::size_t i = 0; i < c; ++i) gamma.at(i) = T(1);
    running_mean.assign(c, 0.0);
    running_var.assign(c, 1.0);
  }

  std::size_t channels() const { return gamma.numel(); }

  Tensor<T> forward(Tape<T>* tape, const Tensor<T>& x, Mode mode) {
    if (x.rank() != 3 || x.dim(1) != channels())
      throw std::invalid_argument("batch_norm: want [B," + std::to_string(channels()) +
                                  ",L], got " + shape_str(x.shape()));
    const std::size_t B = x.dim(0), C = x.dim(1), L = x.dim(2);
    const std::size_t m = B * L;
    if (mode == Mode::train && m < 2)
      throw std::invalid_argument("batch_norm: train mode needs B*L >= 2");

    Tensor<T> out = Tensor<T>::zeros({B, C, L});
    std::vector<T> mu(C), inv_std(C);
    // xhat is needed by backward; stored per-call
    auto xhat = std::make_shared<std::vector<T>>(x.numel());

    for (std::size_t c = 0; c < C; ++c) {
      double mean_c, var_c;
      if (mode == Mode::train) {
        double s = 0;
        for (std::size_t b = 0; b < B; ++b) {
          const T* xr = &x.at(b, c, 0);
          for (std::size_t t = 0; t < L; ++t) s += static_cast<double>(xr[t]);
        }
        mean_c = s / static_cast<double>(m);
        double v = 0;
        for (std::size_t b = 0; b < B; ++b) {
          const T* xr = &x.at(b, c, 0);
          for (std::size_t t = 0; t < L; ++t) {
            const double d = static_cast<double>(xr[t]) - mean_c;
            v += d * d;
          }
        }
        var_c = v / static_cast<double>(m);  // biased, matches normalization
        running_mean[c] = (1.0 - momentum) * running_mean[c] + momentum * mean_c;
        running_var[c] = (1.0 - momentum) * running_var[c] + momentum * var_c;
      } else {
        mean_c = running_mean[c];
        var_c = running_var[c];
      }
      mu[c] = static_cast<T>(mean_c);
      inv_std[c] = static_cast<T>(1.0 / std::sqrt(var_c + epsilon));
    }

    for (std::size_t b = 0; b < B; ++b)
      for (std::size_t c = 0; c < C; ++c) {
        const T* xr = &x.at(b, c, 0);
        T* orow = &out.at(b, c, 0);
        T* xh = &(*xhat)[(b * C + c) * L];
        const T g = gamma.at(c), bt = beta.at(c), mc = mu[c], is = inv_std[c];
        for (std::size_t t = 0; t < L; ++t) {
          xh[t] = (xr[t] - mc) * is;
          orow[t] = g * xh[t] + bt;
        }
      }
    MRT_DEBUG_CHECK_FINITE(out, "batch_norm");

    if (tape != nullptr &&
        (x.requires_grad() || gamma.requires_grad() || beta.requires_grad())) {
      out.set_requires_grad(true);
      auto xi = x.impl(), gi = gamma.impl(), bi = beta.impl(), oi = out.impl();
      const bool gx = x.requires_grad(), gg = gamma.requires_grad(), gb = beta.requires_grad();
      const bool train = mode == Mode::train;
      tape->record([xi, gi, bi, oi, xhat, inv_std, gx, gg, gb, train, B, C, L, m]() {
        if (gx && xi->g.size() != xi->v.size()) xi->g.assign(xi->v.size(), T(0));
        if (gg && gi->g.size() != gi->v.size()) gi->g.assign(gi->v.size(), T(0));
        if (gb && bi->g.size() != bi->v.size()) bi->g.assign(bi->v.size(), T(0));
        for (std::size_t c = 0; c < C; ++c) {
          T sum_dy = 0, sum_dy_xhat = 0;
          for (std::size_t b = 0; b < B; ++b) {
            const T* og = &oi->g[(b * C + c) * L];
            const T* xh = &(*xhat)[(b * C + c) * L];
            for (std::size_t t = 0; t < L; ++t) {
              sum_dy += og[t];
              sum_dy_xhat += og[t] * xh[t];
            }
          }
          if (gg) gi->g[c] += sum_dy_xhat;
          if (gb) bi->g[c] += sum_dy;
          if (gx) {
            const T g = gi->v[c], is = inv_std[c];
            const T inv_m = T(1) / static_cast<T>(m);
            for (std::size_t b = 0; b < B; ++b) {
              const T* og = &oi->g[(b * C + c) * L];
              const T* xh = &(*xhat)[(b * C + c) * L];
              T* xg = &xi->g[(b * C + c) * L];
              for (std::size_t t = 0; t < L; ++t) {
                if (train)
                  xg[t] += g * is * (og[t] - sum_dy * inv_m - xh[t] * sum_dy_xhat * inv_m);
                else
                  xg[t] += g * is * og[t];
              }
            }
          }
        }
      });
      out.ensure_grad();
    }
    return out;
  }
};

// ---------------------------------------------------------------------------
// Fully connected layer: [B, F_in] -> [B, F_out]
// ---------------------------------------------------------------------------

template <typename T>
struct Linear {
  Tensor<T> w;  // [F_out, F_in]
  Tensor<T> b;  // [F_out]

  Linear() = default;
  Linear(std::size_t f_out, std::size_t f_in, Rng& rng) {
    w = Tensor<T>::zeros({f_out, f_in}, true);
    b = Tensor<T>::zeros({f_out}, true);
    const double bound = 1.0 / std::sqrt(static_cast<double>(f_in));
    for (std::size_t i = 0; i < w.numel(); ++i)
      w.at(i) = static_cast<T>(rng.uniform(-bound, bound));
  }

  Tensor<T> forward(Tape<T>* tape, const Tensor<T>& x) const {
    if (x.rank() != 2 || x.dim(1) != w.dim(1))
      throw std::invalid_argument("linear: want [B," + std::to_string(w.dim(1)) + "], got " +
                                  shape_str(x.shape()));
    const std::size_t B = x.dim(0), Fi = w.dim(1), Fo = w.dim(0);
    Tensor<T> out = Tensor<T>::zeros({B, Fo});
    for (std::size_t bb = 0; bb < B; ++bb)
      for (std::size_t o = 0; o < Fo; ++o) {
        T acc = b.at(o);
        const T* wr = &w.at(o, 0);
        const T* xr = &x.at(bb, 0);
        for (std::size_t i = 0; i < Fi; ++i) acc += wr[i] * xr[i];
        out.at(bb, o) = acc;
      }
    MRT_DEBUG_CHECK_FINITE(out, "linear");
    if (tape != nullptr && (x.requires_grad() || w.requires_grad() || b.requires_grad())) {
      out.set_requires_grad(true);
      auto xi = x.impl(), wi = w.impl(), bi = b.impl(), oi = out.impl();
      const bool gx = x.requires_grad(), gw = w.requires_grad(), gb = b.requires_grad();
      tape->record([xi, wi, bi, oi, gx, gw, gb, B, Fi, Fo]() {
        if (gx && xi->g.size() != xi->v.size()) xi->g.assign(xi->v.size(), T(0));
        if (gw && wi->g.size() != wi->v.size()) wi->g.assign(wi->v.size(), T(0));
        if (gb && bi->g.size() != bi->v.size()) bi->g.assign(bi->v.size(), T(0));
        for (std::size_t bb = 0; bb < B; ++bb)
          for (std::size_t o = 0; o < Fo; ++o) {
            const T g = oi->g[bb * Fo + o];
            if (g == T(0)) continue;
            if (gb) bi->g[o] += g;
            const T* xr = &xi->v[bb * Fi];
            const T* wr = &wi->v[o * Fi];
            T* wgr = gw ? &wi->g[o * Fi] : nullptr;
            T* xgr = gx ? &xi->g[bb * Fi] : nullptr;
            for (std::size_t i = 0; i < Fi; ++i) {
              if (gw) wgr[i] += g * xr[i];
              if (gx) xgr[i] += g * wr[i];
            }
          }
      });
      out.ensure_grad();
    }
    return out;
  }
};

// ---------------------------------------------------------------------------
// Softmax cross-entropy, mean over batch, max-stabilized
// ---------------------------------------------------------------------------

template <typename T>
Tensor<T> softmax_cross_entropy(Tape<T>* tape, const Tensor<T>& logits,
                                const std::vector<int>& labels) {
  if (logits.rank() != 2)
    throw std::invalid_argument("cross_entropy: want [B,K], got " + shape_str(logits.shape()));
  const std::size_t B = logits.dim(0), K = logits.dim(1);
  if (labels.size() != B)
    throw std::invalid_argument("cross_entropy: batch " + std::to_string(B) + " vs " +
                                std::to_string(labels.size()) + " labels");
  for (int l : labels)
    if (l < 0 || static_cast<std::size_t>(l) >= K)
      throw std::invalid_argument("cross_entropy: label " + std::to_string(l) +
                                  " out of range [0," + std::to_string(K) + ")");
  auto probs = std::make_shared<std::vector<T>>(B * K);
  double loss = 0;
  for (std::size_t b = 0; b < B; ++b) {
    const T* row = &logits.at(b, 0);
    T mx = row[0];
    for (std::size_t k = 1; k < K; ++k) mx = std::max(mx, row[k]);
    double z = 0;
    for (std::size_t k = 0; k < K; ++k) z += std::exp(static_cast<double>(row[k] - mx));
    for (std::size_t k = 0; k < K; ++k)
      (*probs)[b * K + k] = static_cast<T>(std::exp(static_cast<double>(row[k] - mx)) / z);
    loss += -(static_cast<double>(row[labels[b]] - mx) - std::log(z));
  }
  Tensor<T> out = Tensor<T>::scalar(static_cast<T>(loss / static_cast<double>(B)));
  if (detail::want_grad(tape, logits)) {
    out.set_requires_grad(true);
    auto li = logits.impl(), oi = out.impl();
    tape->record([li, oi, probs, labels, B, K]() {
      if (li->g.size() != li->v.size()) li->g.assign(li->v.size(), T(0));
      const T g = oi->g[0] / static_cast<T>(B);
      for (std::size_t b = 0; b < B; ++b)
        for (std::size_t k = 0; k < K; ++k) {
          T p = (*probs)[b * K + k];
          if (static_cast<std::size_t>(labels[b]) == k) p -= T(1);
          li->g[b * K + k] += g * p;
        }
    });
    out.ensure_grad();
  }
  return out;
}

// ---------------------------------------------------------------------------
// Adam optimizer. Paper gives lr and beta1 only; beta2/epsilon are the
// conventional defaults and are recorded in run manifests.
// ---------------------------------------------------------------------------

template <typename T>
struct NamedParam {
  std::string name;
  Tensor<T> tensor;
};

template <typename T>
struct AdamState {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  std::int64_t step_count = 0;
  std::vector<std::vector<double>> m;  // first moments, per parameter
  std::vector<std::vector<double>> v;  // second moments

  void init(const std::vector<NamedParam<T>>& params) {
    m.clear();
    v.clear();
    for (const auto& p : params) {
      m.emplace_back(p.tensor.numel(), 0.0);
      v.emplace_back(p.tensor.numel(), 0.0);
    }
    step_count = 0;
  }

  void step(std::vector<NamedParam<T>>& params) {
    if (m.size() != params.size()) init(params);
    ++step_count;
    const double bc1 = 1.0 - std::pow(beta1, static_cast<double>(step_count));
    const double bc2 = 1.0 - std::pow(beta2, static_cast<double>(step_count));
    for (std::size_t p = 0; p < params.size(); ++p) {
      Tensor<T>& t = params[p].tensor;
      if (!t.has_grad()) continue;
      auto& mp = m[p];
      auto& vp = v[p];
      for (std::size_t i = 0; i < t.numel(); ++i) {
        const double g = static_cast<double>(t.grad()[i]);
        mp[i] = beta1 * mp[i] + (1.0 - beta1) * g;
        vp[i] = beta2 * vp[i] + (1.0 - beta2) * g * g;
        const double mhat = mp[i] / bc1;
        const double vhat = vp[i] / bc2;
        t.at(i) -= static_cast<T>(lr * mhat / (std::sqrt(vhat) + epsilon));
      }
    }
  }
};

// base_lr / 2^floor(epoch / halve_every)
inline double lr_schedule(int epoch, double base_lr, int halve_every) {
  if (halve_every < 1) throw std::invalid_argument("lr_schedule: halve_every must be >= 1");
  return base_lr / std::pow(2.0, static_cast<double>(epoch / halve_every));
}

}  // namespace mrt
