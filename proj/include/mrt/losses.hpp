#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <memory>
#include <stdexcept>
#include <vector>

#include "mrt/rng.hpp"
#include "mrt/spatial_sort.hpp"
#include "mrt/tensor.hpp"

namespace mrt {

// ---------------------------------------------------------------------------
// Exact nearest-neighbor backends. The brute backend is the oracle; the tree
// backend must return identical (distance, index) pairs, ties to the lowest
// index.
// ---------------------------------------------------------------------------

struct NNHit {
  double distance = 0;
  std::size_t index = 0;
};

class BruteNN {
 public:
  explicit BruteNN(std::vector<Point3> targets) : targets_(std::move(targets)) {
    if (targets_.empty()) throw std::invalid_argument("nn: empty target set");
  }

  NNHit query(const Point3& q) const {
    NNHit best{std::numeric_limits<double>::infinity(), 0};
    for (std::size_t i = 0; i < targets_.size(); ++i) {
      const double d2 = dist2(q, targets_[i]);
      if (d2 < best.distance) {
        best.distance = d2;
        best.index = i;
      }
    }
    best.distance = std::sqrt(best.distance);
    return best;
  }

  static double dist2(const Point3& a, const Point3& b) {
    const double dx = a[0] - b[0], dy = a[1] - b[1], dz = a[2] - b[2];
    return dx * dx + dy * dy + dz * dz;
  }

 private:
  std::vector<Point3> targets_;
};

// Static median-split kd-tree over the target set. Exact search: a subtree is
// pruned only when its splitting plane is strictly farther than the current
// best, so equal-distance candidates with lower indices are still found.
class KdTreeNN {
 public:
  explicit KdTreeNN(std::vector<Point3> targets) : pts_(std::move(targets)) {
    if (pts_.empty()) throw std::invalid_argument("nn: empty target set");
    idx_.resize(pts_.size());
    for (std::size_t i = 0; i < idx_.size(); ++i) idx_[i] = i;
    nodes_.reserve(2 * pts_.size());
    root_ = build(0, pts_.size(), 0);
  }

  NNHit query(const Point3& q) const {
    NNHit best{std::numeric_limits<double>::infinity(), std::size_t(-1)};
    search(root_, q, best);
    best.distance = std::sqrt(best.distance);
    return best;
  }

 private:
  struct Node {
    int left = -1, right = -1;
    int axis = 0;
    double split = 0;
    std::size_t begin = 0, end = 0;  // leaf payload range in idx_
    bool leaf = false;
  };

  static constexpr std::size_t kLeafSize = 8;

  int build(std::size_t begin, std::size_t end, int depth) {
    Node n;
    if (end - begin <= kLeafSize) {
      n.leaf = true;
      n.begin = begin;
      n.end = end;
      // deterministic tie handling: keep leaf candidates in index order
      std::sort(idx_.begin() + begin, idx_.begin() + end);
      nodes_.push_back(n);
      return static_cast<int>(nodes_.size() - 1);
    }
    n.axis = depth % 3;
    const std::size_t mid = begin + (end - begin) / 2;
    std::nth_element(idx_.begin() + begin, idx_.begin() + mid, idx_.begin() + end,
                     [&](std::size_t a, std::size_t b) {
                       if (pts_[a][n.axis] != pts_[b][n.axis])
                         return pts_[a][n.axis] < pts_[b][n.axis];
                       return a < b;
                     });
    n.split = pts_[idx_[mid]][n.axis];
    const int self = static_cast<int>(nodes_.size());
    nodes_.push_back(n);
    const int l = build(begin, mid, depth + 1);
    const int r = build(mid, end, depth + 1);
    nodes_[self].left = l;
    nodes_[self].right = r;
    return self;
  }

  void search(int ni, const Point3& q, NNHit& best) const {
    const Node& n = nodes_[ni];
    if (n.leaf) {
      for (std::size_t i = n.begin; i < n.end; ++i) {
        const std::size_t pi = idx_[i];
        const double d2 = BruteNN::dist2(q, pts_[pi]);
        if (d2 < best.distance || (d2 == best.distance && pi < best.index)) {
          best.distance = d2;
          best.index = pi;
        }
      }
      return;
    }
    const double delta = q[n.axis] - n.split;
    const int near = delta < 0 ? n.left : n.right;
    const int far = delta < 0 ? n.right : n.left;
    search(near, q, best);
    if (delta * delta <= best.distance) search(far, q, best);
  }

  std::vector<Point3> pts_;
  std::vector<std::size_t> idx_;
  std::vector<Node> nodes_;
  int root_ = -1;
};

enum class NNKind { brute, tree };

// (distance, index) of the exact nearest target for every query
inline std::vector<NNHit> nn_distances(const std::vector<Point3>& queries,
                                       const std::vector<Point3>& targets,
                                       NNKind kind = NNKind::tree) {
  std::vector<NNHit> hits;
  hits.reserve(queries.size());
  if (kind == NNKind::brute) {
    BruteNN nn(targets);
    for (const auto& q : queries) hits.push_back(nn.query(q));
  } else {
    KdTreeNN nn(targets);
    for (const auto& q : queries) hits.push_back(nn.query(q));
  }
  return hits;
}

// ---------------------------------------------------------------------------
// Chamfer distance (plain, non-differentiable path for metrics)
// ---------------------------------------------------------------------------

namespace detail {

// Summing in sorted order makes the value independent of point order, so
// Chamfer is permutation-invariant bit-for-bit, not just up to rounding.
inline double ordered_sum(std::vector<double> xs) {
  std::sort(xs.begin(), xs.end());
  double acc = 0;
  for (double v : xs) acc += v;
  return acc;
}

}  // namespace detail

// mean distance from each point of x to its nearest in y
inline double directional_error(const std::vector<Point3>& x, const std::vector<Point3>& y,
                                NNKind kind = NNKind::tree) {
  if (x.empty() || y.empty()) throw std::invalid_argument("directional_error: empty point set");
  const auto hits = nn_distances(x, y, kind);
  std::vector<double> ds(hits.size());
  for (std::size_t i = 0; i < hits.size(); ++i) ds[i] = hits[i].distance;
  return detail::ordered_sum(std::move(ds)) / static_cast<double>(x.size());
}

inline double chamfer_points(const std::vector<Point3>& x, const std::vector<Point3>& y,
                             NNKind kind = NNKind::tree) {
  return directional_error(x, y, kind) + directional_error(y, x, kind);
}

// ---------------------------------------------------------------------------
// Chamfer distance as a tape op over [N,3] / [B,N,3] point tensors.
// Gradient flows only through the matched pairs; zero-distance pairs
// contribute zero gradient (the subgradient choice at coincident points).
// ---------------------------------------------------------------------------

namespace detail {

template <typename T>
std::vector<Point3> tensor_points(const Tensor<T>& t, std::size_t batch) {
  const std::size_t n = t.rank() == 3 ? t.dim(1) : t.dim(0);
  std::vector<Point3> pts(n);
  const std::size_t base = t.rank() == 3 ? batch * n * 3 : 0;
  for (std::size_t i = 0; i < n; ++i)
    pts[i] = {static_cast<double>(t.at(base + i * 3)),
              static_cast<double>(t.at(base + i * 3 + 1)),
              static_cast<double>(t.at(base + i * 3 + 2))};
  return pts;
}

}  // namespace detail

// x: [Nx,3] or [B,Nx,3]; y likewise (same batch count). Mean over the batch of
// Ch(x_b, y_b) with true (not squared) Euclidean distances.
template <typename T>
Tensor<T> chamfer(Tape<T>* tape, const Tensor<T>& x, const Tensor<T>& y,
                  NNKind kind = NNKind::tree) {
  const bool batched = x.rank() == 3;
  if (batched != (y.rank() == 3) || x.rank() < 2 || x.shape().back() != 3 ||
      y.shape().back() != 3)
    throw std::invalid_argument("chamfer: want [N,3] or [B,N,3] pairs, got " +
                                shape_str(x.shape()) + " vs " + shape_str(y.shape()));
  const std::size_t B = batched ? x.dim(0) : 1;
  if (batched && y.dim(0) != B)
    throw std::invalid_argument("chamfer: batch mismatch " + shape_str(x.shape()) + " vs " +
                                shape_str(y.shape()));
  const std::size_t Nx = batched ? x.dim(1) : x.dim(0);
  const std::size_t Ny = batched ? y.dim(1) : y.dim(0);
  if (Nx == 0 || Ny == 0) throw std::invalid_argument("chamfer: empty point set");

  auto match_xy = std::make_shared<std::vector<std::size_t>>(B * Nx);
  auto match_yx = std::make_shared<std::vector<std::size_t>>(B * Ny);
  double total = 0;
  for (std::size_t b = 0; b < B; ++b) {
    const auto px = detail::tensor_points(x, b);
    const auto py = detail::tensor_points(y, b);
    const auto hx = nn_distances(px, py, kind);
    const auto hy = nn_distances(py, px, kind);
    std::vector<double> dxy(Nx), dyx(Ny);
    for (std::size_t i = 0; i < Nx; ++i) {
      dxy[i] = hx[i].distance;
      (*match_xy)[b * Nx + i] = hx[i].index;
    }
    for (std::size_t j = 0; j < Ny; ++j) {
      dyx[j] = hy[j].distance;
      (*match_yx)[b * Ny + j] = hy[j].index;
    }
    total += detail::ordered_sum(std::move(dxy)) / static_cast<double>(Nx) +
             detail::ordered_sum(std::move(dyx)) / static_cast<double>(Ny);
  }
  Tensor<T> out = Tensor<T>::scalar(static_cast<T>(total / static_cast<double>(B)));

  if (tape != nullptr && (x.requires_grad() || y.requires_grad())) {
    out.set_requires_grad(true);
    auto xi = x.impl(), yi = y.impl(), oi = out.impl();
    const bool gx = x.requires_grad(), gy = y.requires_grad();
    tape->record([xi, yi, oi, match_xy, match_yx, gx, gy, B, Nx, Ny]() {
      if (gx && xi->g.size() != xi->v.size()) xi->g.assign(xi->v.size(), T(0));
      if (gy && yi->g.size() != yi->v.size()) yi->g.assign(yi->v.size(), T(0));
      const double go = static_cast<double>(oi->g[0]) / static_cast<double>(B);
      for (std::size_t b = 0; b < B; ++b) {
        const std::size_t xb = b * Nx * 3, yb = b * Ny * 3;
        // x -> y direction
        for (std::size_t i = 0; i < Nx; ++i) {
          const std::size_t j = (*match_xy)[b * Nx + i];
          double d[3];
          double dist = 0;
          for (int a = 0; a < 3; ++a) {
            d[a] = static_cast<double>(xi->v[xb + i * 3 + a]) -
                   static_cast<double>(yi->v[yb + j * 3 + a]);
            dist += d[a] * d[a];
          }
          dist = std::sqrt(dist);
          if (dist <= 0) continue;
          const double c = go / (static_cast<double>(Nx) * dist);
          for (int a = 0; a < 3; ++a) {
            if (gx) xi->g[xb + i * 3 + a] += static_cast<T>(c * d[a]);
            if (gy) yi->g[yb + j * 3 + a] -= static_cast<T>(c * d[a]);
          }
        }
        // y -> x direction
        for (std::size_t j = 0; j < Ny; ++j) {
          const std::size_t i = (*match_yx)[b * Ny + j];
          double d[3];
          double dist = 0;
          for (int a = 0; a < 3; ++a) {
            d[a] = static_cast<double>(yi->v[yb + j * 3 + a]) -
                   static_cast<double>(xi->v[xb + i * 3 + a]);
            dist += d[a] * d[a];
          }
          dist = std::sqrt(dist);
          if (dist <= 0) continue;
          const double c = go / (static_cast<double>(Ny) * dist);
          for (int a = 0; a < 3; ++a) {
            if (gy) yi->g[yb + j * 3 + a] += static_cast<T>(c * d[a]);
            if (gx) xi->g[xb + i * 3 + a] -= static_cast<T>(c * d[a]);
          }
        }
      }
    });
    out.ensure_grad();
  }
  return out;
}

// ---------------------------------------------------------------------------
// MR-VAE latent regularizer: || cov(z + delta) - I ||_F + || mean(z + delta) ||_2
// with delta ~ N(0, c I) drawn per element from the given seed. Covariance
// uses divisor B. The second term is the Euclidean norm of the batch mean;
// sum-of-components is available as a switch.
// ---------------------------------------------------------------------------

struct VAELossConfig {
  double lambda = 0.1;
  double delta_scale = 0.01;  // c in N(0, cI); stddev is sqrt(c)
  int latent_dim = 512;
  bool mean_term_sum_of_components = false;
};

template <typename T>
Tensor<T> vae_reg(Tape<T>* tape, const Tensor<T>& z, const VAELossConfig& cfg,
                  std::uint64_t seed) {
  if (z.rank() != 2) throw std::invalid_argument("vae_reg: want [B,D], got " + shape_str(z.shape()));
  const std::size_t B = z.dim(0), D = z.dim(1);
  if (B < 2) throw std::invalid_argument("vae_reg: batch of " + std::to_string(B) +
                                         " has no sample covariance; need B >= 2");

  // w = z + delta
  auto w = std::make_shared<std::vector<double>>(B * D);
  {
    Rng rng(seed);
    const double sd = std::sqrt(std::max(0.0, cfg.delta_scale));
    for (std::size_t i = 0; i < B * D; ++i)
      (*w)[i] = static_cast<double>(z.at(i)) + (sd > 0 ? rng.normal(0.0, sd) : 0.0);
  }

  auto mu = std::make_shared<std::vector<double>>(D, 0.0);
  for (std::size_t b = 0; b < B; ++b)
    for (std::size_t d = 0; d < D; ++d) (*mu)[d] += (*w)[b * D + d];
  for (std::size_t d = 0; d < D; ++d) (*mu)[d] /= static_cast<double>(B);

  auto centered = std::make_shared<std::vector<double>>(B * D);
  for (std::size_t b = 0; b < B; ++b)
    for (std::size_t d = 0; d < D; ++d) (*centered)[b * D + d] = (*w)[b * D + d] - (*mu)[d];

  // cov = centered^T centered / B; accumulate ||cov - I||_F^2 on the fly
  auto cov = std::make_shared<std::vector<double>>(D * D, 0.0);
  for (std::size_t b = 0; b < B; ++b)
    for (std::size_t d = 0; d < D; ++d) {
      const double cd = (*centered)[b * D + d];
      if (cd == 0.0) continue;
      double* row = cov->data() + d * D;
      const double* cb = centered->data() + b * D;
      for (std::size_t e = 0; e < D; ++e) row[e] += cd * cb[e];
    }
  double fro2 = 0;
  for (std::size_t d = 0; d < D; ++d)
    for (std::size_t e = 0; e < D; ++e) {
      double& c = (*cov)[d * D + e];
      c /= static_cast<double>(B);
      const double diff = c - (d == e ? 1.0 : 0.0);
      fro2 += diff * diff;
    }
  const double fro = std::sqrt(fro2);

  double mean_term = 0;
  if (cfg.mean_term_sum_of_components) {
    for (std::size_t d = 0; d < D; ++d) mean_term += (*mu)[d];
  } else {
    double m2 = 0;
    for (std::size_t d = 0; d < D; ++d) m2 += (*mu)[d] * (*mu)[d];
    mean_term = std::sqrt(m2);
  }

  Tensor<T> out = Tensor<T>::scalar(static_cast<T>(fro + mean_term));

  if (detail::want_grad(tape, z)) {
    out.set_requires_grad(true);
    auto zi = z.impl(), oi = out.impl();
    const bool sum_components = cfg.mean_term_sum_of_components;
    tape->record([zi, oi, centered, cov, mu, fro, mean_term, sum_components, B, D]() {
      if (zi->g.size() != zi->v.size()) zi->g.assign(zi->v.size(), T(0));
      const double go = static_cast<double>(oi->g[0]);
      // d||cov - I||_F / dw = (2/B) * centered * G, G = (cov - I)/fro
      // d||mu||_2 / dw_{bd} = mu_d / (B * ||mu||)
      const double inv_b = 1.0 / static_cast<double>(B);
      for (std::size_t b = 0; b < B; ++b)
        for (std::size_t d = 0; d < D; ++d) {
          double acc = 0;
          if (fro > 0) {
            const double* crow = cov->data() + d * D;
            const double* cb = centered->data() + b * D;
            for (std::size_t e = 0; e < D; ++e) {
              const double g_de = (crow[e] - (d == e ? 1.0 : 0.0)) / fro;
              acc += g_de * cb[e];
            }
            acc *= 2.0 * inv_b;
          }
          if (sum_components) {
            acc += inv_b;
          } else if (mean_term > 0) {
            acc += (*mu)[d] / (static_cast<double>(B) * mean_term);
          }
          zi->g[b * D + d] += static_cast<T>(go * acc);
        }
    });
    out.ensure_grad();
  }
  return out;
}

// Total MR-VAE objective; both components reported separately by callers.
template <typename T>
struct VAELossParts {
  Tensor<T> total;
  double chamfer_value = 0;
  double reg_value = 0;
};

template <typename T>
VAELossParts<T> vae_total_loss(Tape<T>* tape, const Tensor<T>& target_points,
                               const Tensor<T>& reconstruction, const Tensor<T>& z_batch,
                               const VAELossConfig& cfg, std::uint64_t noise_seed,
                               NNKind kind = NNKind::tree) {
  VAELossParts<T> parts;
  Tensor<T> ch = chamfer(tape, reconstruction, target_points, kind);
  parts.chamfer_value = static_cast<double>(ch.item());
  if (cfg.lambda == 0.0) {
    parts.reg_value = 0.0;
    parts.total = ch;
    return parts;
  }
  Tensor<T> reg = vae_reg(tape, z_batch, cfg, noise_seed);
  parts.reg_value = static_cast<double>(reg.item());
  parts.total = add(tape, ch, scale(tape, reg, static_cast<T>(cfg.lambda)));
  return parts;
}

}  // namespace mrt
