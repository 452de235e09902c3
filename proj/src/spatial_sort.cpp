#include "mrt/spatial_sort.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <stdexcept>

namespace mrt {

namespace {

struct Bounds {
  Point3 lo{std::numeric_limits<double>::infinity(), std::numeric_limits<double>::infinity(),
            std::numeric_limits<double>::infinity()};
  Point3 hi{-std::numeric_limits<double>::infinity(), -std::numeric_limits<double>::infinity(),
            -std::numeric_limits<double>::infinity()};

  void absorb(const Point3& p) {
    for (int a = 0; a < 3; ++a) {
      lo[a] = std::min(lo[a], p[a]);
      hi[a] = std::max(hi[a], p[a]);
    }
  }
};

double dot3(const Point3& a, const Point3& b) { return a[0] * b[0] + a[1] * b[1] + a[2] * b[2]; }

void require_power_of_two(const PointCloud& pc, const char* who) {
  if (!pc.power_of_two())
    throw std::invalid_argument(std::string(who) + ": point count " +
                                std::to_string(pc.size()) + " is not a power of two");
}

// Recursive equal-half splitter shared by all three tree kinds. `axis_of`
// returns the projection direction for a node at (level, node counter); the
// secondary direction is the next level's axis, so ties resolve the same way
// the child split would order them.
template <typename AxisFn>
void split_recursive(const PointCloud& pc, std::vector<std::size_t>& order, std::size_t begin,
                     std::size_t end, std::size_t level, AxisFn&& axis_of,
                     std::vector<SplitRecord>* trace) {
  if (end - begin <= 1) return;
  const Point3 dir = axis_of(level, begin, end);
  const Point3 next_dir = axis_of(level + 1, begin, end);
  if (trace) trace->push_back({begin, end, dir});
  std::sort(order.begin() + begin, order.begin() + end,
            [&](std::size_t ia, std::size_t ib) {
              const double pa = dot3(pc.points[ia], dir), pb = dot3(pc.points[ib], dir);
              if (pa != pb) return pa < pb;
              const double qa = dot3(pc.points[ia], next_dir), qb = dot3(pc.points[ib], next_dir);
              if (qa != qb) return qa < qb;
              return ia < ib;
            });
  const std::size_t mid = begin + (end - begin) / 2;
  split_recursive(pc, order, begin, mid, level + 1, axis_of, trace);
  split_recursive(pc, order, mid, end, level + 1, axis_of, trace);
}

std::array<double, 3> subset_spans(const PointCloud& pc, const std::vector<std::size_t>& order,
                                   std::size_t begin, std::size_t end) {
  Bounds b;
  for (std::size_t i = begin; i < end; ++i) b.absorb(pc.points[order[i]]);
  return {b.hi[0] - b.lo[0], b.hi[1] - b.lo[1], b.hi[2] - b.lo[2]};
}

}  // namespace

PointCloud normalize_cloud(const std::vector<Point3>& raw) {
  if (raw.empty()) throw std::invalid_argument("normalize_cloud: empty cloud");
  Bounds b;
  for (const auto& p : raw) {
    for (double c : p)
      if (!std::isfinite(c)) throw std::invalid_argument("normalize_cloud: non-finite coordinate");
    b.absorb(p);
  }
  Point3 center = {(b.lo[0] + b.hi[0]) / 2, (b.lo[1] + b.hi[1]) / 2, (b.lo[2] + b.hi[2]) / 2};
  const double extent =
      std::max({b.hi[0] - b.lo[0], b.hi[1] - b.lo[1], b.hi[2] - b.lo[2]});
  PointCloud out;
  out.points.reserve(raw.size());
  if (extent <= 0) {
    out.points.assign(raw.size(), Point3{0, 0, 0});
    return out;
  }
  const double s = 1.0 / extent;
  for (const auto& p : raw)
    out.points.push_back({(p[0] - center[0]) * s, (p[1] - center[1]) * s, (p[2] - center[2]) * s});
  return out;
}

bool is_normalized(const PointCloud& pc, double tol) {
  Bounds b;
  for (const auto& p : pc.points) b.absorb(p);
  const double extent = std::max({b.hi[0] - b.lo[0], b.hi[1] - b.lo[1], b.hi[2] - b.lo[2]});
  if (extent == 0.0) {
    for (const auto& p : pc.points)
      if (std::abs(p[0]) > tol || std::abs(p[1]) > tol || std::abs(p[2]) > tol) return false;
    return true;
  }
  for (int a = 0; a < 3; ++a)
    if (std::abs(b.lo[a] + b.hi[a]) > tol) return false;  // centered
  return std::abs(extent - 1.0) <= tol;
}

std::array<double, 3> split_axis_pdf(const std::array<double, 3>& spans) {
  const double mx = std::max({spans[0], spans[1], spans[2]});
  std::array<double, 3> p{};
  double z = 0;
  for (int i = 0; i < 3; ++i) {
    p[i] = std::exp(spans[i] - mx);
    z += p[i];
  }
  for (int i = 0; i < 3; ++i) p[i] /= z;
  return p;
}

AxisSet AxisSet::canonical() {
  return AxisSet{{Point3{1, 0, 0}, Point3{0, 1, 0}, Point3{0, 0, 1}}, true};
}

AxisSet AxisSet::random(std::size_t count, std::uint64_t seed) {
  AxisSet as;
  as.shared = true;
  Rng rng(seed);
  for (std::size_t i = 0; i < count; ++i) as.axes.push_back(rng.unit_vector());
  return as;
}

SortedCloud kd_sort(const PointCloud& pc, std::vector<SplitRecord>* trace) {
  require_power_of_two(pc, "kd_sort");
  SortedCloud sc;
  sc.cloud = pc;
  sc.tree_kind = TreeKind::kd;
  sc.order.resize(pc.size());
  for (std::size_t i = 0; i < pc.size(); ++i) sc.order[i] = i;
  static const Point3 kAxes[3] = {{1, 0, 0}, {0, 1, 0}, {0, 0, 1}};
  split_recursive(
      pc, sc.order, 0, pc.size(), 0,
      [](std::size_t level, std::size_t, std::size_t) { return kAxes[level % 3]; }, trace);
  return sc;
}

SortedCloud prob_kd_sort(const PointCloud& pc, std::uint64_t seed,
                         std::vector<SplitRecord>* trace) {
  require_power_of_two(pc, "prob_kd_sort");
  SortedCloud sc;
  sc.cloud = pc;
  sc.tree_kind = TreeKind::prob_kd;
  sc.seed = seed;
  sc.order.resize(pc.size());
  for (std::size_t i = 0; i < pc.size(); ++i) sc.order[i] = i;
  static const Point3 kAxes[3] = {{1, 0, 0}, {0, 1, 0}, {0, 0, 1}};

  // Axes are drawn per split from the softmax of the subset's spans. Each node
  // derives its generator from (seed, begin, end, level) so draws are
  // independent of traversal order; ties break on the next canonical axis.
  std::vector<std::size_t>& order = sc.order;
  const PointCloud& cloud = pc;

  std::function<void(std::size_t, std::size_t, std::size_t)> rec =
      [&](std::size_t begin, std::size_t end, std::size_t level) {
        if (end - begin <= 1) return;
        const auto spans = subset_spans(cloud, order, begin, end);
        const auto pdf = split_axis_pdf(spans);
        Rng rng(mix_seed(seed, (static_cast<std::uint64_t>(begin) << 32) ^ end ^ level));
        const double u = rng.uniform();
        const std::size_t axis = u < pdf[0] ? 0 : (u < pdf[0] + pdf[1] ? 1 : 2);
        const Point3 dir = kAxes[axis];
        const Point3 next_dir = kAxes[(axis + 1) % 3];
        if (trace) trace->push_back({begin, end, dir});
        std::sort(order.begin() + begin, order.begin() + end,
                  [&](std::size_t ia, std::size_t ib) {
                    const double pa = cloud.points[ia][axis], pb = cloud.points[ib][axis];
                    if (pa != pb) return pa < pb;
                    const double qa = dot3(cloud.points[ia], next_dir),
                                 qb = dot3(cloud.points[ib], next_dir);
                    if (qa != qb) return qa < qb;
                    return ia < ib;
                  });
        const std::size_t mid = begin + (end - begin) / 2;
        rec(begin, mid, level + 1);
        rec(mid, end, level + 1);
      };
  rec(0, pc.size(), 0);
  return sc;
}

SortedCloud rp_sort(const PointCloud& pc, const AxisSet& axes, std::uint64_t seed,
                    std::vector<SplitRecord>* trace) {
  require_power_of_two(pc, "rp_sort");
  if (axes.axes.empty()) throw std::invalid_argument("rp_sort: empty axis set");
  SortedCloud sc;
  sc.cloud = pc;
  sc.tree_kind = TreeKind::rp;
  sc.seed = seed;
  sc.order.resize(pc.size());
  for (std::size_t i = 0; i < pc.size(); ++i) sc.order[i] = i;

  const std::size_t m = axes.axes.size();
  if (axes.shared) {
    split_recursive(
        pc, sc.order, 0, pc.size(), 0,
        [&](std::size_t level, std::size_t, std::size_t) { return axes.axes[level % m]; }, trace);
  } else {
    // per-split axis drawn from the set, seeded by node position
    auto axis_of = [&](std::size_t level, std::size_t begin, std::size_t end) {
      Rng rng(mix_seed(seed, (static_cast<std::uint64_t>(begin) << 32) ^ end ^ level));
      return axes.axes[rng.below(m)];
    };
    split_recursive(pc, sc.order, 0, pc.size(), 0, axis_of, trace);
  }
  return sc;
}

Point3 ScaleSampler::sample(Rng& rng) const {
  Point3 f;
  for (int a = 0; a < 3; ++a) {
    if (gaussian) {
      double v = rng.normal(mean, stddev);
      while (v <= 0.0) v = rng.normal(mean, stddev);  // resample nonpositive tail
      f[a] = v;
    } else {
      f[a] = rng.uniform(lo, hi);
    }
  }
  return f;
}

std::vector<SortedCloud> tta_orderings(const PointCloud& pc, int count,
                                       const ScaleSampler& sampler, std::uint64_t seed) {
  if (count < 1) throw std::invalid_argument("tta_orderings: count must be >= 1");
  std::vector<SortedCloud> out;
  out.reserve(static_cast<std::size_t>(count));
  for (int i = 0; i < count; ++i) {
    Rng rng(mix_seed(seed, static_cast<std::uint64_t>(i)));
    const Point3 f = sampler.sample(rng);
    std::vector<Point3> scaled;
    scaled.reserve(pc.size());
    for (const auto& p : pc.points) scaled.push_back({p[0] * f[0], p[1] * f[1], p[2] * f[2]});
    PointCloud renorm = normalize_cloud(scaled);
    out.push_back(prob_kd_sort(renorm, mix_seed(seed, 0x747461ULL + i)));
  }
  return out;
}

}  // namespace mrt
