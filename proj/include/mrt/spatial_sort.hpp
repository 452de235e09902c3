#pragma once

#include <array>
#include <cstdint>
#include <vector>

#include "mrt/rng.hpp"

namespace mrt {

using Point3 = std::array<double, 3>;

// N x 3 coordinate list in normalized space. Network inputs additionally
// require N to be a power of two.
struct PointCloud {
  std::vector<Point3> points;

  std::size_t size() const { return points.size(); }
  bool power_of_two() const {
    const std::size_t n = points.size();
    return n > 0 && (n & (n - 1)) == 0;
  }
};

enum class TreeKind { kd, prob_kd, rp };

// Record of one internal split, emitted by the sorters so tests can verify
// hierarchical contiguity against the actual directions used.
struct SplitRecord {
  std::size_t begin = 0, end = 0;  // index range in the final ordering
  Point3 direction{};              // projection axis used at this split
};

// A cloud plus the locality-preserving permutation a space-partitioning tree
// assigned to it. order[i] is the original index of the point at sorted slot i.
struct SortedCloud {
  PointCloud cloud;
  std::vector<std::size_t> order;
  TreeKind tree_kind = TreeKind::kd;
  std::uint64_t seed = 0;

  Point3 sorted_point(std::size_t slot) const { return cloud.points[order[slot]]; }
};

// Unit split directions for rp-trees. In shared mode the same set is reused
// for every shape (level l uses axes[l mod size]), which keeps orderings
// consistent across shapes.
struct AxisSet {
  std::vector<Point3> axes;
  bool shared = true;

  static AxisSet canonical();                       // x, y, z
  static AxisSet random(std::size_t count, std::uint64_t seed);
};

// Center the bounding box at the origin and scale uniformly so the longest
// side is 1. Zero-extent clouds collapse to the origin.
PointCloud normalize_cloud(const std::vector<Point3>& raw);

bool is_normalized(const PointCloud& pc, double tol = 1e-9);

// softmax of per-axis spans
std::array<double, 3> split_axis_pdf(const std::array<double, 3>& spans);

SortedCloud kd_sort(const PointCloud& pc, std::vector<SplitRecord>* trace = nullptr);
SortedCloud prob_kd_sort(const PointCloud& pc, std::uint64_t seed,
                         std::vector<SplitRecord>* trace = nullptr);
SortedCloud rp_sort(const PointCloud& pc, const AxisSet& axes, std::uint64_t seed = 0,
                    std::vector<SplitRecord>* trace = nullptr);

// Anisotropic per-axis scale factors. Gaussian mode resamples nonpositive
// draws; uniform mode draws from [lo, hi].
struct ScaleSampler {
  bool gaussian = true;
  double mean = 1.0;
  double stddev = 0.5;  // N(1, 0.25) read as variance 0.25
  double lo = 0.8, hi = 1.2;

  Point3 sample(Rng& rng) const;
};

// One test-time augmentation version: scaled + re-normalized cloud with a
// fresh probabilistic kd ordering.
std::vector<SortedCloud> tta_orderings(const PointCloud& pc, int count,
                                       const ScaleSampler& sampler, std::uint64_t seed);

}  // namespace mrt
