#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <numeric>

#include "mrt/rng.hpp"
#include "mrt/spatial_sort.hpp"

using namespace mrt;

namespace {

PointCloud random_cloud(std::size_t n, Rng& rng) {
  std::vector<Point3> pts;
  for (std::size_t i = 0; i < n; ++i)
    pts.push_back({rng.uniform(-1, 1), rng.uniform(-1, 1), rng.uniform(-1, 1)});
  return normalize_cloud(pts);
}

bool is_permutation_of_range(const std::vector<std::size_t>& order) {
  std::vector<char> seen(order.size(), 0);
  for (std::size_t i : order) {
    if (i >= order.size() || seen[i]) return false;
    seen[i] = 1;
  }
  return true;
}

double dot3(const Point3& a, const Point3& b) {
  return a[0] * b[0] + a[1] * b[1] + a[2] * b[2];
}

// Hierarchical contiguity: for every recorded split, the two halves are equal
// sized and every projection in the left half precedes (or ties) every
// projection in the right half. Together with the recursion covering all
// levels this certifies each aligned block [b*2^(D-l), (b+1)*2^(D-l)) is
// exactly one subtree.
void check_contiguity(const SortedCloud& sc, const std::vector<SplitRecord>& trace) {
  const std::size_t n = sc.order.size();
  std::size_t d = 0;
  while ((std::size_t{1} << d) < n) ++d;
  // every aligned block of size >= 2 must appear exactly once in the trace
  std::size_t expected_internal = n - 1;  // full binary tree over 2^D leaves
  CHECK(trace.size() == expected_internal);
  for (const auto& s : trace) {
    const std::size_t len = s.end - s.begin;
    CHECK(len >= 2);
    CHECK((len & (len - 1)) == 0);
    CHECK(s.begin % len == 0);  // aligned block
    const std::size_t mid = s.begin + len / 2;
    double max_left = -1e300, min_right = 1e300;
    for (std::size_t i = s.begin; i < mid; ++i)
      max_left = std::max(max_left, dot3(sc.sorted_point(i), s.direction));
    for (std::size_t i = mid; i < s.end; ++i)
      min_right = std::min(min_right, dot3(sc.sorted_point(i), s.direction));
    CHECK(max_left <= min_right);
  }
}

double mean_adjacent_distance(const SortedCloud& sc) {
  double acc = 0;
  for (std::size_t i = 0; i + 1 < sc.order.size(); ++i) {
    const Point3 a = sc.sorted_point(i), b = sc.sorted_point(i + 1);
    acc += std::sqrt((a[0] - b[0]) * (a[0] - b[0]) + (a[1] - b[1]) * (a[1] - b[1]) +
                     (a[2] - b[2]) * (a[2] - b[2]));
  }
  return acc / static_cast<double>(sc.order.size() - 1);
}

}  // namespace

TEST_CASE("normalize_cloud basic cases") {
  PointCloud pc = normalize_cloud({{0, 0, 0}, {2, 0, 0}});
  CHECK(pc.points[0] == Point3{-0.5, 0, 0});
  CHECK(pc.points[1] == Point3{0.5, 0, 0});

  // idempotence
  PointCloud again = normalize_cloud(pc.points);
  for (std::size_t i = 0; i < 2; ++i)
    for (int a = 0; a < 3; ++a) CHECK(again.points[i][a] == doctest::Approx(pc.points[i][a]));

  // degenerate: repeated point maps to all zeros
  PointCloud deg = normalize_cloud({{3, 3, 3}, {3, 3, 3}});
  for (const auto& p : deg.points)
    for (int a = 0; a < 3; ++a) CHECK(p[a] == 0.0);

  CHECK_THROWS_AS(normalize_cloud({}), std::invalid_argument);
  CHECK(is_normalized(pc));
}

TEST_CASE("kd_sort four point hand trace") {
  PointCloud pc;
  pc.points = {{0, 0, 0}, {1, 0, 0}, {0, 1, 0}, {1, 1, 0}};
  SortedCloud sc = kd_sort(pc);
  std::vector<Point3> expect = {{0, 0, 0}, {0, 1, 0}, {1, 0, 0}, {1, 1, 0}};
  for (std::size_t i = 0; i < 4; ++i) CHECK(sc.sorted_point(i) == expect[i]);
}

TEST_CASE("kd_sort two points sorted by x") {
  PointCloud pc;
  pc.points = {{5, 0, 0}, {-1, 2, 2}};
  SortedCloud sc = kd_sort(pc);
  CHECK(sc.sorted_point(0) == Point3{-1, 2, 2});
  CHECK(sc.sorted_point(1) == Point3{5, 0, 0});
}

TEST_CASE("kd_sort is invariant to input permutation when coordinates are distinct") {
  Rng rng(21);
  PointCloud pc = random_cloud(64, rng);
  SortedCloud a = kd_sort(pc);

  PointCloud shuffled = pc;
  for (std::size_t i = shuffled.points.size(); i > 1; --i)
    std::swap(shuffled.points[i - 1], shuffled.points[rng.below(i)]);
  SortedCloud b = kd_sort(shuffled);
  for (std::size_t i = 0; i < pc.size(); ++i) CHECK(a.sorted_point(i) == b.sorted_point(i));
}

TEST_CASE("kd_sort rejects non power of two") {
  PointCloud pc;
  pc.points = {{0, 0, 0}, {1, 0, 0}, {2, 0, 0}};
  CHECK_THROWS_AS(kd_sort(pc), std::invalid_argument);
}

TEST_CASE("order is a permutation for all tree kinds") {
  Rng rng(22);
  PointCloud pc = random_cloud(128, rng);
  AxisSet axes = AxisSet::random(7, 99);
  for (const SortedCloud& sc :
       {kd_sort(pc), prob_kd_sort(pc, 5), rp_sort(pc, axes), rp_sort(pc, axes, 3)}) {
    CHECK(is_permutation_of_range(sc.order));
    const std::size_t n = sc.order.size();
    CHECK(std::accumulate(sc.order.begin(), sc.order.end(), std::size_t{0}) == n * (n - 1) / 2);
  }
}

TEST_CASE("split_axis_pdf closed forms") {
  auto p = split_axis_pdf({2.5, 2.5, 2.5});
  CHECK(p[0] == doctest::Approx(1.0 / 3).epsilon(1e-12));
  CHECK(p[1] == doctest::Approx(1.0 / 3).epsilon(1e-12));
  CHECK(p[0] + p[1] + p[2] == doctest::Approx(1.0).epsilon(1e-12));

  const double e = std::exp(1.0);
  auto q = split_axis_pdf({1, 0, 0});
  CHECK(q[0] == doctest::Approx(e / (e + 2)).epsilon(1e-12));
  CHECK(q[1] == doctest::Approx(1 / (e + 2)).epsilon(1e-12));
  CHECK(q[2] == doctest::Approx(1 / (e + 2)).epsilon(1e-12));

  // shift invariance
  auto a = split_axis_pdf({0.3, 0.9, 0.1});
  auto b = split_axis_pdf({0.3 + 5, 0.9 + 5, 0.1 + 5});
  for (int i = 0; i < 3; ++i) CHECK(a[i] == doctest::Approx(b[i]).epsilon(1e-12));
}

TEST_CASE("prob_kd_sort is reproducible bit-for-bit from its seed") {
  Rng rng(23);
  PointCloud pc = random_cloud(256, rng);
  SortedCloud a = prob_kd_sort(pc, 42);
  SortedCloud b = prob_kd_sort(pc, 42);
  CHECK(a.order == b.order);
  SortedCloud c = prob_kd_sort(pc, 43);
  CHECK(a.order != c.order);  // overwhelmingly likely for 256 random points
}

TEST_CASE("prob_kd_sort picks the dominant axis when one span saturates the pdf") {
  // subset elongated along x by factor 50: P(x) ~ softmax(50,1,1) ~ 1
  Rng rng(24);
  int x_first = 0;
  const int trials = 1000;
  for (int t = 0; t < trials; ++t) {
    std::vector<Point3> pts;
    Rng gen(mix_seed(1000, t));
    for (int i = 0; i < 64; ++i)
      pts.push_back({gen.uniform(-25, 25), gen.uniform(-0.5, 0.5), gen.uniform(-0.5, 0.5)});
    PointCloud pc;
    pc.points = pts;  // unnormalized on purpose: spans 50 x 1 x 1
    SortedCloud sc = prob_kd_sort(pc, mix_seed(2000, t));
    // if x was chosen at the root, the first half has all x below the second half
    double max_left = -1e300, min_right = 1e300;
    for (std::size_t i = 0; i < 32; ++i) max_left = std::max(max_left, sc.sorted_point(i)[0]);
    for (std::size_t i = 32; i < 64; ++i) min_right = std::min(min_right, sc.sorted_point(i)[0]);
    if (max_left <= min_right) ++x_first;
  }
  CHECK(x_first > trials * 99 / 100);
}

TEST_CASE("rp_sort with canonical shared axes reproduces kd_sort exactly") {
  Rng rng(25);
  PointCloud pc = random_cloud(128, rng);
  SortedCloud kd = kd_sort(pc);
  SortedCloud rp = rp_sort(pc, AxisSet::canonical());
  CHECK(kd.order == rp.order);
}

TEST_CASE("rp_sort shared axes give identical orderings to translated copies") {
  Rng rng(26);
  std::vector<Point3> raw;
  for (int i = 0; i < 128; ++i)
    raw.push_back({rng.uniform(-1, 1), rng.uniform(-1, 1), rng.uniform(-1, 1)});
  AxisSet axes = AxisSet::random(7, 4);

  PointCloud a;
  a.points = raw;
  std::vector<Point3> shifted;
  for (const auto& p : raw) shifted.push_back({p[0] + 10, p[1] - 3, p[2] + 0.5});
  PointCloud b;
  b.points = shifted;

  CHECK(rp_sort(a, axes).order == rp_sort(b, axes).order);
}

TEST_CASE("hierarchical contiguity holds for every tree kind and seed") {
  Rng rng(27);
  PointCloud pc = random_cloud(128, rng);
  AxisSet axes = AxisSet::random(7, 5);
  for (std::uint64_t seed : {1ULL, 2ULL, 77ULL}) {
    std::vector<SplitRecord> trace;
    SortedCloud sc = prob_kd_sort(pc, seed, &trace);
    check_contiguity(sc, trace);

    trace.clear();
    SortedCloud rp = rp_sort(pc, axes, seed, &trace);
    check_contiguity(rp, trace);
  }
  std::vector<SplitRecord> trace;
  SortedCloud kd = kd_sort(pc, &trace);
  check_contiguity(kd, trace);
}

TEST_CASE("kd ordering beats a random ordering on locality, 20 of 20 trials") {
  for (int trial = 0; trial < 20; ++trial) {
    Rng rng(mix_seed(31, trial));
    PointCloud pc = random_cloud(256, rng);
    SortedCloud sorted = kd_sort(pc);

    SortedCloud random_order;
    random_order.cloud = pc;
    random_order.order.resize(pc.size());
    for (std::size_t i = 0; i < pc.size(); ++i) random_order.order[i] = i;
    for (std::size_t i = pc.size(); i > 1; --i)
      std::swap(random_order.order[i - 1], random_order.order[rng.below(i)]);

    CHECK(mean_adjacent_distance(sorted) < mean_adjacent_distance(random_order));
  }
}

TEST_CASE("tta orderings") {
  Rng rng(33);
  PointCloud pc = random_cloud(64, rng);

  // count=1 with identity scaling degenerates to a single prob_kd_sort
  ScaleSampler identity;
  identity.gaussian = false;
  identity.lo = identity.hi = 1.0;
  auto single = tta_orderings(pc, 1, identity, 9);
  CHECK(single.size() == 1);
  CHECK(is_permutation_of_range(single[0].order));
  // identity scaling + renormalize preserves coordinates
  for (std::size_t i = 0; i < pc.size(); ++i)
    for (int a = 0; a < 3; ++a)
      CHECK(single[0].cloud.points[i][a] == doctest::Approx(pc.points[i][a]).epsilon(1e-12));

  // all 16 versions satisfy the SortedCloud invariants
  ScaleSampler gauss;  // default N(1, var 0.25)
  auto versions = tta_orderings(pc, 16, gauss, 10);
  CHECK(versions.size() == 16);
  for (const auto& v : versions) {
    CHECK(is_permutation_of_range(v.order));
    CHECK(is_normalized(v.cloud, 1e-9));
  }

  // deterministic given the seed
  auto versions2 = tta_orderings(pc, 16, gauss, 10);
  for (int i = 0; i < 16; ++i) CHECK(versions[i].order == versions2[i].order);
}

TEST_CASE("gaussian scale factors have the configured standard deviation") {
  // default is the variance-0.25 reading of N(1, 0.25)
  ScaleSampler def;
  CHECK(def.stddev == 0.5);

  // the alternative std reading is one config knob away; at std 0.25 the
  // nonpositive-resample truncation is negligible, so moments match closely
  ScaleSampler s;
  s.stddev = 0.25;
  Rng rng(35);
  double sum = 0, sum2 = 0;
  const int n = 10000;
  for (int i = 0; i < n; ++i) {
    Point3 f = s.sample(rng);
    for (int a = 0; a < 3; ++a) {
      sum += f[a];
      sum2 += f[a] * f[a];
    }
  }
  const double m = sum / (3 * n);
  const double var = sum2 / (3 * n) - m * m;
  CHECK(std::abs(std::sqrt(var) - 0.25) < 0.02);

  // at the default std 0.5 the zero-truncation trims the lower tail; the
  // realized std lands a little under 0.5
  Rng rng2(36);
  double s2 = 0, s2sq = 0;
  for (int i = 0; i < n; ++i) {
    Point3 f = def.sample(rng2);
    for (int a = 0; a < 3; ++a) {
      s2 += f[a];
      s2sq += f[a] * f[a];
    }
  }
  const double m2 = s2 / (3 * n);
  const double std2 = std::sqrt(s2sq / (3 * n) - m2 * m2);
  CHECK(std2 > 0.4);
  CHECK(std2 < 0.52);

  ScaleSampler u;
  u.gaussian = false;
  for (int i = 0; i < 1000; ++i) {
    Point3 f = u.sample(rng);
    for (int a = 0; a < 3; ++a) {
      CHECK(f[a] >= 0.8);
      CHECK(f[a] <= 1.2);
    }
  }
}

TEST_CASE("axis sets") {
  AxisSet as = AxisSet::random(5, 123);
  CHECK(as.axes.size() == 5);
  for (const auto& a : as.axes) {
    const double n = std::sqrt(a[0] * a[0] + a[1] * a[1] + a[2] * a[2]);
    CHECK(std::abs(n - 1.0) < 1e-9);
  }
  // reproducible
  AxisSet bs = AxisSet::random(5, 123);
  for (int i = 0; i < 5; ++i) CHECK(as.axes[i] == bs.axes[i]);
}
