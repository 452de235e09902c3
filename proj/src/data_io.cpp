#include "mrt/data_io.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <sstream>
#include <stdexcept>

namespace mrt {

namespace {

[[noreturn]] void fail_line(const std::string& name, std::size_t line, const std::string& what) {
  throw std::runtime_error(name + ":" + std::to_string(line) + ": " + what);
}

double tri_area(const Point3& a, const Point3& b, const Point3& c) {
  const Point3 u = {b[0] - a[0], b[1] - a[1], b[2] - a[2]};
  const Point3 v = {c[0] - a[0], c[1] - a[1], c[2] - a[2]};
  const Point3 cr = {u[1] * v[2] - u[2] * v[1], u[2] * v[0] - u[0] * v[2],
                     u[0] * v[1] - u[1] * v[0]};
  return 0.5 * std::sqrt(cr[0] * cr[0] + cr[1] * cr[1] + cr[2] * cr[2]);
}

double dist2(const Point3& a, const Point3& b) {
  const double dx = a[0] - b[0], dy = a[1] - b[1], dz = a[2] - b[2];
  return dx * dx + dy * dy + dz * dz;
}

// strips comments and blank lines, keeping original line numbers
std::vector<std::pair<std::size_t, std::string>> content_lines(const std::string& text,
                                                               char comment) {
  std::vector<std::pair<std::size_t, std::string>> lines;
  std::istringstream in(text);
  std::string line;
  std::size_t no = 0;
  while (std::getline(in, line)) {
    ++no;
    const auto hash = line.find(comment);
    if (hash != std::string::npos) line = line.substr(0, hash);
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    lines.emplace_back(no, line);
  }
  return lines;
}

}  // namespace

double Mesh::total_area() const {
  double area = 0;
  for (const auto& t : triangles)
    area += tri_area(vertices[t[0]], vertices[t[1]], vertices[t[2]]);
  return area;
}

Mesh parse_off(const std::string& text, const std::string& name) {
  auto lines = content_lines(text, '#');
  if (lines.empty()) fail_line(name, 1, "empty OFF file");
  std::size_t cursor = 0;
  std::istringstream header(lines[cursor].second);
  std::string magic;
  header >> magic;
  if (magic != "OFF") fail_line(name, lines[cursor].first, "missing OFF header");

  std::size_t nv = 0, nf = 0, ne = 0;
  if (!(header >> nv >> nf >> ne)) {
    // counts on the following line
    ++cursor;
    if (cursor >= lines.size()) fail_line(name, lines.back().first, "missing element counts");
    std::istringstream counts(lines[cursor].second);
    if (!(counts >> nv >> nf >> ne))
      fail_line(name, lines[cursor].first, "malformed element counts");
  }
  Mesh mesh;
  mesh.vertices.reserve(nv);
  for (std::size_t i = 0; i < nv; ++i) {
    ++cursor;
    if (cursor >= lines.size()) fail_line(name, lines.back().first, "unexpected end of vertices");
    std::istringstream ls(lines[cursor].second);
    Point3 p;
    if (!(ls >> p[0] >> p[1] >> p[2])) fail_line(name, lines[cursor].first, "malformed vertex");
    mesh.vertices.push_back(p);
  }
  for (std::size_t i = 0; i < nf; ++i) {
    ++cursor;
    if (cursor >= lines.size()) fail_line(name, lines.back().first, "unexpected end of faces");
    std::istringstream ls(lines[cursor].second);
    std::size_t cnt = 0;
    if (!(ls >> cnt) || cnt < 3) fail_line(name, lines[cursor].first, "malformed face");
    std::vector<std::size_t> idx(cnt);
    for (auto& v : idx) {
      long long raw;
      if (!(ls >> raw)) fail_line(name, lines[cursor].first, "malformed face index");
      if (raw < 0 || static_cast<std::size_t>(raw) >= mesh.vertices.size())
        fail_line(name, lines[cursor].first,
                  "face index " + std::to_string(raw) + " out of range");
      v = static_cast<std::size_t>(raw);
    }
    for (std::size_t k = 1; k + 1 < cnt; ++k)
      mesh.triangles.push_back({idx[0], idx[k], idx[k + 1]});
  }
  return mesh;
}

Mesh parse_obj(const std::string& text, const std::string& name) {
  Mesh mesh;
  auto lines = content_lines(text, '#');
  for (const auto& [no, line] : lines) {
    std::istringstream ls(line);
    std::string tag;
    ls >> tag;
    if (tag == "v") {
      Point3 p;
      if (!(ls >> p[0] >> p[1] >> p[2])) fail_line(name, no, "malformed vertex");
      mesh.vertices.push_back(p);
    } else if (tag == "f") {
      std::vector<std::size_t> idx;
      std::string tok;
      while (ls >> tok) {
        // "v", "v/vt", "v//vn", "v/vt/vn": the leading integer is the vertex
        std::size_t slash = tok.find('/');
        const std::string head = slash == std::string::npos ? tok : tok.substr(0, slash);
        long long raw;
        try {
          raw = std::stoll(head);
        } catch (...) {
          fail_line(name, no, "malformed face token '" + tok + "'");
        }
        if (raw < 0) raw = static_cast<long long>(mesh.vertices.size()) + raw + 1;
        if (raw < 1 || static_cast<std::size_t>(raw) > mesh.vertices.size())
          fail_line(name, no, "face index " + std::to_string(raw) + " out of range");
        idx.push_back(static_cast<std::size_t>(raw - 1));
      }
      if (idx.size() < 3) fail_line(name, no, "face with fewer than 3 vertices");
      for (std::size_t k = 1; k + 1 < idx.size(); ++k)
        mesh.triangles.push_back({idx[0], idx[k], idx[k + 1]});
    }
    // all other records ignored
  }
  return mesh;
}

Mesh load_mesh(const std::string& path, MeshFormat format) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open " + path);
  std::stringstream buf;
  buf << in.rdbuf();
  return format == MeshFormat::off ? parse_off(buf.str(), path) : parse_obj(buf.str(), path);
}

std::vector<Point3> sample_surface_candidates(const Mesh& mesh, std::size_t count,
                                              std::uint64_t seed) {
  std::vector<double> cum;
  cum.reserve(mesh.triangles.size());
  double total = 0;
  for (const auto& t : mesh.triangles) {
    const double a = tri_area(mesh.vertices[t[0]], mesh.vertices[t[1]], mesh.vertices[t[2]]);
    total += a;  // zero-area triangles add nothing and are never selected
    cum.push_back(total);
  }
  if (total <= 0) throw std::invalid_argument("sample_surface: mesh has no area");

  Rng rng(seed);
  std::vector<Point3> out;
  out.reserve(count);
  for (std::size_t i = 0; i < count; ++i) {
    const double u = rng.uniform() * total;
    const std::size_t ti =
        static_cast<std::size_t>(std::lower_bound(cum.begin(), cum.end(), u) - cum.begin());
    const auto& t = mesh.triangles[std::min(ti, mesh.triangles.size() - 1)];
    const Point3 &a = mesh.vertices[t[0]], &b = mesh.vertices[t[1]], &c = mesh.vertices[t[2]];
    const double r1 = std::sqrt(rng.uniform()), r2 = rng.uniform();
    const double wa = 1.0 - r1, wb = r1 * (1.0 - r2), wc = r1 * r2;
    out.push_back({wa * a[0] + wb * b[0] + wc * c[0], wa * a[1] + wb * b[1] + wc * c[1],
                   wa * a[2] + wb * b[2] + wc * c[2]});
  }
  return out;
}

std::vector<std::size_t> farthest_point_indices(const std::vector<Point3>& candidates,
                                                std::size_t n) {
  if (candidates.size() < n)
    throw std::invalid_argument("farthest_point: fewer candidates than requested points");
  std::vector<std::size_t> chosen;
  chosen.reserve(n);
  std::vector<double> best(candidates.size(), std::numeric_limits<double>::infinity());
  std::size_t cur = 0;  // deterministic start
  chosen.push_back(cur);
  for (std::size_t step = 1; step < n; ++step) {
    std::size_t far = 0;
    double far_d = -1;
    for (std::size_t i = 0; i < candidates.size(); ++i) {
      best[i] = std::min(best[i], dist2(candidates[i], candidates[cur]));
      if (best[i] > far_d) {
        far_d = best[i];
        far = i;
      }
    }
    cur = far;
    chosen.push_back(cur);
  }
  return chosen;
}

PointCloud sample_surface(const Mesh& mesh, std::size_t n, std::uint64_t seed) {
  if (n == 0 || (n & (n - 1)) != 0)
    throw std::invalid_argument("sample_surface: n must be a power of two");
  const auto candidates = sample_surface_candidates(mesh, 4 * n, seed);
  const auto idx = farthest_point_indices(candidates, n);
  PointCloud pc;
  pc.points.reserve(n);
  for (std::size_t i : idx) pc.points.push_back(candidates[i]);
  return pc;
}

std::vector<Point3> sample_sphere(std::size_t n, Rng& rng, double radius) {
  std::vector<Point3> pts;
  pts.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    const Point3 u = rng.unit_vector();
    pts.push_back({radius * u[0], radius * u[1], radius * u[2]});
  }
  return pts;
}

std::vector<Point3> sample_cube(std::size_t n, Rng& rng, double half) {
  std::vector<Point3> pts;
  pts.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    const std::size_t face = rng.below(6);
    const double u = rng.uniform(-half, half), v = rng.uniform(-half, half);
    const double s = face % 2 == 0 ? half : -half;
    switch (face / 2) {
      case 0: pts.push_back({s, u, v}); break;
      case 1: pts.push_back({u, s, v}); break;
      default: pts.push_back({u, v, s}); break;
    }
  }
  return pts;
}

std::vector<Point3> sample_torus(std::size_t n, Rng& rng, double major, double minor) {
  std::vector<Point3> pts;
  pts.reserve(n);
  constexpr double two_pi = 6.283185307179586476925286766559;
  for (std::size_t i = 0; i < n; ++i) {
    // rejection on the ring angle keeps the surface density uniform
    double theta, phi;
    for (;;) {
      theta = rng.uniform(0.0, two_pi);
      phi = rng.uniform(0.0, two_pi);
      const double accept = (major + minor * std::cos(phi)) / (major + minor);
      if (rng.uniform() < accept) break;
    }
    const double r = major + minor * std::cos(phi);
    pts.push_back({r * std::cos(theta), minor * std::sin(phi), r * std::sin(theta)});
  }
  return pts;
}

std::vector<Point3> sample_chair(std::size_t n, Rng& rng, std::vector<int>* part_labels) {
  // seat: horizontal slab at y=0; back: vertical slab rising from the rear
  // edge. Points above the seat plane carry the back label.
  std::vector<Point3> pts;
  pts.reserve(n);
  if (part_labels) part_labels->clear();
  for (std::size_t i = 0; i < n; ++i) {
    const bool back = rng.uniform() < 0.5;
    Point3 p;
    if (back) {
      p = {rng.uniform(-0.4, 0.4), rng.uniform(0.05, 0.8), -0.4 + rng.uniform(-0.02, 0.02)};
    } else {
      p = {rng.uniform(-0.4, 0.4), rng.uniform(-0.02, 0.02), rng.uniform(-0.4, 0.4)};
    }
    pts.push_back(p);
    if (part_labels) part_labels->push_back(back ? 1 : 0);
  }
  return pts;
}

std::vector<LabeledCloud> synth_dataset(const std::vector<SynthKind>& kinds, std::size_t count,
                                        std::size_t n, std::uint64_t seed) {
  if (kinds.empty()) throw std::invalid_argument("synth_dataset: no kinds");
  if (n == 0 || (n & (n - 1)) != 0)
    throw std::invalid_argument("synth_dataset: n must be a power of two");
  std::vector<LabeledCloud> out;
  out.reserve(count);
  const std::size_t per = count / kinds.size();
  std::size_t remainder = count % kinds.size();
  std::size_t instance = 0;
  for (std::size_t ki = 0; ki < kinds.size(); ++ki) {
    std::size_t quota = per + (ki < remainder ? 1 : 0);
    for (std::size_t j = 0; j < quota; ++j, ++instance) {
      Rng rng(mix_seed(seed, instance));
      LabeledCloud lc;
      lc.label = static_cast<int>(ki);
      lc.category = static_cast<int>(ki);
      std::vector<Point3> pts;
      switch (kinds[ki]) {
        case SynthKind::sphere: pts = sample_sphere(n, rng); break;
        case SynthKind::cube: pts = sample_cube(n, rng); break;
        case SynthKind::torus: pts = sample_torus(n, rng); break;
        case SynthKind::two_part_chair: pts = sample_chair(n, rng, &lc.point_labels); break;
      }
      // per-instance jitter: anisotropic scale then rotation about y
      const Point3 s = {rng.uniform(0.8, 1.2), rng.uniform(0.8, 1.2), rng.uniform(0.8, 1.2)};
      const double ang = rng.uniform(0.0, 6.283185307179586476925286766559);
      const double ca = std::cos(ang), sa = std::sin(ang);
      for (auto& p : pts) {
        p = {p[0] * s[0], p[1] * s[1], p[2] * s[2]};
        p = {ca * p[0] + sa * p[2], p[1], -sa * p[0] + ca * p[2]};
      }
      lc.cloud = normalize_cloud(pts);
      out.push_back(std::move(lc));
    }
  }
  return out;
}

LabeledCloud pad_duplicate(const LabeledCloud& in, std::size_t target, std::uint64_t seed) {
  const std::size_t n = in.cloud.size();
  if (n == 0 || n > target)
    throw std::invalid_argument("pad_duplicate: have " + std::to_string(n) + " points, target " +
                                std::to_string(target));
  LabeledCloud out = in;
  Rng rng(seed);
  while (out.cloud.points.size() < target) {
    const std::size_t pick = rng.below(n);
    out.cloud.points.push_back(in.cloud.points[pick]);
    if (!in.point_labels.empty()) out.point_labels.push_back(in.point_labels[pick]);
  }
  return out;
}

PointCloud augment_scale(const PointCloud& pc, const ScaleSampler& sampler, std::uint64_t seed) {
  Rng rng(seed);
  const Point3 f = sampler.sample(rng);
  std::vector<Point3> scaled;
  scaled.reserve(pc.size());
  for (const auto& p : pc.points) scaled.push_back({p[0] * f[0], p[1] * f[1], p[2] * f[2]});
  return normalize_cloud(scaled);
}

void write_xyz(const std::string& path, const PointCloud& pc, const std::vector<int>* labels) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path);
  out.precision(9);
  for (std::size_t i = 0; i < pc.points.size(); ++i) {
    const auto& p = pc.points[i];
    out << p[0] << " " << p[1] << " " << p[2];
    if (labels) out << " " << (*labels)[i];
    out << "\n";
  }
}

PointCloud read_xyz(const std::string& path, std::vector<int>* labels) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open " + path);
  PointCloud pc;
  if (labels) labels->clear();
  std::string line;
  std::size_t no = 0;
  while (std::getline(in, line)) {
    ++no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    std::istringstream ls(line);
    Point3 p;
    if (!(ls >> p[0] >> p[1] >> p[2])) fail_line(path, no, "malformed point");
    pc.points.push_back(p);
    if (labels) {
      int l = 0;
      if (ls >> l) labels->push_back(l);
    }
  }
  if (pc.points.empty()) throw std::runtime_error(path + ": empty cloud (need at least 1 point)");
  return pc;
}

}  // namespace mrt
