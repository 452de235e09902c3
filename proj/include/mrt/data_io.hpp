#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "mrt/spatial_sort.hpp"

namespace mrt {

struct Mesh {
  std::vector<Point3> vertices;
  std::vector<std::array<std::size_t, 3>> triangles;

  double total_area() const;
};

enum class MeshFormat { off, obj };

// OFF: standard header; OBJ: only v/f records, polygons fan-triangulated.
// Malformed input is rejected with the offending line number.
Mesh load_mesh(const std::string& path, MeshFormat format);
Mesh parse_off(const std::string& text, const std::string& name = "<off>");
Mesh parse_obj(const std::string& text, const std::string& name = "<obj>");

// Area-weighted uniform sampling of 4n candidates followed by farthest-point
// subsampling to n (the even-dispersion stand-in for Poisson disk sampling).
PointCloud sample_surface(const Mesh& mesh, std::size_t n, std::uint64_t seed);

// candidates only (area-weighted, no subsampling); exposed for tests
std::vector<Point3> sample_surface_candidates(const Mesh& mesh, std::size_t count,
                                              std::uint64_t seed);
std::vector<std::size_t> farthest_point_indices(const std::vector<Point3>& candidates,
                                                std::size_t n);

// ---------------------------------------------------------------------------
// Synthetic desk-scale datasets
// ---------------------------------------------------------------------------

enum class SynthKind { sphere, cube, torus, two_part_chair };

struct LabeledCloud {
  PointCloud cloud;
  int label = 0;                 // class id for classification
  std::vector<int> point_labels; // per-point part ids (segmentation)
  int category = 0;
};

// analytic surface samplers in canonical pose, before jitter/normalization
std::vector<Point3> sample_sphere(std::size_t n, Rng& rng, double radius = 0.5);
std::vector<Point3> sample_cube(std::size_t n, Rng& rng, double half = 0.5);
std::vector<Point3> sample_torus(std::size_t n, Rng& rng, double major = 0.35,
                                 double minor = 0.15);
// seat/back construction; fills part labels (0 = seat, 1 = back)
std::vector<Point3> sample_chair(std::size_t n, Rng& rng, std::vector<int>* part_labels);

// Balanced dataset over the given kinds: count shapes total, each with n
// points, per-instance anisotropic scale jitter and a random rotation about
// the up axis (y), normalized at the end. Class ids follow kind order.
std::vector<LabeledCloud> synth_dataset(const std::vector<SynthKind>& kinds, std::size_t count,
                                        std::size_t n, std::uint64_t seed);

// Random duplication up to a power-of-two target; labels ride along.
LabeledCloud pad_duplicate(const LabeledCloud& in, std::size_t target, std::uint64_t seed);

// Per-cloud anisotropic scaling followed by re-normalization.
PointCloud augment_scale(const PointCloud& pc, const ScaleSampler& sampler, std::uint64_t seed);

// ---------------------------------------------------------------------------
// XYZ text format: "x y z [label]" per line, 9 significant digits.
// ---------------------------------------------------------------------------

void write_xyz(const std::string& path, const PointCloud& pc,
               const std::vector<int>* labels = nullptr);
PointCloud read_xyz(const std::string& path, std::vector<int>* labels = nullptr);

}  // namespace mrt
