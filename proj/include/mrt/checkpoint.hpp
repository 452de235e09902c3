#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "mrt/multires.hpp"

namespace mrt {

struct CheckpointEntry {
  std::string name;
  std::vector<std::size_t> shape;
  std::vector<float> data;
};

// On-disk model state: a plain-text header (format version, network spec,
// optimizer scalars, epoch, and a name/offset/shape index), a blank line, then
// the flat little-endian float32 payload. Offsets count elements. Save, load,
// save again produces byte-identical files.
struct CheckpointData {
  int version = 1;
  int epoch = 0;
  NetworkSpec spec;
  double adam_lr = 1e-3;
  double adam_beta1 = 0.9;
  double adam_beta2 = 0.999;
  double adam_epsilon = 1e-8;
  std::int64_t adam_steps = 0;
  std::vector<CheckpointEntry> entries;

  const CheckpointEntry* find(const std::string& name) const;

  void save(const std::string& path) const;
  static CheckpointData load(const std::string& path);
};

}  // namespace mrt
