#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "mrt/multires.hpp"

namespace mrt {

enum class AugmentMode { none, gaussian, uniform };

// Every stochastic choice and hyperparameter of a run. Serialized as the run
// manifest: two runs with equal manifests are deterministic replicas.
struct RunConfig {
  // [run]
  Task task = Task::classifier;
  Variant variant = Variant::full;
  std::string precision = "f32";  // f32 | f64
  std::string out_dir = "out";

  // [data]
  std::string dataset = "synth:sphere,cube,torus";
  std::size_t count = 300;
  std::size_t n_points = 256;
  double train_fraction = 0.8;

  // [model]
  std::size_t k = 8;
  std::size_t latent_dim = 512;
  std::size_t filter_cap = 1024;
  std::vector<std::size_t> enc_filters;  // empty -> derived
  std::vector<std::size_t> dec_filters;
  std::size_t n_classes = 3;
  std::size_t n_out = 256;
  std::size_t seed_channels = 512;
  std::size_t head_filters = 128;
  bool tanh_output = true;
  bool use_skips = true;

  // [train]
  std::size_t batch_size = 8;
  int epochs = 30;
  double base_lr = 1e-3;
  int halve_every = 5;
  double lambda = 0.1;
  double delta_c = 0.01;
  AugmentMode augment = AugmentMode::gaussian;
  double scale_std = 0.5;  // N(1, 0.25) read as variance
  std::string nn_backend = "tree";  // tree | brute

  // [eval]
  int tta = 16;

  // [seeds]
  std::uint64_t seed_data = 1;
  std::uint64_t seed_init = 2;
  std::uint64_t seed_tree = 3;
  std::uint64_t seed_noise = 4;

  NetworkSpec network_spec() const;
  std::string serialize() const;

  static RunConfig parse(const std::string& text, const std::string& name = "<config>");
  static RunConfig load(const std::string& path);
  void save(const std::string& path) const;
};

std::string task_name(Task t);
Task task_from(const std::string& s);
std::string variant_name(Variant v);
Variant variant_from(const std::string& s);

}  // namespace mrt
