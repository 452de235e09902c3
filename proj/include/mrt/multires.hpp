#pragma once

#include <algorithm>
#include <array>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

#include "mrt/layers.hpp"
#include "mrt/tensor.hpp"

namespace mrt {

// ---------------------------------------------------------------------------
// Multiresolution features: the same signal at three resolutions with scale
// ratio k between adjacent streams. Channel counts always agree; once a coarse
// stream has collapsed to length 1 it stops shrinking (the working ratios are
// then read off the actual lengths).
// ---------------------------------------------------------------------------

template <typename T>
struct MultiResFeature {
  Tensor<T> f0, f1, f2;
  std::size_t k = 4;

  std::size_t channels() const { return f0.dim(1); }
  std::array<std::size_t, 3> lengths() const { return {f0.dim(2), f1.dim(2), f2.dim(2)}; }

  void validate() const {
    if (f0.rank() != 3 || f1.rank() != 3 || f2.rank() != 3)
      throw std::invalid_argument("multires: streams must be rank 3");
    if (f0.dim(1) != f1.dim(1) || f1.dim(1) != f2.dim(1))
      throw std::invalid_argument("multires: channel counts differ across streams");
    if (f0.dim(0) != f1.dim(0) || f1.dim(0) != f2.dim(0))
      throw std::invalid_argument("multires: batch sizes differ across streams");
    if (f0.dim(2) % f1.dim(2) != 0 || f1.dim(2) % f2.dim(2) != 0)
      throw std::invalid_argument("multires: stream lengths are not nested");
  }
};

// f0 = x, f1 = pool(x, k), f2 = pool(x, k^2)
template <typename T>
MultiResFeature<T> lift_to_multires(Tape<T>* tape, const Tensor<T>& x, std::size_t k) {
  if (x.rank() != 3) throw std::invalid_argument("lift_to_multires: want [B,C,L]");
  if (x.dim(2) % (k * k) != 0)
    throw std::invalid_argument("lift_to_multires: k^2=" + std::to_string(k * k) +
                                " does not divide L=" + std::to_string(x.dim(2)));
  MultiResFeature<T> f;
  f.k = k;
  f.f0 = x;
  f.f1 = avg_pool1d(tape, x, k);
  f.f2 = avg_pool1d(tape, x, k * k);
  return f;
}

// The MR-combine equations:
//   f'0 = f0 (+) up(f1)
//   f'1 = pool(f0) (+) f1 (+) up(f2)
//   f'2 = pool(f1) (+) f2
// Pool/upsample factors are the actual adjacent length ratios, which equal k
// until a coarse stream has collapsed to length 1.
template <typename T>
std::array<Tensor<T>, 3> mr_combine(Tape<T>* tape, const MultiResFeature<T>& f) {
  f.validate();
  const auto len = f.lengths();
  const std::size_t r01 = len[0] / len[1];
  const std::size_t r12 = len[1] / len[2];
  Tensor<T> up1 = nn_upsample(tape, f.f1, r01);
  Tensor<T> up2 = nn_upsample(tape, f.f2, r12);
  Tensor<T> pool0 = avg_pool1d(tape, f.f0, r01);
  Tensor<T> pool1 = avg_pool1d(tape, f.f1, r12);
  return {concat_channels(tape, std::vector<Tensor<T>>{f.f0, up1}),
          concat_channels(tape, std::vector<Tensor<T>>{pool0, f.f1, up2}),
          concat_channels(tape, std::vector<Tensor<T>>{pool1, f.f2})};
}

// ---------------------------------------------------------------------------
// MR-CONV / MR-CONV-T blocks: mr_combine, then per-stream conv + BN + ReLU.
// Stream modes: halve (k2s2), grow (transposed k2s2), frozen (k1s1, used once
// a stream sits at length 1 on the encoder side or has not started growing on
// the decoder side).
// ---------------------------------------------------------------------------

enum class StreamMode { halve, grow, frozen };

template <typename T>
struct MrBlock {
  std::array<StreamMode, 3> modes{StreamMode::halve, StreamMode::halve, StreamMode::halve};
  std::array<Conv1d<T>, 3> conv;
  std::array<BatchNorm1d<T>, 3> bn;

  MrBlock() = default;
  MrBlock(std::size_t c_in, std::size_t c_out, std::array<StreamMode, 3> modes_, Rng& rng)
      : modes(modes_) {
    const std::array<std::size_t, 3> in = {2 * c_in, 3 * c_in, 2 * c_in};
    for (int s = 0; s < 3; ++s) {
      const bool frozen = modes[s] == StreamMode::frozen;
      conv[s] = Conv1d<T>(c_out, in[s], frozen ? 1 : 2, modes[s] == StreamMode::grow, rng);
      bn[s] = BatchNorm1d<T>(c_out);
    }
  }

  MultiResFeature<T> forward(Tape<T>* tape, const MultiResFeature<T>& f, Mode mode) {
    auto combined = mr_combine(tape, f);
    MultiResFeature<T> out;
    out.k = f.k;
    Tensor<T>* streams[3] = {&out.f0, &out.f1, &out.f2};
    for (int s = 0; s < 3; ++s)
      *streams[s] = relu(tape, bn[s].forward(tape, conv[s].forward(tape, combined[s]), mode));
    return out;
  }

  void collect(const std::string& prefix, std::vector<NamedParam<T>>& out) {
    for (int s = 0; s < 3; ++s) {
      const std::string si = std::to_string(s);
      out.push_back({prefix + ".c" + si + ".w", conv[s].w});
      out.push_back({prefix + ".c" + si + ".b", conv[s].b});
      out.push_back({prefix + ".bn" + si + ".gamma", bn[s].gamma});
      out.push_back({prefix + ".bn" + si + ".beta", bn[s].beta});
    }
  }

  void collect_bns(const std::string& prefix,
                   std::vector<std::pair<std::string, BatchNorm1d<T>*>>& out) {
    for (int s = 0; s < 3; ++s)
      out.push_back({prefix + ".bn" + std::to_string(s), &bn[s]});
  }
};

// single-resolution counterpart used by the ablations
template <typename T>
struct SrBlock {
  StreamMode mode = StreamMode::halve;
  Conv1d<T> conv;
  BatchNorm1d<T> bn;

  SrBlock() = default;
  SrBlock(std::size_t c_in, std::size_t c_out, StreamMode mode_, Rng& rng) : mode(mode_) {
    conv = Conv1d<T>(c_out, c_in, mode_ == StreamMode::frozen ? 1 : 2,
                     mode_ == StreamMode::grow, rng);
    bn = BatchNorm1d<T>(c_out);
  }

  Tensor<T> forward(Tape<T>* tape, const Tensor<T>& x, Mode m) {
    return relu(tape, bn.forward(tape, conv.forward(tape, x), m));
  }

  void collect(const std::string& prefix, std::vector<NamedParam<T>>& out) {
    out.push_back({prefix + ".c.w", conv.w});
    out.push_back({prefix + ".c.b", conv.b});
    out.push_back({prefix + ".bn.gamma", bn.gamma});
    out.push_back({prefix + ".bn.beta", bn.beta});
  }

  void collect_bns(const std::string& prefix,
                   std::vector<std::pair<std::string, BatchNorm1d<T>*>>& out) {
    out.push_back({prefix + ".bn", &bn});
  }
};

// ---------------------------------------------------------------------------
// Network specification
// ---------------------------------------------------------------------------

enum class Task { classifier, vae, decoder, segmenter };
enum class Variant { full, single_res, filters4, fc_decoder };

struct NetworkSpec {
  Task task = Task::classifier;
  std::size_t k = 8;            // 8 for classification, 4 for vae/decoder
  std::size_t n_points = 1024;  // encoder input count (power of two)
  std::size_t n_out = 4096;     // decoder output count
  std::size_t latent_dim = 512;
  std::size_t seed_channels = 512;
  std::size_t head_filters = 128;
  std::size_t n_classes = 40;  // class count or segmentation part count
  std::size_t filter_cap = 1024;
  std::vector<std::size_t> enc_filters;  // empty -> derived from the task
  std::vector<std::size_t> dec_filters;  // empty -> derived
  bool tanh_output = true;
  bool use_skips = true;  // segmenter only
  Variant variant = Variant::full;

  static std::size_t log2_of(std::size_t n) {
    std::size_t d = 0;
    while ((std::size_t{1} << d) < n) ++d;
    if ((std::size_t{1} << d) != n) throw std::invalid_argument("not a power of two");
    return d;
  }

  // first MR-CONV layer has 16 filters, doubling until the cap
  std::vector<std::size_t> encoder_filters() const {
    if (!enc_filters.empty()) return scaled(enc_filters);
    const std::size_t depth = log2_of(n_points);
    std::vector<std::size_t> fs;
    if (task == Task::segmenter) {
      // first three layers 32 filters, next three 64, then doubling
      std::size_t c = 64;
      for (std::size_t d = 0; d < depth; ++d) {
        if (d < 3)
          fs.push_back(32);
        else if (d < 6)
          fs.push_back(64);
        else {
          c = std::min(filter_cap, c * 2);
          fs.push_back(c);
        }
      }
    } else {
      std::size_t c = 16;
      for (std::size_t d = 0; d < depth; ++d) {
        fs.push_back(c);
        c = std::min(filter_cap, c * 2);
      }
    }
    return scaled(fs);
  }

  // 512-512-256-256-128-64-64-64 for 4K outputs; shorter outputs take the
  // tail of the schedule (16 seed positions double once per block)
  std::vector<std::size_t> decoder_filters() const {
    if (!dec_filters.empty()) return scaled(dec_filters);
    static const std::vector<std::size_t> canonical = {512, 512, 256, 256, 128, 64, 64, 64};
    const std::size_t depth = log2_of(n_out) - 4;  // seed f0 length is 16
    std::vector<std::size_t> fs;
    for (std::size_t d = 0; d < depth; ++d) {
      if (depth <= canonical.size())
        fs.push_back(canonical[canonical.size() - depth + d]);
      else
        fs.push_back(d < depth - canonical.size() ? canonical.front()
                                                  : canonical[d - (depth - canonical.size())]);
    }
    return scaled(fs);
  }

  std::vector<std::size_t> scaled(std::vector<std::size_t> fs) const {
    if (variant == Variant::filters4)
      for (auto& f : fs) f = std::max<std::size_t>(1, f / 4);
    return fs;
  }
};

// ---------------------------------------------------------------------------
// Encoders
// ---------------------------------------------------------------------------

// Stream lengths at every block boundary, with the collapse rule applied.
inline std::vector<std::array<std::size_t, 3>> encoder_lengths(std::size_t n, std::size_t k,
                                                               std::size_t depth) {
  if (n % (k * k) != 0)
    throw std::invalid_argument("encoder: k^2 must divide N for the multires lift");
  std::vector<std::array<std::size_t, 3>> out;
  std::array<std::size_t, 3> cur = {n, n / k, n / (k * k)};
  out.push_back(cur);
  for (std::size_t d = 0; d < depth; ++d) {
    for (int s = 0; s < 3; ++s)
      if (cur[s] > 1) cur[s] /= 2;
    out.push_back(cur);
  }
  return out;
}

template <typename T>
struct MrEncoder {
  std::size_t k = 8;
  std::size_t n_points = 1024;
  std::vector<MrBlock<T>> blocks;
  Conv1d<T> fuse;  // k1s1: 3*C_last -> latent at length 1
  std::size_t latent_dim = 512;

  MrEncoder() = default;
  MrEncoder(const NetworkSpec& spec, Rng& rng)
      : k(spec.k), n_points(spec.n_points), latent_dim(spec.latent_dim) {
    const auto filters = spec.encoder_filters();
    const std::size_t depth = NetworkSpec::log2_of(spec.n_points);
    const auto lens = encoder_lengths(spec.n_points, spec.k, depth);
    std::size_t c_in = 3;
    for (std::size_t d = 0; d < depth; ++d) {
      std::array<StreamMode, 3> modes;
      for (int s = 0; s < 3; ++s)
        modes[s] = lens[d][s] > 1 ? StreamMode::halve : StreamMode::frozen;
      blocks.emplace_back(c_in, filters[d], modes, rng);
      c_in = filters[d];
    }
    fuse = Conv1d<T>(latent_dim, 3 * c_in, 1, false, rng);
  }

  // x: [B,3,N] -> z [B,latent]; optionally captures per-block features
  Tensor<T> forward(Tape<T>* tape, const Tensor<T>& x, Mode mode,
                    std::vector<MultiResFeature<T>>* capture = nullptr) {
    if (x.rank() != 3 || x.dim(1) != 3 || x.dim(2) != n_points)
      throw std::invalid_argument("encoder: want [B,3," + std::to_string(n_points) + "], got " +
                                  shape_str(x.shape()));
    MultiResFeature<T> f = lift_to_multires(tape, x, k);
    if (capture) capture->push_back(f);
    for (auto& block : blocks) {
      f = block.forward(tape, f, mode);
      if (capture) capture->push_back(f);
    }
    Tensor<T> cat = concat_channels(tape, std::vector<Tensor<T>>{f.f0, f.f1, f.f2});
    Tensor<T> z = fuse.forward(tape, cat);  // [B, latent, 1]
    return reshape(tape, z, {z.dim(0), latent_dim});
  }

  void collect(const std::string& prefix, std::vector<NamedParam<T>>& out) {
    for (std::size_t i = 0; i < blocks.size(); ++i)
      blocks[i].collect(prefix + ".b" + std::to_string(i), out);
    out.push_back({prefix + ".fuse.w", fuse.w});
    out.push_back({prefix + ".fuse.b", fuse.b});
  }

  void collect_bns(const std::string& prefix,
                   std::vector<std::pair<std::string, BatchNorm1d<T>*>>& out) {
    for (std::size_t i = 0; i < blocks.size(); ++i)
      blocks[i].collect_bns(prefix + ".b" + std::to_string(i), out);
  }
};

template <typename T>
struct SrEncoder {
  std::size_t n_points = 1024;
  std::vector<SrBlock<T>> blocks;
  Conv1d<T> fuse;
  std::size_t latent_dim = 512;

  SrEncoder() = default;
  SrEncoder(const NetworkSpec& spec, Rng& rng)
      : n_points(spec.n_points), latent_dim(spec.latent_dim) {
    const auto filters = spec.encoder_filters();
    const std::size_t depth = NetworkSpec::log2_of(spec.n_points);
    std::size_t c_in = 3;
    for (std::size_t d = 0; d < depth; ++d) {
      blocks.emplace_back(c_in, filters[d], StreamMode::halve, rng);
      c_in = filters[d];
    }
    fuse = Conv1d<T>(latent_dim, c_in, 1, false, rng);
  }

  Tensor<T> forward(Tape<T>* tape, const Tensor<T>& x, Mode mode) {
    if (x.rank() != 3 || x.dim(1) != 3 || x.dim(2) != n_points)
      throw std::invalid_argument("encoder: want [B,3," + std::to_string(n_points) + "], got " +
                                  shape_str(x.shape()));
    Tensor<T> f = x;
    for (auto& block : blocks) f = block.forward(tape, f, mode);
    Tensor<T> z = fuse.forward(tape, f);
    return reshape(tape, z, {z.dim(0), latent_dim});
  }

  void collect(const std::string& prefix, std::vector<NamedParam<T>>& out) {
    for (std::size_t i = 0; i < blocks.size(); ++i)
      blocks[i].collect(prefix + ".b" + std::to_string(i), out);
    out.push_back({prefix + ".fuse.w", fuse.w});
    out.push_back({prefix + ".fuse.b", fuse.b});
  }

  void collect_bns(const std::string& prefix,
                   std::vector<std::pair<std::string, BatchNorm1d<T>*>>& out) {
    for (std::size_t i = 0; i < blocks.size(); ++i)
      blocks[i].collect_bns(prefix + ".b" + std::to_string(i), out);
  }
};

// ---------------------------------------------------------------------------
// Decoders
// ---------------------------------------------------------------------------

template <typename T>
struct DecodedPoints {
  Tensor<T> points;  // [B, N, 3]
  Tensor<T> raw;     // [B, 3, N] pre-transpose view of the same values
};

template <typename T>
struct MrDecoder {
  std::size_t n_out = 4096;
  std::size_t seed_channels = 512;
  std::size_t latent_dim = 512;
  bool tanh_output = true;
  Linear<T> proj;  // latent -> seed_channels * (16 + 4 + 1)
  std::vector<MrBlock<T>> blocks;
  Conv1d<T> head1;
  BatchNorm1d<T> head_bn;
  Conv1d<T> head2;
  std::size_t out_dim = 3;

  MrDecoder() = default;
  MrDecoder(const NetworkSpec& spec, Rng& rng)
      : n_out(spec.n_out),
        seed_channels(spec.seed_channels),
        latent_dim(spec.latent_dim),
        tanh_output(spec.tanh_output) {
    const auto filters = spec.decoder_filters();
    proj = Linear<T>(seed_channels * 21, latent_dim, rng);
    std::size_t c_in = seed_channels;
    for (std::size_t f : filters) {
      blocks.emplace_back(c_in, f, std::array<StreamMode, 3>{StreamMode::grow, StreamMode::grow,
                                                             StreamMode::grow},
                          rng);
      c_in = f;
    }
    head1 = Conv1d<T>(spec.head_filters, c_in, 1, false, rng);
    head_bn = BatchNorm1d<T>(spec.head_filters);
    head2 = Conv1d<T>(out_dim, spec.head_filters, 1, false, rng);
  }

  // z: [B, latent] -> points [B, n_out, 3]
  DecodedPoints<T> forward(Tape<T>* tape, const Tensor<T>& z, Mode mode) {
    if (z.rank() != 2 || z.dim(1) != latent_dim)
      throw std::invalid_argument("decoder: want [B," + std::to_string(latent_dim) + "], got " +
                                  shape_str(z.shape()));
    const std::size_t B = z.dim(0);
    Tensor<T> seed = proj.forward(tape, z);  // [B, C*21]
    MultiResFeature<T> f;
    f.k = 4;
    // split the projection into the three seed streams (lengths 16, 4, 1)
    Tensor<T> all = reshape(tape, seed, {B, seed_channels, std::size_t{21}});
    f.f0 = slice_length(tape, all, 0, 16);
    f.f1 = slice_length(tape, all, 16, 4);
    f.f2 = slice_length(tape, all, 20, 1);
    for (auto& block : blocks) f = block.forward(tape, f, mode);
    Tensor<T> h = relu(tape, head_bn.forward(tape, head1.forward(tape, f.f0), mode));
    Tensor<T> raw = head2.forward(tape, h);
    if (tanh_output) raw = tanh_op(tape, raw);
    DecodedPoints<T> out;
    out.raw = raw;
    out.points = transpose_cl(tape, raw);
    return out;
  }

  void collect(const std::string& prefix, std::vector<NamedParam<T>>& out) {
    out.push_back({prefix + ".proj.w", proj.w});
    out.push_back({prefix + ".proj.b", proj.b});
    for (std::size_t i = 0; i < blocks.size(); ++i)
      blocks[i].collect(prefix + ".b" + std::to_string(i), out);
    out.push_back({prefix + ".head1.w", head1.w});
    out.push_back({prefix + ".head1.b", head1.b});
    out.push_back({prefix + ".head_bn.gamma", head_bn.gamma});
    out.push_back({prefix + ".head_bn.beta", head_bn.beta});
    out.push_back({prefix + ".head2.w", head2.w});
    out.push_back({prefix + ".head2.b", head2.b});
  }

  void collect_bns(const std::string& prefix,
                   std::vector<std::pair<std::string, BatchNorm1d<T>*>>& out) {
    for (std::size_t i = 0; i < blocks.size(); ++i)
      blocks[i].collect_bns(prefix + ".b" + std::to_string(i), out);
    out.push_back({prefix + ".head_bn", &head_bn});
  }

 private:
  // contiguous sub-range along the last axis: [B,C,21] -> [B,C,len] at offset
  static Tensor<T> slice_length(Tape<T>* tape, const Tensor<T>& x, std::size_t off,
                                std::size_t len) {
    const std::size_t B = x.dim(0), C = x.dim(1), L = x.dim(2);
    Tensor<T> out = Tensor<T>::zeros({B, C, len});
    for (std::size_t b = 0; b < B; ++b)
      for (std::size_t c = 0; c < C; ++c)
        for (std::size_t t = 0; t < len; ++t) out.at(b, c, t) = x.at(b, c, off + t);
    if (detail::want_grad(tape, x)) {
      out.set_requires_grad(true);
      auto xi = x.impl(), oi = out.impl();
      tape->record([xi, oi, B, C, L, off, len]() {
        if (xi->g.size() != xi->v.size()) xi->g.assign(xi->v.size(), T(0));
        for (std::size_t b = 0; b < B; ++b)
          for (std::size_t c = 0; c < C; ++c)
            for (std::size_t t = 0; t < len; ++t)
              xi->g[(b * C + c) * L + off + t] += oi->g[(b * C + c) * len + t];
      });
      out.ensure_grad();
    }
    return out;
  }
};

template <typename T>
struct SrDecoder {
  std::size_t n_out = 4096;
  std::size_t seed_channels = 512;
  std::size_t latent_dim = 512;
  bool tanh_output = true;
  Linear<T> proj;  // latent -> seed_channels * 16
  std::vector<SrBlock<T>> blocks;
  Conv1d<T> head1;
  BatchNorm1d<T> head_bn;
  Conv1d<T> head2;

  SrDecoder() = default;
  SrDecoder(const NetworkSpec& spec, Rng& rng)
      : n_out(spec.n_out),
        seed_channels(spec.seed_channels),
        latent_dim(spec.latent_dim),
        tanh_output(spec.tanh_output) {
    const auto filters = spec.decoder_filters();
    proj = Linear<T>(seed_channels * 16, latent_dim, rng);
    std::size_t c_in = seed_channels;
    for (std::size_t f : filters) {
      blocks.emplace_back(c_in, f, StreamMode::grow, rng);
      c_in = f;
    }
    head1 = Conv1d<T>(spec.head_filters, c_in, 1, false, rng);
    head_bn = BatchNorm1d<T>(spec.head_filters);
    head2 = Conv1d<T>(3, spec.head_filters, 1, false, rng);
  }

  DecodedPoints<T> forward(Tape<T>* tape, const Tensor<T>& z, Mode mode) {
    const std::size_t B = z.dim(0);
    Tensor<T> seed = reshape(tape, proj.forward(tape, z), {B, seed_channels, std::size_t{16}});
    Tensor<T> f = seed;
    for (auto& block : blocks) f = block.forward(tape, f, mode);
    Tensor<T> h = relu(tape, head_bn.forward(tape, head1.forward(tape, f), mode));
    Tensor<T> raw = head2.forward(tape, h);
    if (tanh_output) raw = tanh_op(tape, raw);
    DecodedPoints<T> out;
    out.raw = raw;
    out.points = transpose_cl(tape, raw);
    return out;
  }

  void collect(const std::string& prefix, std::vector<NamedParam<T>>& out) {
    out.push_back({prefix + ".proj.w", proj.w});
    out.push_back({prefix + ".proj.b", proj.b});
    for (std::size_t i = 0; i < blocks.size(); ++i)
      blocks[i].collect(prefix + ".b" + std::to_string(i), out);
    out.push_back({prefix + ".head1.w", head1.w});
    out.push_back({prefix + ".head1.b", head1.b});
    out.push_back({prefix + ".head_bn.gamma", head_bn.gamma});
    out.push_back({prefix + ".head_bn.beta", head_bn.beta});
    out.push_back({prefix + ".head2.w", head2.w});
    out.push_back({prefix + ".head2.b", head2.b});
  }

  void collect_bns(const std::string& prefix,
                   std::vector<std::pair<std::string, BatchNorm1d<T>*>>& out) {
    for (std::size_t i = 0; i < blocks.size(); ++i)
      blocks[i].collect_bns(prefix + ".b" + std::to_string(i), out);
    out.push_back({prefix + ".head_bn", &head_bn});
  }
};

// fully connected baseline: 3 hidden layers of width n_out, BN + ReLU each,
// then a linear to n_out*3 and tanh
template <typename T>
struct FcDecoder {
  std::size_t n_out = 4096;
  std::size_t hidden = 4096;
  std::size_t latent_dim = 512;
  bool tanh_output = true;
  std::vector<Linear<T>> hidden_layers;
  std::vector<BatchNorm1d<T>> bns;
  Linear<T> out_layer;

  FcDecoder() = default;
  FcDecoder(const NetworkSpec& spec, Rng& rng)
      : n_out(spec.n_out),
        hidden(spec.n_out),
        latent_dim(spec.latent_dim),
        tanh_output(spec.tanh_output) {
    std::size_t in = latent_dim;
    for (int i = 0; i < 3; ++i) {
      hidden_layers.emplace_back(hidden, in, rng);
      bns.emplace_back(hidden);
      in = hidden;
    }
    out_layer = Linear<T>(n_out * 3, in, rng);
  }

  DecodedPoints<T> forward(Tape<T>* tape, const Tensor<T>& z, Mode mode) {
    const std::size_t B = z.dim(0);
    Tensor<T> h = z;
    for (int i = 0; i < 3; ++i) {
      h = hidden_layers[i].forward(tape, h);
      h = reshape(tape, h, {B, hidden, std::size_t{1}});
      h = relu(tape, bns[i].forward(tape, h, mode));
      h = reshape(tape, h, {B, hidden});
    }
    Tensor<T> flat = out_layer.forward(tape, h);
    if (tanh_output) flat = tanh_op(tape, flat);
    DecodedPoints<T> out;
    out.points = reshape(tape, flat, {B, n_out, std::size_t{3}});
    out.raw = transpose_cl(tape, out.points);  // [B,3,N]
    return out;
  }

  void collect(const std::string& prefix, std::vector<NamedParam<T>>& out) {
    for (int i = 0; i < 3; ++i) {
      const std::string si = std::to_string(i);
      out.push_back({prefix + ".l" + si + ".w", hidden_layers[i].w});
      out.push_back({prefix + ".l" + si + ".b", hidden_layers[i].b});
      out.push_back({prefix + ".bn" + si + ".gamma", bns[i].gamma});
      out.push_back({prefix + ".bn" + si + ".beta", bns[i].beta});
    }
    out.push_back({prefix + ".out.w", out_layer.w});
    out.push_back({prefix + ".out.b", out_layer.b});
  }

  void collect_bns(const std::string& prefix,
                   std::vector<std::pair<std::string, BatchNorm1d<T>*>>& out) {
    for (int i = 0; i < 3; ++i) out.push_back({prefix + ".bn" + std::to_string(i), &bns[i]});
  }
};

// ---------------------------------------------------------------------------
// Assembled networks
// ---------------------------------------------------------------------------

template <typename T>
struct Classifier {
  NetworkSpec spec;
  MrEncoder<T> enc;
  SrEncoder<T> sr_enc;
  Linear<T> fc;

  Classifier() = default;
  Classifier(const NetworkSpec& s, Rng& rng) : spec(s) {
    if (spec.variant == Variant::single_res)
      sr_enc = SrEncoder<T>(spec, rng);
    else
      enc = MrEncoder<T>(spec, rng);
    fc = Linear<T>(spec.n_classes, spec.latent_dim, rng);
  }

  Tensor<T> forward(Tape<T>* tape, const Tensor<T>& x, Mode mode) {
    Tensor<T> z = spec.variant == Variant::single_res ? sr_enc.forward(tape, x, mode)
                                                      : enc.forward(tape, x, mode);
    return fc.forward(tape, z);
  }

  std::vector<NamedParam<T>> params() {
    std::vector<NamedParam<T>> out;
    if (spec.variant == Variant::single_res)
      sr_enc.collect("enc", out);
    else
      enc.collect("enc", out);
    out.push_back({"fc.w", fc.w});
    out.push_back({"fc.b", fc.b});
    return out;
  }

  std::vector<std::pair<std::string, BatchNorm1d<T>*>> bns() {
    std::vector<std::pair<std::string, BatchNorm1d<T>*>> out;
    if (spec.variant == Variant::single_res)
      sr_enc.collect_bns("enc", out);
    else
      enc.collect_bns("enc", out);
    return out;
  }
};

template <typename T>
struct Vae {
  NetworkSpec spec;
  MrEncoder<T> mr_enc;
  SrEncoder<T> sr_enc;
  MrDecoder<T> mr_dec;
  SrDecoder<T> sr_dec;
  FcDecoder<T> fc_dec;

  Vae() = default;
  Vae(const NetworkSpec& s, Rng& rng) : spec(s) {
    if (spec.variant == Variant::single_res)
      sr_enc = SrEncoder<T>(spec, rng);
    else
      mr_enc = MrEncoder<T>(spec, rng);
    if (spec.variant == Variant::single_res)
      sr_dec = SrDecoder<T>(spec, rng);
    else if (spec.variant == Variant::fc_decoder)
      fc_dec = FcDecoder<T>(spec, rng);
    else
      mr_dec = MrDecoder<T>(spec, rng);
  }

  Tensor<T> encode(Tape<T>* tape, const Tensor<T>& x, Mode mode,
                   std::vector<MultiResFeature<T>>* capture = nullptr) {
    if (spec.variant == Variant::single_res) return sr_enc.forward(tape, x, mode);
    return mr_enc.forward(tape, x, mode, capture);
  }

  DecodedPoints<T> decode(Tape<T>* tape, const Tensor<T>& z, Mode mode) {
    if (spec.variant == Variant::single_res) return sr_dec.forward(tape, z, mode);
    if (spec.variant == Variant::fc_decoder) return fc_dec.forward(tape, z, mode);
    return mr_dec.forward(tape, z, mode);
  }

  std::vector<NamedParam<T>> params() {
    std::vector<NamedParam<T>> out;
    if (spec.variant == Variant::single_res) {
      sr_enc.collect("enc", out);
      sr_dec.collect("dec", out);
    } else {
      mr_enc.collect("enc", out);
      if (spec.variant == Variant::fc_decoder)
        fc_dec.collect("dec", out);
      else
        mr_dec.collect("dec", out);
    }
    return out;
  }

  std::vector<std::pair<std::string, BatchNorm1d<T>*>> bns() {
    std::vector<std::pair<std::string, BatchNorm1d<T>*>> out;
    if (spec.variant == Variant::single_res) {
      sr_enc.collect_bns("enc", out);
      sr_dec.collect_bns("dec", out);
    } else {
      mr_enc.collect_bns("enc", out);
      if (spec.variant == Variant::fc_decoder)
        fc_dec.collect_bns("dec", out);
      else
        mr_dec.collect_bns("dec", out);
    }
    return out;
  }
};

// UNet-style segmenter: MR encoder trunk, mirrored MR-CONV-T decoder, encoder
// features concatenated channel-wise onto the same-length decoder feature
// before each decoder block's mr_combine; final k1s1 conv to the part count.
template <typename T>
struct Segmenter {
  NetworkSpec spec;
  std::vector<MrBlock<T>> enc_blocks;
  std::vector<MrBlock<T>> dec_blocks;
  Conv1d<T> head;

  Segmenter() = default;
  Segmenter(const NetworkSpec& s, Rng& rng) : spec(s) {
    const auto filters = spec.encoder_filters();
    const std::size_t depth = NetworkSpec::log2_of(spec.n_points);
    const auto lens = encoder_lengths(spec.n_points, spec.k, depth);
    std::size_t c_in = 3;
    for (std::size_t d = 0; d < depth; ++d) {
      std::array<StreamMode, 3> modes;
      for (int s2 = 0; s2 < 3; ++s2)
        modes[s2] = lens[d][s2] > 1 ? StreamMode::halve : StreamMode::frozen;
      enc_blocks.emplace_back(c_in, filters[d], modes, rng);
      c_in = filters[d];
    }
    // decoder mirrors the encoder in reverse; block i grows the streams that
    // shrank at encoder block depth-1-i and carries the skip's extra channels
    for (std::size_t i = 0; i < depth; ++i) {
      const std::size_t e = depth - 1 - i;  // encoder block being undone
      std::array<StreamMode, 3> modes;
      for (int s2 = 0; s2 < 3; ++s2)
        modes[s2] = lens[e][s2] > 1 ? StreamMode::grow : StreamMode::frozen;
      const std::size_t c_out = e == 0 ? filters[0] : filters[e - 1];
      const bool has_skip = spec.use_skips && i > 0;
      const std::size_t c_block_in = c_in + (has_skip ? filters[e] : 0);
      dec_blocks.emplace_back(c_block_in, c_out, modes, rng);
      c_in = c_out;
    }
    head = Conv1d<T>(spec.n_classes, c_in, 1, false, rng);
  }

  // x: [B,3,N] -> per-point scores [B,N,P]
  Tensor<T> forward(Tape<T>* tape, const Tensor<T>& x, Mode mode) {
    if (x.rank() != 3 || x.dim(1) != 3 || x.dim(2) != spec.n_points)
      throw std::invalid_argument("segmenter: want [B,3," + std::to_string(spec.n_points) +
                                  "], got " + shape_str(x.shape()));
    MultiResFeature<T> f = lift_to_multires(tape, x, spec.k);
    std::vector<MultiResFeature<T>> skips;
    for (auto& block : enc_blocks) {
      f = block.forward(tape, f, mode);
      skips.push_back(f);
    }
    const std::size_t depth = enc_blocks.size();
    for (std::size_t i = 0; i < depth; ++i) {
      if (spec.use_skips && i > 0) {
        const MultiResFeature<T>& skip = skips[depth - 1 - i];
        MultiResFeature<T> merged;
        merged.k = f.k;
        merged.f0 = concat_channels(tape, std::vector<Tensor<T>>{f.f0, skip.f0});
        merged.f1 = concat_channels(tape, std::vector<Tensor<T>>{f.f1, skip.f1});
        merged.f2 = concat_channels(tape, std::vector<Tensor<T>>{f.f2, skip.f2});
        f = merged;
      }
      f = dec_blocks[i].forward(tape, f, mode);
    }
    Tensor<T> scores = head.forward(tape, f.f0);  // [B,P,N]
    return transpose_cl(tape, scores);            // [B,N,P]
  }

  std::vector<NamedParam<T>> params() {
    std::vector<NamedParam<T>> out;
    for (std::size_t i = 0; i < enc_blocks.size(); ++i)
      enc_blocks[i].collect("enc.b" + std::to_string(i), out);
    for (std::size_t i = 0; i < dec_blocks.size(); ++i)
      dec_blocks[i].collect("dec.b" + std::to_string(i), out);
    out.push_back({"head.w", head.w});
    out.push_back({"head.b", head.b});
    return out;
  }

  std::vector<std::pair<std::string, BatchNorm1d<T>*>> bns() {
    std::vector<std::pair<std::string, BatchNorm1d<T>*>> out;
    for (std::size_t i = 0; i < enc_blocks.size(); ++i)
      enc_blocks[i].collect_bns("enc.b" + std::to_string(i), out);
    for (std::size_t i = 0; i < dec_blocks.size(); ++i)
      dec_blocks[i].collect_bns("dec.b" + std::to_string(i), out);
    return out;
  }
};

template <typename T>
std::size_t parameter_count(std::vector<NamedParam<T>> params) {
  std::size_t n = 0;
  for (const auto& p : params) n += p.tensor.numel();
  return n;
}

// ---------------------------------------------------------------------------
// Unsupervised features for the linear probe: pool the first three encoder
// layers' streams by 128/64/32 (clamped to the stream length), upsample the
// two coarser streams to match, and concatenate everything into one vector.
// ---------------------------------------------------------------------------

template <typename T>
Tensor<T> extract_unsup_features(MrEncoder<T>& enc, const Tensor<T>& x) {
  std::vector<MultiResFeature<T>> features;
  enc.forward(nullptr, x, Mode::eval, &features);
  static const std::size_t pool_sizes[3] = {128, 64, 32};
  const std::size_t B = x.dim(0);
  std::vector<Tensor<T>> pieces;
  for (int layer = 1; layer <= 3; ++layer) {  // outputs of the first three blocks
    const MultiResFeature<T>& f = features[static_cast<std::size_t>(layer)];
    const Tensor<T>* streams[3] = {&f.f0, &f.f1, &f.f2};
    std::array<Tensor<T>, 3> pooled;
    for (int s = 0; s < 3; ++s) {
      const std::size_t len = streams[s]->dim(2);
      pooled[s] = avg_pool1d<T>(nullptr, *streams[s], std::min(pool_sizes[layer - 1], len));
    }
    const std::size_t target = pooled[0].dim(2);
    for (int s = 1; s < 3; ++s)
      pooled[s] = nn_upsample<T>(nullptr, pooled[s], target / pooled[s].dim(2));
    Tensor<T> cat =
        concat_channels<T>(nullptr, std::vector<Tensor<T>>{pooled[0], pooled[1], pooled[2]});
    pieces.push_back(reshape<T>(nullptr, cat, {B, cat.dim(1) * cat.dim(2), std::size_t{1}}));
  }
  Tensor<T> all = concat_channels<T>(nullptr, pieces);
  return reshape<T>(nullptr, all, {B, all.dim(1)});
}

}  // namespace mrt
