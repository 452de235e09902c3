#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "mrt/gradcheck.hpp"
#include "mrt/losses.hpp"
#include "mrt/multires.hpp"
#include "mrt/rng.hpp"

using namespace mrt;

namespace {

template <typename T>
Tensor<T> random_tensor(std::vector<std::size_t> shape, Rng& rng, double lo = -1, double hi = 1) {
  Tensor<T> t = Tensor<T>::zeros(std::move(shape));
  for (std::size_t i = 0; i < t.numel(); ++i) t.at(i) = static_cast<T>(rng.uniform(lo, hi));
  return t;
}

NetworkSpec desk_vae_spec() {
  NetworkSpec s;
  s.task = Task::vae;
  s.k = 4;
  s.n_points = 256;
  s.n_out = 256;
  s.latent_dim = 32;
  s.seed_channels = 16;
  s.head_filters = 16;
  s.enc_filters = {8, 8, 16, 16, 16, 16, 16, 16};
  s.dec_filters = {16, 16, 16, 16};
  return s;
}

}  // namespace

TEST_CASE("lift_to_multires") {
  Rng rng(61);
  Tensor<double> x = random_tensor<double>({2, 3, 16}, rng);
  MultiResFeature<double> f = lift_to_multires<double>(nullptr, x, 4);
  CHECK(f.lengths() == std::array<std::size_t, 3>{16, 4, 1});

  // f2 is exactly avg_pool(f1, k): nested means with equal windows
  Tensor<double> nested = avg_pool1d<double>(nullptr, f.f1, 4);
  CHECK(nested.values() == f.f2.values());

  // constant input lifts to three constant streams
  Tensor<double> ones = Tensor<double>::zeros({1, 2, 16});
  for (std::size_t i = 0; i < ones.numel(); ++i) ones.at(i) = 1.0;
  MultiResFeature<double> fc = lift_to_multires<double>(nullptr, ones, 4);
  for (double v : fc.f1.values()) CHECK(v == 1.0);
  for (double v : fc.f2.values()) CHECK(v == 1.0);

  CHECK_THROWS_AS(lift_to_multires<double>(nullptr, x, 8), std::invalid_argument);
}

TEST_CASE("mr_combine channel and length contract") {
  Rng rng(62);
  // the worked example: C=4, L=64, k=4
  {
    MultiResFeature<double> f;
    f.k = 4;
    f.f0 = random_tensor<double>({1, 4, 64}, rng);
    f.f1 = random_tensor<double>({1, 4, 16}, rng);
    f.f2 = random_tensor<double>({1, 4, 4}, rng);
    auto out = mr_combine<double>(nullptr, f);
    CHECK(out[0].shape() == std::vector<std::size_t>{1, 8, 64});
    CHECK(out[1].shape() == std::vector<std::size_t>{1, 12, 16});
    CHECK(out[2].shape() == std::vector<std::size_t>{1, 8, 4});
  }
  // (2C, 3C, 2C) and (L, L/k, L/k^2) for k in {2,4,8}, C in {1,16}
  for (std::size_t k : {2u, 4u, 8u})
    for (std::size_t C : {1u, 16u}) {
      const std::size_t L = k * k * 2;
      MultiResFeature<double> f;
      f.k = k;
      f.f0 = random_tensor<double>({2, C, L}, rng);
      f.f1 = random_tensor<double>({2, C, L / k}, rng);
      f.f2 = random_tensor<double>({2, C, L / (k * k)}, rng);
      auto out = mr_combine<double>(nullptr, f);
      CHECK(out[0].shape() == std::vector<std::size_t>{2, 2 * C, L});
      CHECK(out[1].shape() == std::vector<std::size_t>{2, 3 * C, L / k});
      CHECK(out[2].shape() == std::vector<std::size_t>{2, 2 * C, L / (k * k)});
    }
}

TEST_CASE("mr_combine propagates constants") {
  // pool and upsample both fix constants, so f'1 is all ones in 3C channels
  MultiResFeature<double> f;
  f.k = 4;
  f.f0 = Tensor<double>::zeros({1, 4, 64});
  f.f1 = Tensor<double>::zeros({1, 4, 16});
  f.f2 = Tensor<double>::zeros({1, 4, 4});
  for (auto* t : {&f.f0, &f.f1, &f.f2})
    for (std::size_t i = 0; i < t->numel(); ++i) t->at(i) = 1.0;
  auto out = mr_combine<double>(nullptr, f);
  for (double v : out[1].values()) CHECK(v == 1.0);
  CHECK(out[1].dim(1) == 12);
}

TEST_CASE("mr_combine gradient is exact") {
  Rng rng(63);
  Tensor<double> x = random_tensor<double>({1, 2, 16}, rng);
  auto f = [](Tape<double>* t, Tensor<double>& v) {
    MultiResFeature<double> mf = lift_to_multires(t, v, std::size_t{4});
    auto out = mr_combine(t, mf);
    Tensor<double> s = add(t, add(t, sum(t, mul(t, out[0], out[0])),
                                  sum(t, mul(t, out[1], out[1]))),
                           sum(t, mul(t, out[2], out[2])));
    return s;
  };
  CHECK(finite_diff_check<double>(f, x) < 1e-6);
}

TEST_CASE("mr_conv block halves every stream and applies the filter count") {
  Rng rng(64);
  MrBlock<double> block(16, 32,
                        {StreamMode::halve, StreamMode::halve, StreamMode::halve}, rng);
  MultiResFeature<double> f;
  f.k = 8;
  f.f0 = random_tensor<double>({1, 16, 1024}, rng);
  f.f1 = random_tensor<double>({1, 16, 128}, rng);
  f.f2 = random_tensor<double>({1, 16, 16}, rng);
  auto out = block.forward(nullptr, f, Mode::eval);
  CHECK(out.f0.shape() == std::vector<std::size_t>{1, 32, 512});
  CHECK(out.f1.shape() == std::vector<std::size_t>{1, 32, 64});
  CHECK(out.f2.shape() == std::vector<std::size_t>{1, 32, 8});
}

TEST_CASE("mr_conv_t block doubles every stream") {
  Rng rng(65);
  MrBlock<double> block(512, 512, {StreamMode::grow, StreamMode::grow, StreamMode::grow}, rng);
  MultiResFeature<double> f;
  f.k = 4;
  f.f0 = random_tensor<double>({1, 512, 16}, rng);
  f.f1 = random_tensor<double>({1, 512, 4}, rng);
  f.f2 = random_tensor<double>({1, 512, 1}, rng);
  auto out = block.forward(nullptr, f, Mode::eval);
  CHECK(out.f0.shape() == std::vector<std::size_t>{1, 512, 32});
  CHECK(out.f1.shape() == std::vector<std::size_t>{1, 512, 8});
  CHECK(out.f2.shape() == std::vector<std::size_t>{1, 512, 2});
}

TEST_CASE("mr blocks pass the gradient oracle with eval BN") {
  Rng rng(66);
  MrBlock<double> conv_block(2, 3, {StreamMode::halve, StreamMode::halve, StreamMode::halve},
                             rng);
  // bias the BN shifts so relu inputs stay away from the kink
  for (int s = 0; s < 3; ++s)
    for (std::size_t i = 0; i < conv_block.bn[s].beta.numel(); ++i)
      conv_block.bn[s].beta.at(i) = 0.7;
  Tensor<double> x = random_tensor<double>({1, 2, 32}, rng);
  auto f = [&](Tape<double>* t, Tensor<double>& v) {
    MultiResFeature<double> mf = lift_to_multires(t, v, std::size_t{4});
    auto out = conv_block.forward(t, mf, Mode::eval);
    return add(t, add(t, sum(t, mul(t, out.f0, out.f0)), sum(t, mul(t, out.f1, out.f1))),
               sum(t, mul(t, out.f2, out.f2)));
  };
  CHECK(finite_diff_check<double>(f, x) < 1e-4);

  MrBlock<double> t_block(2, 3, {StreamMode::grow, StreamMode::grow, StreamMode::grow}, rng);
  for (int s = 0; s < 3; ++s)
    for (std::size_t i = 0; i < t_block.bn[s].beta.numel(); ++i)
      t_block.bn[s].beta.at(i) = 0.7;
  auto g = [&](Tape<double>* t, Tensor<double>& v) {
    MultiResFeature<double> mf = lift_to_multires(t, v, std::size_t{4});
    auto out = t_block.forward(t, mf, Mode::eval);
    return add(t, add(t, sum(t, mul(t, out.f0, out.f0)), sum(t, mul(t, out.f1, out.f1))),
               sum(t, mul(t, out.f2, out.f2)));
  };
  CHECK(finite_diff_check<double>(g, x) < 1e-4);
}

TEST_CASE("composing D blocks reduces f0 from 2^D to 1 with the collapse rule") {
  Rng rng(67);
  const std::size_t N = 64, k = 4, D = 6;
  const auto lens = encoder_lengths(N, k, D);
  CHECK(lens.front() == std::array<std::size_t, 3>{64, 16, 4});
  CHECK(lens.back() == std::array<std::size_t, 3>{1, 1, 1});

  MultiResFeature<double> f;
  f.k = k;
  f.f0 = random_tensor<double>({1, 2, 64}, rng);
  f.f1 = random_tensor<double>({1, 2, 16}, rng);
  f.f2 = random_tensor<double>({1, 2, 4}, rng);
  std::size_t c_in = 2;
  for (std::size_t d = 0; d < D; ++d) {
    std::array<StreamMode, 3> modes;
    for (int s = 0; s < 3; ++s)
      modes[s] = lens[d][s] > 1 ? StreamMode::halve : StreamMode::frozen;
    MrBlock<double> block(c_in, 4, modes, rng);
    f = block.forward(nullptr, f, Mode::eval);
    CHECK(f.lengths() == lens[d + 1]);
    CHECK(f.f0.dim(2) == N >> (d + 1));  // f0 halves every block
    c_in = 4;
  }
  CHECK(f.lengths() == std::array<std::size_t, 3>{1, 1, 1});
}

TEST_CASE("classifier filter schedule doubles from 16 and caps at 1024") {
  NetworkSpec s;
  s.task = Task::classifier;
  s.n_points = 1024;
  CHECK(s.encoder_filters() ==
        std::vector<std::size_t>{16, 32, 64, 128, 256, 512, 1024, 1024, 1024, 1024});

  NetworkSpec seg;
  seg.task = Task::segmenter;
  seg.n_points = 4096;
  CHECK(seg.encoder_filters() == std::vector<std::size_t>{32, 32, 32, 64, 64, 64, 128, 256, 512,
                                                          1024, 1024, 1024});

  NetworkSpec dec;
  dec.task = Task::decoder;
  dec.n_out = 4096;
  CHECK(dec.decoder_filters() == std::vector<std::size_t>{512, 512, 256, 256, 128, 64, 64, 64});
  dec.n_out = 256;
  CHECK(dec.decoder_filters() == std::vector<std::size_t>{128, 64, 64, 64});

  NetworkSpec quarters;
  quarters.task = Task::classifier;
  quarters.n_points = 1024;
  quarters.variant = Variant::filters4;
  CHECK(quarters.encoder_filters() ==
        std::vector<std::size_t>{4, 8, 16, 32, 64, 128, 256, 256, 256, 256});
}

TEST_CASE("classifier maps [B,3,1024] to [B,40] logits through 10 blocks") {
  NetworkSpec s;
  s.task = Task::classifier;
  s.k = 8;
  s.n_points = 1024;
  s.n_classes = 40;
  Rng rng(68);
  Classifier<float> net(s, rng);
  CHECK(net.enc.blocks.size() == 10);
  Tensor<float> x = random_tensor<float>({1, 3, 1024}, rng, -0.5, 0.5);
  Tensor<float> logits = net.forward(nullptr, x, Mode::eval);
  CHECK(logits.shape() == std::vector<std::size_t>{1, 40});

  // eval-mode forward is a deterministic function: bit-for-bit agreement
  Tensor<float> again = net.forward(nullptr, x, Mode::eval);
  CHECK(logits.values() == again.values());
}

TEST_CASE("networks map declared input shapes to declared output shapes for B in {1,2,5}") {
  NetworkSpec s = desk_vae_spec();
  Rng rng(69);
  Vae<float> vae(s, rng);

  NetworkSpec cs;
  cs.task = Task::classifier;
  cs.k = 8;
  cs.n_points = 256;
  cs.n_classes = 3;
  cs.latent_dim = 64;
  cs.enc_filters = {8, 8, 16, 16, 16, 16, 16, 16};
  Classifier<float> cls(cs, rng);

  for (std::size_t B : {1u, 2u, 5u}) {
    Tensor<float> x = random_tensor<float>({B, 3, 256}, rng, -0.5, 0.5);
    Tensor<float> z = vae.encode(nullptr, x, Mode::eval);
    CHECK(z.shape() == std::vector<std::size_t>{B, 32});
    auto dec = vae.decode(nullptr, z, Mode::eval);
    CHECK(dec.points.shape() == std::vector<std::size_t>{B, 256, 3});
    CHECK(cls.forward(nullptr, x, Mode::eval).shape() == std::vector<std::size_t>{B, 3});
  }
}

TEST_CASE("decoder output stays inside the tanh range") {
  NetworkSpec s = desk_vae_spec();
  Rng rng(70);
  Vae<float> vae(s, rng);
  Tensor<float> z = random_tensor<float>({2, 32}, rng, -2, 2);
  auto dec = vae.decode(nullptr, z, Mode::eval);
  for (std::size_t i = 0; i < dec.points.numel(); ++i) {
    CHECK(dec.points.at(i) > -1.0f);
    CHECK(dec.points.at(i) < 1.0f);
  }
}

TEST_CASE("decoder chamfer gradient wrt z passes finite differences end to end") {
  NetworkSpec s = desk_vae_spec();
  s.n_out = 64;
  s.dec_filters = {8, 8};
  Rng rng(71);
  Vae<double> vae(s, rng);
  Tensor<double> target = random_tensor<double>({1, 64, 3}, rng, -0.4, 0.4);
  Tensor<double> z = random_tensor<double>({1, 32}, rng, -1, 1);
  auto f = [&](Tape<double>* t, Tensor<double>& v) {
    auto dec = vae.decode(t, v, Mode::eval);
    return chamfer(t, dec.points, target);
  };
  CHECK(finite_diff_check<double>(f, z, 1e-6) < 1e-3);
}

TEST_CASE("vae encoding is deterministic: no sampling inside Q") {
  NetworkSpec s = desk_vae_spec();
  Rng rng(72);
  Vae<float> vae(s, rng);
  Tensor<float> x = random_tensor<float>({2, 3, 256}, rng, -0.5, 0.5);
  Tensor<float> z1 = vae.encode(nullptr, x, Mode::eval);
  Tensor<float> z2 = vae.encode(nullptr, x, Mode::eval);
  CHECK(z1.values() == z2.values());
}

TEST_CASE("one optimizer step on a single cloud decreases the vae loss") {
  NetworkSpec s = desk_vae_spec();
  Rng rng(73);
  Vae<double> vae(s, rng);
  auto params = vae.params();
  AdamState<double> adam;
  adam.lr = 1e-3;
  adam.init(params);
  VAELossConfig cfg;
  cfg.lambda = 0.1;

  Tensor<double> x = random_tensor<double>({4, 3, 256}, rng, -0.5, 0.5);
  Tensor<double> target = transpose_cl<double>(nullptr, x);

  auto run = [&](Tape<double>* tape) {
    Tensor<double> z = vae.encode(tape, x, Mode::train);
    auto dec = vae.decode(tape, z, Mode::train);
    return vae_total_loss(tape, target, dec.points, z, cfg, 99);
  };

  Tape<double> tape;
  auto before = run(&tape);
  for (auto& p : params) p.tensor.zero_grad();
  tape.backward(before.total);
  adam.step(params);

  auto after = run(nullptr);
  CHECK(after.total.item() < before.total.item());
}

TEST_CASE("segmenter emits per-point scores and the skip ablation changes outputs") {
  NetworkSpec s;
  s.task = Task::segmenter;
  s.k = 4;
  s.n_points = 256;
  s.n_classes = 5;
  s.enc_filters = {8, 8, 8, 16, 16, 16, 16, 16};
  Rng rng(74);
  Segmenter<float> seg(s, rng);
  Tensor<float> x = random_tensor<float>({2, 3, 256}, rng, -0.5, 0.5);
  Tensor<float> scores = seg.forward(nullptr, x, Mode::eval);
  CHECK(scores.shape() == std::vector<std::size_t>{2, 256, 5});

  // same weights, skips off: outputs must differ
  NetworkSpec s2 = s;
  s2.use_skips = false;
  Rng rng2(74);
  Segmenter<float> seg_no_skips(s2, rng2);
  // parameter shapes differ (no skip channels), so compare behaviour instead:
  // the skipless model is its own network; outputs should not coincide
  Tensor<float> scores2 = seg_no_skips.forward(nullptr, x, Mode::eval);
  CHECK(scores2.shape() == scores.shape());
  bool any_diff = false;
  for (std::size_t i = 0; i < scores.numel() && !any_diff; ++i)
    any_diff = scores.at(i) != scores2.at(i);
  CHECK(any_diff);
}

TEST_CASE("segmenter paper-scale output shape [B,4096,50]") {
  NetworkSpec s;
  s.task = Task::segmenter;
  s.k = 4;
  s.n_points = 4096;
  s.n_classes = 50;
  s.filter_cap = 64;  // cap scaled down; the shape contract is unaffected
  Rng rng(75);
  Segmenter<float> seg(s, rng);
  Tensor<float> x = random_tensor<float>({1, 3, 4096}, rng, -0.5, 0.5);
  CHECK(seg.forward(nullptr, x, Mode::eval).shape() == std::vector<std::size_t>{1, 4096, 50});
}

TEST_CASE("full decoder chain: 16 seed positions reach 4096 outputs in 8 blocks") {
  NetworkSpec s;
  s.task = Task::decoder;
  s.k = 4;
  s.n_out = 4096;
  s.latent_dim = 64;
  s.seed_channels = 32;
  s.dec_filters = {32, 32, 16, 16, 8, 8, 8, 8};
  s.head_filters = 8;
  Rng rng(76);
  MrDecoder<float> dec(s, rng);
  CHECK(dec.blocks.size() == 8);
  Tensor<float> z = random_tensor<float>({1, 64}, rng);
  auto out = dec.forward(nullptr, z, Mode::eval);
  CHECK(out.points.shape() == std::vector<std::size_t>{1, 4096, 3});
}

TEST_CASE("fc decoder baseline emits [B,4096,3] from 3 hidden layers") {
  NetworkSpec s;
  s.task = Task::decoder;
  s.n_out = 4096;
  s.latent_dim = 64;
  s.variant = Variant::fc_decoder;
  Rng rng(77);
  FcDecoder<float> fc(s, rng);
  CHECK(fc.hidden == 4096);
  CHECK(fc.hidden_layers.size() == 3);
  Tensor<float> z = random_tensor<float>({2, 64}, rng);
  auto out = fc.forward(nullptr, z, Mode::eval);
  CHECK(out.points.shape() == std::vector<std::size_t>{2, 4096, 3});
  for (std::size_t i = 0; i < out.points.numel(); ++i) {
    CHECK(out.points.at(i) >= -1.0f);
    CHECK(out.points.at(i) <= 1.0f);
  }
}

TEST_CASE("probe features are deterministic with a fixed dimensionality") {
  NetworkSpec s = desk_vae_spec();
  s.enc_filters = {16, 32, 64, 64, 64, 64, 64, 64};
  Rng rng(78);
  Vae<float> vae(s, rng);
  Tensor<float> x = random_tensor<float>({2, 3, 256}, rng, -0.5, 0.5);
  Tensor<float> f1 = extract_unsup_features(vae.mr_enc, x);
  Tensor<float> f2 = extract_unsup_features(vae.mr_enc, x);
  // with all pooled lengths clamped to 1 at this scale: 3*(16+32+64) = 336
  CHECK(f1.shape() == std::vector<std::size_t>{2, 336});
  CHECK(f1.values() == f2.values());
}

TEST_CASE("parameter accounting across variants") {
  NetworkSpec full;
  full.task = Task::classifier;
  full.k = 8;
  full.n_points = 256;
  full.n_classes = 3;
  Rng rng(79);
  Classifier<float> mr_full(full, rng);

  NetworkSpec quarter = full;
  quarter.variant = Variant::filters4;
  Rng rng2(79);
  Classifier<float> mr_quarter(quarter, rng2);

  NetworkSpec sr = full;
  sr.variant = Variant::single_res;
  Rng rng3(79);
  Classifier<float> sr_full(sr, rng3);

  const std::size_t n_full = parameter_count(mr_full.params());
  const std::size_t n_quarter = parameter_count(mr_quarter.params());
  const std::size_t n_sr = parameter_count(sr_full.params());

  // filters/4 divides channel products by ~16 in conv weights
  CHECK(n_quarter < n_full / 10);

  // An MR-CONV block has 7x the conv weights of a single-stream block at the
  // same schedule (inputs 2C+3C+2C vs C), so dividing filters by 4 lands the
  // MR model near 7/16 of the single-resolution model, not at parity.
  const double ratio = static_cast<double>(n_quarter) / static_cast<double>(n_sr);
  CHECK(ratio > 0.25);
  CHECK(ratio < 0.75);
  CHECK(n_quarter < n_sr);
}
