#pragma once

#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "mrt/checkpoint.hpp"
#include "mrt/config.hpp"
#include "mrt/data_io.hpp"
#include "mrt/losses.hpp"
#include "mrt/metrics.hpp"
#include "mrt/multires.hpp"
#include "mrt/spatial_sort.hpp"

namespace mrt {

// ---------------------------------------------------------------------------
// Datasets
// ---------------------------------------------------------------------------

struct Dataset {
  std::vector<LabeledCloud> train;
  std::vector<LabeledCloud> test;
  std::map<int, std::vector<int>> category_sets;  // part labels per category
  std::size_t n_classes = 0;
};

inline std::vector<SynthKind> parse_synth_kinds(const std::string& csv) {
  std::vector<SynthKind> kinds;
  std::istringstream is(csv);
  std::string tok;
  while (std::getline(is, tok, ',')) {
    if (tok == "sphere") kinds.push_back(SynthKind::sphere);
    else if (tok == "cube") kinds.push_back(SynthKind::cube);
    else if (tok == "torus") kinds.push_back(SynthKind::torus);
    else if (tok == "chair") kinds.push_back(SynthKind::two_part_chair);
    else throw std::invalid_argument("unknown synthetic kind '" + tok + "'");
  }
  if (kinds.empty()) throw std::invalid_argument("empty synthetic kind list");
  return kinds;
}

// dataset = "synth:<kind,...>" or "mesh:<dir>" (per-class subdirectories, or a
// flat directory of .off/.obj files treated as one class)
inline Dataset load_dataset(const RunConfig& cfg) {
  Dataset ds;
  std::vector<LabeledCloud> all;
  if (cfg.dataset.rfind("synth:", 0) == 0) {
    const auto kinds = parse_synth_kinds(cfg.dataset.substr(6));
    all = synth_dataset(kinds, cfg.count, cfg.n_points, cfg.seed_data);
    ds.n_classes = kinds.size();
    for (std::size_t k = 0; k < kinds.size(); ++k)
      if (kinds[k] == SynthKind::two_part_chair) ds.category_sets[static_cast<int>(k)] = {0, 1};
  } else if (cfg.dataset.rfind("mesh:", 0) == 0) {
    namespace fs = std::filesystem;
    const fs::path root(cfg.dataset.substr(5));
    if (!fs::is_directory(root)) throw std::runtime_error("not a directory: " + root.string());
    std::vector<fs::path> class_dirs;
    for (const auto& e : fs::directory_iterator(root))
      if (e.is_directory()) class_dirs.push_back(e.path());
    std::sort(class_dirs.begin(), class_dirs.end());
    if (class_dirs.empty()) class_dirs.push_back(root);
    std::uint64_t file_idx = 0;
    for (std::size_t c = 0; c < class_dirs.size(); ++c) {
      std::vector<fs::path> files;
      for (const auto& e : fs::directory_iterator(class_dirs[c])) {
        const std::string ext = e.path().extension().string();
        if (ext == ".off" || ext == ".obj") files.push_back(e.path());
      }
      std::sort(files.begin(), files.end());
      for (const auto& f : files) {
        const MeshFormat fmt = f.extension() == ".off" ? MeshFormat::off : MeshFormat::obj;
        Mesh mesh = load_mesh(f.string(), fmt);
        LabeledCloud lc;
        lc.cloud = normalize_cloud(
            sample_surface(mesh, cfg.n_points, mix_seed(cfg.seed_data, file_idx++)).points);
        lc.label = static_cast<int>(c);
        lc.category = static_cast<int>(c);
        all.push_back(std::move(lc));
      }
    }
    ds.n_classes = class_dirs.size();
  } else {
    throw std::invalid_argument("dataset must be synth:<kinds> or mesh:<dir>");
  }

  // stratified split, deterministic in the data seed
  std::map<int, std::vector<std::size_t>> by_label;
  for (std::size_t i = 0; i < all.size(); ++i) by_label[all[i].label].push_back(i);
  for (auto& [label, idx] : by_label) {
    Rng rng(mix_seed(cfg.seed_data, 0x517a + static_cast<std::uint64_t>(label)));
    for (std::size_t i = idx.size(); i > 1; --i) std::swap(idx[i - 1], idx[rng.below(i)]);
    const std::size_t n_train =
        static_cast<std::size_t>(std::ceil(cfg.train_fraction * static_cast<double>(idx.size())));
    for (std::size_t i = 0; i < idx.size(); ++i)
      (i < n_train ? ds.train : ds.test).push_back(all[idx[i]]);
  }
  return ds;
}

// ---------------------------------------------------------------------------
// Model bundle: network + optimizer + ordering state for one run
// ---------------------------------------------------------------------------

template <typename T>
struct ModelBundle {
  NetworkSpec spec;
  Classifier<T> classifier;
  Vae<T> vae;
  Segmenter<T> segmenter;
  AxisSet rp_axes;  // shared rp-tree directions (segmenter ordering)
  AdamState<T> adam;
  int epoch = 0;

  std::vector<NamedParam<T>> params() {
    switch (spec.task) {
      case Task::classifier: return classifier.params();
      case Task::vae:
      case Task::decoder: return vae.params();
      case Task::segmenter: return segmenter.params();
    }
    return {};
  }

  std::vector<std::pair<std::string, BatchNorm1d<T>*>> bns() {
    switch (spec.task) {
      case Task::classifier: return classifier.bns();
      case Task::vae:
      case Task::decoder: return vae.bns();
      case Task::segmenter: return segmenter.bns();
    }
    return {};
  }
};

template <typename T>
ModelBundle<T> build_model(const NetworkSpec& spec, std::uint64_t seed_init,
                           std::uint64_t seed_tree) {
  ModelBundle<T> m;
  m.spec = spec;
  Rng rng(seed_init);
  switch (spec.task) {
    case Task::classifier: m.classifier = Classifier<T>(spec, rng); break;
    case Task::vae:
    case Task::decoder: m.vae = Vae<T>(spec, rng); break;
    case Task::segmenter: m.segmenter = Segmenter<T>(spec, rng); break;
  }
  m.rp_axes = AxisSet::random(NetworkSpec::log2_of(spec.n_points), mix_seed(seed_tree, 0xa7e5));
  m.adam.init(m.params());
  return m;
}

// ---------------------------------------------------------------------------
// Checkpoint glue
// ---------------------------------------------------------------------------

template <typename T>
CheckpointData to_checkpoint(ModelBundle<T>& m) {
  CheckpointData ck;
  ck.spec = m.spec;
  ck.epoch = m.epoch;
  ck.adam_lr = m.adam.lr;
  ck.adam_beta1 = m.adam.beta1;
  ck.adam_beta2 = m.adam.beta2;
  ck.adam_epsilon = m.adam.epsilon;
  ck.adam_steps = m.adam.step_count;

  auto params = m.params();
  for (std::size_t p = 0; p < params.size(); ++p) {
    CheckpointEntry e;
    e.name = params[p].name;
    e.shape = params[p].tensor.shape();
    e.data.reserve(params[p].tensor.numel());
    for (std::size_t i = 0; i < params[p].tensor.numel(); ++i)
      e.data.push_back(static_cast<float>(params[p].tensor.at(i)));
    ck.entries.push_back(std::move(e));

    CheckpointEntry em, ev;
    em.name = params[p].name + ".adam_m";
    ev.name = params[p].name + ".adam_v";
    em.shape = ev.shape = params[p].tensor.shape();
    for (double v : m.adam.m[p]) em.data.push_back(static_cast<float>(v));
    for (double v : m.adam.v[p]) ev.data.push_back(static_cast<float>(v));
    ck.entries.push_back(std::move(em));
    ck.entries.push_back(std::move(ev));
  }
  for (auto& [name, bn] : m.bns()) {
    CheckpointEntry mean_e, var_e;
    mean_e.name = name + ".running_mean";
    var_e.name = name + ".running_var";
    mean_e.shape = var_e.shape = {bn->running_mean.size()};
    for (double v : bn->running_mean) mean_e.data.push_back(static_cast<float>(v));
    for (double v : bn->running_var) var_e.data.push_back(static_cast<float>(v));
    ck.entries.push_back(std::move(mean_e));
    ck.entries.push_back(std::move(var_e));
  }
  {
    CheckpointEntry axes;
    axes.name = "aux.rp_axes";
    axes.shape = {m.rp_axes.axes.size(), 3};
    for (const auto& a : m.rp_axes.axes)
      for (double v : a) axes.data.push_back(static_cast<float>(v));
    ck.entries.push_back(std::move(axes));
  }
  return ck;
}

template <typename T>
ModelBundle<T> from_checkpoint(const CheckpointData& ck) {
  ModelBundle<T> m = build_model<T>(ck.spec, 0, 0);
  m.epoch = ck.epoch;
  m.adam.lr = ck.adam_lr;
  m.adam.beta1 = ck.adam_beta1;
  m.adam.beta2 = ck.adam_beta2;
  m.adam.epsilon = ck.adam_epsilon;
  m.adam.step_count = ck.adam_steps;

  auto params = m.params();
  m.adam.m.assign(params.size(), {});
  m.adam.v.assign(params.size(), {});
  for (std::size_t p = 0; p < params.size(); ++p) {
    const CheckpointEntry* e = ck.find(params[p].name);
    if (!e) throw std::runtime_error("checkpoint missing parameter '" + params[p].name + "'");
    if (e->shape != params[p].tensor.shape())
      throw std::runtime_error("checkpoint shape mismatch for '" + params[p].name + "'");
    for (std::size_t i = 0; i < e->data.size(); ++i)
      params[p].tensor.at(i) = static_cast<T>(e->data[i]);
    const CheckpointEntry* em = ck.find(params[p].name + ".adam_m");
    const CheckpointEntry* ev = ck.find(params[p].name + ".adam_v");
    m.adam.m[p].assign(params[p].tensor.numel(), 0.0);
    m.adam.v[p].assign(params[p].tensor.numel(), 0.0);
    if (em)
      for (std::size_t i = 0; i < em->data.size(); ++i) m.adam.m[p][i] = em->data[i];
    if (ev)
      for (std::size_t i = 0; i < ev->data.size(); ++i) m.adam.v[p][i] = ev->data[i];
  }
  for (auto& [name, bn] : m.bns()) {
    const CheckpointEntry* mean_e = ck.find(name + ".running_mean");
    const CheckpointEntry* var_e = ck.find(name + ".running_var");
    if (mean_e)
      for (std::size_t i = 0; i < mean_e->data.size(); ++i) bn->running_mean[i] = mean_e->data[i];
    if (var_e)
      for (std::size_t i = 0; i < var_e->data.size(); ++i) bn->running_var[i] = var_e->data[i];
  }
  if (const CheckpointEntry* axes = ck.find("aux.rp_axes")) {
    m.rp_axes.axes.clear();
    for (std::size_t i = 0; i + 3 <= axes->data.size(); i += 3)
      m.rp_axes.axes.push_back(
          {axes->data[i], axes->data[i + 1], axes->data[i + 2]});
  }
  return m;
}

// ---------------------------------------------------------------------------
// Batch assembly
// ---------------------------------------------------------------------------

template <typename T>
Tensor<T> clouds_to_tensor(const std::vector<SortedCloud>& sorted) {
  const std::size_t B = sorted.size();
  const std::size_t N = sorted[0].order.size();
  Tensor<T> x = Tensor<T>::zeros({B, 3, N});
  for (std::size_t b = 0; b < B; ++b)
    for (std::size_t i = 0; i < N; ++i) {
      const Point3 p = sorted[b].sorted_point(i);
      x.at(b, 0, i) = static_cast<T>(p[0]);
      x.at(b, 1, i) = static_cast<T>(p[1]);
      x.at(b, 2, i) = static_cast<T>(p[2]);
    }
  return x;
}

inline ScaleSampler sampler_from(const RunConfig& cfg) {
  ScaleSampler s;
  s.gaussian = cfg.augment == AugmentMode::gaussian;
  s.stddev = cfg.scale_std;
  return s;
}

// task-appropriate ordering of one (possibly augmented) cloud
inline SortedCloud sort_for_task(const RunConfig& cfg, const AxisSet& rp_axes,
                                 const PointCloud& cloud, std::uint64_t sort_seed) {
  switch (cfg.task) {
    case Task::classifier: return prob_kd_sort(cloud, sort_seed);
    case Task::vae:
    case Task::decoder: return kd_sort(cloud);
    case Task::segmenter: return rp_sort(cloud, rp_axes);
  }
  return kd_sort(cloud);
}

// ---------------------------------------------------------------------------
// Training
// ---------------------------------------------------------------------------

struct LossRow {
  int epoch = 0;
  double loss = 0;     // cross-entropy or total vae loss
  double chamfer = 0;  // vae only
  double reg = 0;      // vae only
  double train_acc = 0;
  double lr = 0;
};

struct TrainResult {
  std::vector<LossRow> curve;
  std::string final_checkpoint;
};

inline void write_loss_csv(const std::string& path, const std::vector<LossRow>& curve) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path);
  out << "epoch,loss,chamfer,reg,train_acc,lr\n";
  out.precision(12);
  for (const auto& r : curve)
    out << r.epoch << "," << r.loss << "," << r.chamfer << "," << r.reg << "," << r.train_acc
        << "," << r.lr << "\n";
}

template <typename T>
TrainResult train_run(const RunConfig& cfg, const Dataset& ds, ModelBundle<T>& model) {
  namespace fs = std::filesystem;
  fs::create_directories(cfg.out_dir);
  cfg.save(cfg.out_dir + "/manifest.cfg");

  auto params = model.params();
  const NNKind nn = cfg.nn_backend == "brute" ? NNKind::brute : NNKind::tree;
  const ScaleSampler sampler = sampler_from(cfg);
  VAELossConfig vae_cfg;
  vae_cfg.lambda = cfg.lambda;
  vae_cfg.delta_scale = cfg.delta_c;
  vae_cfg.latent_dim = static_cast<int>(cfg.latent_dim);

  TrainResult result;
  std::uint64_t global_step = 0;
  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    model.adam.lr = lr_schedule(epoch, cfg.base_lr, cfg.halve_every);

    std::vector<std::size_t> order(ds.train.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    {
      Rng rng(mix_seed(cfg.seed_data, 0xe90c + static_cast<std::uint64_t>(epoch)));
      for (std::size_t i = order.size(); i > 1; --i) std::swap(order[i - 1], order[rng.below(i)]);
    }

    double epoch_loss = 0, epoch_chamfer = 0, epoch_reg = 0;
    std::size_t batches = 0, correct = 0, seen = 0;
    for (std::size_t start = 0; start < order.size(); start += cfg.batch_size, ++global_step) {
      const std::size_t bsz = std::min(cfg.batch_size, order.size() - start);
      std::vector<SortedCloud> sorted;
      std::vector<int> labels;
      std::vector<std::vector<int>> point_labels;
      const std::uint64_t batch_seed = mix_seed(cfg.seed_tree, global_step);
      for (std::size_t j = 0; j < bsz; ++j) {
        const LabeledCloud& lc = ds.train[order[start + j]];
        PointCloud cloud = lc.cloud;
        if (cfg.augment != AugmentMode::none)
          cloud = augment_scale(cloud, sampler,
                                mix_seed(cfg.seed_data, global_step * 131 + j));
        SortedCloud sc = sort_for_task(cfg, model.rp_axes, cloud, mix_seed(batch_seed, j));
        if (!lc.point_labels.empty()) {
          std::vector<int> pl(sc.order.size());
          for (std::size_t i = 0; i < sc.order.size(); ++i) pl[i] = lc.point_labels[sc.order[i]];
          point_labels.push_back(std::move(pl));
        }
        sorted.push_back(std::move(sc));
        labels.push_back(lc.label);
      }
      Tensor<T> x = clouds_to_tensor<T>(sorted);

      Tape<T> tape;
      Tensor<T> loss;
      double chamfer_v = 0, reg_v = 0;
      if (cfg.task == Task::classifier) {
        Tensor<T> logits = model.classifier.forward(&tape, x, Mode::train);
        loss = softmax_cross_entropy(&tape, logits, labels);
        for (std::size_t b = 0; b < bsz; ++b) {
          std::vector<double> row(cfg.n_classes);
          for (std::size_t c = 0; c < cfg.n_classes; ++c)
            row[c] = static_cast<double>(logits.at(b, c));
          if (argmax(row) == static_cast<std::size_t>(labels[b])) ++correct;
        }
        seen += bsz;
      } else if (cfg.task == Task::vae || cfg.task == Task::decoder) {
        Tensor<T> target = transpose_cl<T>(nullptr, x);  // [B,N,3], constant
        Tensor<T> z = model.vae.encode(&tape, x, Mode::train);
        auto dec = model.vae.decode(&tape, z, Mode::train);
        auto parts = vae_total_loss(&tape, target, dec.points, z, vae_cfg,
                                    mix_seed(cfg.seed_noise, global_step), nn);
        loss = parts.total;
        chamfer_v = parts.chamfer_value;
        reg_v = parts.reg_value;
      } else {
        Tensor<T> scores = model.segmenter.forward(&tape, x, Mode::train);  // [B,N,P]
        const std::size_t N = scores.dim(1), P = scores.dim(2);
        Tensor<T> flat = reshape(&tape, scores, {bsz * N, P});
        std::vector<int> flat_labels;
        flat_labels.reserve(bsz * N);
        for (const auto& pl : point_labels)
          flat_labels.insert(flat_labels.end(), pl.begin(), pl.end());
        loss = softmax_cross_entropy(&tape, flat, flat_labels);
      }

      const double loss_v = static_cast<double>(loss.item());
      if (!std::isfinite(loss_v))
        throw std::runtime_error("nan loss at epoch " + std::to_string(epoch) + " step " +
                                 std::to_string(global_step) + " (batch seed " +
                                 std::to_string(batch_seed) + ")");
      for (auto& p : params) p.tensor.zero_grad();
      tape.backward(loss);
      model.adam.step(params);

      epoch_loss += loss_v;
      epoch_chamfer += chamfer_v;
      epoch_reg += reg_v;
      ++batches;
    }

    LossRow row;
    row.epoch = epoch;
    row.loss = epoch_loss / static_cast<double>(batches);
    row.chamfer = epoch_chamfer / static_cast<double>(batches);
    row.reg = epoch_reg / static_cast<double>(batches);
    row.train_acc = seen ? static_cast<double>(correct) / static_cast<double>(seen) : 0.0;
    row.lr = model.adam.lr;
    result.curve.push_back(row);
    model.epoch = epoch + 1;

    to_checkpoint(model).save(cfg.out_dir + "/last.ckpt");
    write_loss_csv(cfg.out_dir + "/loss_curve.csv", result.curve);
  }

  result.final_checkpoint = cfg.out_dir + "/final.ckpt";
  to_checkpoint(model).save(result.final_checkpoint);
  return result;
}

// ---------------------------------------------------------------------------
// Evaluation
// ---------------------------------------------------------------------------

struct ReconRow {
  int category = 0;
  double pred_gt_x100 = 0;
  double gt_pred_x100 = 0;
  double chamfer_x100 = 0;
  std::size_t count = 0;
};

struct EvalReport {
  double accuracy = 0;           // classifier
  std::vector<ReconRow> recon;   // vae/decoder, per category
  ReconRow recon_mean;
  double miou_class = 0, miou_instance = 0;  // segmenter

  std::string text(Task task) const {
    std::ostringstream os;
    os.precision(6);
    if (task == Task::classifier) {
      os << "accuracy = " << accuracy << "\n";
    } else if (task == Task::segmenter) {
      os << "miou_class = " << miou_class << "\n";
      os << "miou_instance = " << miou_instance << "\n";
    } else {
      os << "category,pred_gt_x100,gt_pred_x100,chamfer_x100,count\n";
      for (const auto& r : recon)
        os << r.category << "," << r.pred_gt_x100 << "," << r.gt_pred_x100 << ","
           << r.chamfer_x100 << "," << r.count << "\n";
      os << "mean," << recon_mean.pred_gt_x100 << "," << recon_mean.gt_pred_x100 << ","
         << recon_mean.chamfer_x100 << "," << recon_mean.count << "\n";
    }
    return os.str();
  }
};

inline std::vector<double> softmax_row(const std::vector<double>& logits) {
  double mx = logits[0];
  for (double v : logits) mx = std::max(mx, v);
  double z = 0;
  std::vector<double> out(logits.size());
  for (std::size_t i = 0; i < logits.size(); ++i) {
    out[i] = std::exp(logits[i] - mx);
    z += out[i];
  }
  for (auto& v : out) v /= z;
  return out;
}

// TTA-averaged classification: `tta` scaled versions + fresh orderings per
// shape, mean softmax over versions, then argmax.
template <typename T>
double evaluate_classifier(const RunConfig& cfg, ModelBundle<T>& model,
                           const std::vector<LabeledCloud>& shapes, int tta) {
  ScaleSampler sampler = sampler_from(cfg);
  if (cfg.augment == AugmentMode::none) {
    sampler.gaussian = false;
    sampler.lo = sampler.hi = 1.0;
  }
  std::vector<std::vector<double>> scores;
  std::vector<int> labels;
  for (std::size_t s = 0; s < shapes.size(); ++s) {
    const auto versions =
        tta_orderings(shapes[s].cloud, tta, sampler, mix_seed(cfg.seed_tree, 0xe7a1 + s));
    std::vector<double> mean_probs(cfg.n_classes, 0.0);
    for (const auto& v : versions) {
      Tensor<T> x = clouds_to_tensor<T>({v});
      Tensor<T> logits = model.classifier.forward(nullptr, x, Mode::eval);
      std::vector<double> row(cfg.n_classes);
      for (std::size_t c = 0; c < cfg.n_classes; ++c) row[c] = static_cast<double>(logits.at(0, c));
      const auto probs = softmax_row(row);
      for (std::size_t c = 0; c < cfg.n_classes; ++c) mean_probs[c] += probs[c] / versions.size();
    }
    scores.push_back(std::move(mean_probs));
    labels.push_back(shapes[s].label);
  }
  return classification_accuracy(scores, labels);
}

template <typename T>
EvalReport evaluate_recon(const RunConfig& cfg, ModelBundle<T>& model,
                          const std::vector<LabeledCloud>& shapes) {
  EvalReport rep;
  std::map<int, ReconRow> rows;
  for (const auto& lc : shapes) {
    SortedCloud sc = kd_sort(lc.cloud);
    Tensor<T> x = clouds_to_tensor<T>({sc});
    Tensor<T> z = model.vae.encode(nullptr, x, Mode::eval);
    auto dec = model.vae.decode(nullptr, z, Mode::eval);
    std::vector<Point3> pred(dec.points.dim(1));
    for (std::size_t i = 0; i < pred.size(); ++i)
      pred[i] = {static_cast<double>(dec.points.at(0, i, 0)),
                 static_cast<double>(dec.points.at(0, i, 1)),
                 static_cast<double>(dec.points.at(0, i, 2))};
    const double pg = directional_error(pred, lc.cloud.points) * 100.0;
    const double gp = directional_error(lc.cloud.points, pred) * 100.0;
    ReconRow& row = rows[lc.category];
    row.category = lc.category;
    row.pred_gt_x100 += pg;
    row.gt_pred_x100 += gp;
    row.chamfer_x100 += pg + gp;
    row.count += 1;
  }
  for (auto& [cat, row] : rows) {
    row.pred_gt_x100 /= static_cast<double>(row.count);
    row.gt_pred_x100 /= static_cast<double>(row.count);
    row.chamfer_x100 /= static_cast<double>(row.count);
    rep.recon.push_back(row);
    rep.recon_mean.pred_gt_x100 += row.pred_gt_x100;
    rep.recon_mean.gt_pred_x100 += row.gt_pred_x100;
    rep.recon_mean.chamfer_x100 += row.chamfer_x100;
    rep.recon_mean.count += row.count;
  }
  const double nc = static_cast<double>(rows.size());
  rep.recon_mean.pred_gt_x100 /= nc;
  rep.recon_mean.gt_pred_x100 /= nc;
  rep.recon_mean.chamfer_x100 /= nc;
  return rep;
}

// 16 scaled versions, per-point mean classification score (scores mapped back
// through each version's permutation), category-masked argmax, then mIoU.
template <typename T>
EvalReport evaluate_segmenter(const RunConfig& cfg, ModelBundle<T>& model,
                              const std::vector<LabeledCloud>& shapes,
                              const std::map<int, std::vector<int>>& category_sets, int tta) {
  std::vector<SegmentedShape> segs;
  ScaleSampler sampler;
  sampler.gaussian = false;  // uniform [0.8, 1.2] scale augmentation
  for (std::size_t s = 0; s < shapes.size(); ++s) {
    const LabeledCloud& lc = shapes[s];
    const std::size_t N = lc.cloud.size();
    SegmentedShape seg;
    seg.category = lc.category;
    seg.gt = lc.point_labels;
    seg.scores.assign(N, std::vector<double>(cfg.n_classes, 0.0));
    for (int v = 0; v < tta; ++v) {
      PointCloud cloud = lc.cloud;
      if (v > 0)  // version 0 is the unscaled cloud
        cloud = augment_scale(cloud, sampler, mix_seed(cfg.seed_data, 0x5e6 + s * 64 + v));
      SortedCloud sc = rp_sort(cloud, model.rp_axes);
      Tensor<T> x = clouds_to_tensor<T>({sc});
      Tensor<T> out = model.segmenter.forward(nullptr, x, Mode::eval);  // [1,N,P]
      for (std::size_t slot = 0; slot < N; ++slot) {
        std::vector<double> row(cfg.n_classes);
        for (std::size_t p = 0; p < cfg.n_classes; ++p)
          row[p] = static_cast<double>(out.at(0, slot, p));
        const auto probs = softmax_row(row);
        for (std::size_t p = 0; p < cfg.n_classes; ++p)
          seg.scores[sc.order[slot]][p] += probs[p] / tta;
      }
    }
    segs.push_back(std::move(seg));
  }
  const MiouResult res = miou(segs, category_sets);
  EvalReport rep;
  rep.miou_class = res.mean_class;
  rep.miou_instance = res.mean_instance;
  return rep;
}

template <typename T>
EvalReport evaluate_run(const RunConfig& cfg, ModelBundle<T>& model, const Dataset& ds) {
  EvalReport rep;
  switch (cfg.task) {
    case Task::classifier:
      rep.accuracy = evaluate_classifier(cfg, model, ds.test, cfg.tta);
      break;
    case Task::vae:
    case Task::decoder:
      rep = evaluate_recon(cfg, model, ds.test);
      break;
    case Task::segmenter:
      rep = evaluate_segmenter(cfg, model, ds.test, ds.category_sets, cfg.tta);
      break;
  }
  return rep;
}

// ---------------------------------------------------------------------------
// Generation / interpolation
// ---------------------------------------------------------------------------

template <typename T>
std::vector<std::string> generate_run(const RunConfig& cfg, ModelBundle<T>& model, int count,
                                      std::uint64_t seed) {
  namespace fs = std::filesystem;
  fs::create_directories(cfg.out_dir);
  Rng rng(seed);
  std::vector<std::string> files;
  for (int i = 0; i < count; ++i) {
    Tensor<T> z = Tensor<T>::zeros({1, cfg.latent_dim});
    for (std::size_t d = 0; d < cfg.latent_dim; ++d) z.at(d) = static_cast<T>(rng.normal());
    auto dec = model.vae.decode(nullptr, z, Mode::eval);
    PointCloud pc;
    std::vector<int> index;
    for (std::size_t p = 0; p < dec.points.dim(1); ++p) {
      pc.points.push_back({static_cast<double>(dec.points.at(0, p, 0)),
                           static_cast<double>(dec.points.at(0, p, 1)),
                           static_cast<double>(dec.points.at(0, p, 2))});
      index.push_back(static_cast<int>(p));  // output list position
    }
    const std::string path = cfg.out_dir + "/gen_" + std::to_string(i) + ".xyz";
    write_xyz(path, pc, &index);
    files.push_back(path);
  }
  return files;
}

// z_t = (1-t) Q(A) + t Q(B) for `steps` even values of t in [0,1]
template <typename T>
std::vector<std::string> interpolate_run(const RunConfig& cfg, ModelBundle<T>& model,
                                         const PointCloud& a, const PointCloud& b, int steps) {
  if (steps < 2) throw std::invalid_argument("interpolate: steps must be >= 2");
  namespace fs = std::filesystem;
  fs::create_directories(cfg.out_dir);
  Tensor<T> xa = clouds_to_tensor<T>({kd_sort(a)});
  Tensor<T> xb = clouds_to_tensor<T>({kd_sort(b)});
  Tensor<T> za = model.vae.encode(nullptr, xa, Mode::eval);
  Tensor<T> zb = model.vae.encode(nullptr, xb, Mode::eval);
  std::vector<std::string> files;
  for (int s = 0; s < steps; ++s) {
    const double t = static_cast<double>(s) / static_cast<double>(steps - 1);
    Tensor<T> z = Tensor<T>::zeros({1, cfg.latent_dim});
    for (std::size_t d = 0; d < cfg.latent_dim; ++d)
      z.at(d) = static_cast<T>((1.0 - t) * static_cast<double>(za.at(d)) +
                               t * static_cast<double>(zb.at(d)));
    auto dec = model.vae.decode(nullptr, z, Mode::eval);
    PointCloud pc;
    std::vector<int> index;
    for (std::size_t p = 0; p < dec.points.dim(1); ++p) {
      pc.points.push_back({static_cast<double>(dec.points.at(0, p, 0)),
                           static_cast<double>(dec.points.at(0, p, 1)),
                           static_cast<double>(dec.points.at(0, p, 2))});
      index.push_back(static_cast<int>(p));
    }
    const std::string path = cfg.out_dir + "/interp_" + std::to_string(s) + ".xyz";
    write_xyz(path, pc, &index);
    files.push_back(path);
  }
  return files;
}

// ---------------------------------------------------------------------------
// Linear probe on frozen encoder features
// ---------------------------------------------------------------------------

struct ProbeResult {
  double accuracy = 0;
  double baseline_accuracy = 0;  // untrained encoder, same protocol
  std::size_t feature_dim = 0;
};

template <typename T>
double probe_linear_layer(const RunConfig& cfg, MrEncoder<T>& enc,
                          const std::vector<LabeledCloud>& train,
                          const std::vector<LabeledCloud>& test) {
  auto featurize = [&](const LabeledCloud& lc) {
    Tensor<T> x = clouds_to_tensor<T>({kd_sort(lc.cloud)});
    return extract_unsup_features(enc, x);
  };
  const std::size_t dim = featurize(train[0]).numel();

  Rng rng(mix_seed(cfg.seed_init, 0x9702e));
  Linear<T> probe(cfg.n_classes, dim, rng);
  std::vector<NamedParam<T>> params = {{"probe.w", probe.w}, {"probe.b", probe.b}};
  AdamState<T> adam;
  adam.lr = 1e-3;
  adam.init(params);

  std::vector<Tensor<T>> feats;
  std::vector<int> labels;
  for (const auto& lc : train) {
    feats.push_back(featurize(lc));
    labels.push_back(lc.label);
  }
  const int probe_epochs = 60;
  for (int epoch = 0; epoch < probe_epochs; ++epoch) {
    adam.lr = lr_schedule(epoch, 1e-3, 5);
    std::vector<std::size_t> order(feats.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    Rng shuffle(mix_seed(cfg.seed_data, 0xbeef00 + static_cast<std::uint64_t>(epoch)));
    for (std::size_t i = order.size(); i > 1; --i)
      std::swap(order[i - 1], order[shuffle.below(i)]);
    const std::size_t bsz = 32;
    for (std::size_t start = 0; start < order.size(); start += bsz) {
      const std::size_t n = std::min(bsz, order.size() - start);
      Tensor<T> batch = Tensor<T>::zeros({n, dim});
      std::vector<int> batch_labels(n);
      for (std::size_t j = 0; j < n; ++j) {
        const Tensor<T>& f = feats[order[start + j]];
        for (std::size_t d = 0; d < dim; ++d) batch.at(j, d) = f.at(d);
        batch_labels[j] = labels[order[start + j]];
      }
      Tape<T> tape;
      Tensor<T> logits = probe.forward(&tape, batch);
      Tensor<T> loss = softmax_cross_entropy(&tape, logits, batch_labels);
      for (auto& p : params) p.tensor.zero_grad();
      tape.backward(loss);
      adam.step(params);
    }
  }

  std::vector<std::vector<double>> scores;
  std::vector<int> test_labels;
  for (const auto& lc : test) {
    Tensor<T> f = featurize(lc);
    Tensor<T> batch = Tensor<T>::zeros({1, dim});
    for (std::size_t d = 0; d < dim; ++d) batch.at(0, d) = f.at(d);
    Tensor<T> logits = probe.forward(nullptr, batch);
    std::vector<double> row(cfg.n_classes);
    for (std::size_t c = 0; c < cfg.n_classes; ++c) row[c] = static_cast<double>(logits.at(0, c));
    scores.push_back(std::move(row));
    test_labels.push_back(lc.label);
  }
  return classification_accuracy(scores, test_labels);
}

template <typename T>
ProbeResult probe_run(const RunConfig& cfg, ModelBundle<T>& model, const Dataset& ds) {
  if (model.spec.variant == Variant::single_res)
    throw std::invalid_argument("probe requires the multiresolution encoder");
  ProbeResult res;
  {
    Tensor<T> x = clouds_to_tensor<T>({kd_sort(ds.train[0].cloud)});
    res.feature_dim = extract_unsup_features(model.vae.mr_enc, x).numel();
  }
  res.accuracy = probe_linear_layer(cfg, model.vae.mr_enc, ds.train, ds.test);

  // untrained-encoder baseline, same protocol
  ModelBundle<T> fresh =
      build_model<T>(model.spec, mix_seed(cfg.seed_init, 0xbb5e11), cfg.seed_tree);
  res.baseline_accuracy = probe_linear_layer(cfg, fresh.vae.mr_enc, ds.train, ds.test);
  return res;
}

// ---------------------------------------------------------------------------
// Ablation runs: shared data and seeds across variants, side-by-side report
// ---------------------------------------------------------------------------

struct AblationRow {
  std::string variant;
  std::size_t params = 0;
  double final_train_loss = 0;
  double test_metric = 0;   // accuracy or pred->GT x100
  double test_metric2 = 0;  // GT->pred x100 for decoders
  int epochs_to_95 = -1;    // first epoch with train accuracy >= 0.95
};

template <typename T>
AblationRow ablate_one(const RunConfig& base, Variant variant, const Dataset& ds) {
  RunConfig cfg = base;
  cfg.variant = variant;
  cfg.out_dir = base.out_dir + "/" + variant_name(variant);
  ModelBundle<T> model = build_model<T>(cfg.network_spec(), cfg.seed_init, cfg.seed_tree);
  TrainResult tr = train_run(cfg, ds, model);

  AblationRow row;
  row.variant = variant_name(variant);
  row.params = parameter_count(model.params());
  row.final_train_loss = tr.curve.back().loss;
  for (const auto& r : tr.curve)
    if (r.train_acc >= 0.95) {
      row.epochs_to_95 = r.epoch;
      break;
    }
  EvalReport rep = evaluate_run(cfg, model, ds);
  if (cfg.task == Task::classifier) {
    row.test_metric = rep.accuracy;
  } else {
    row.test_metric = rep.recon_mean.pred_gt_x100;
    row.test_metric2 = rep.recon_mean.gt_pred_x100;
  }
  return row;
}

inline void write_ablation_csv(const std::string& path, const std::vector<AblationRow>& rows,
                               const RunConfig& cfg) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path);
  out << "variant,params,final_train_loss,test_metric,test_metric2,epochs_to_95,seed_data,"
         "seed_init,seed_tree\n";
  out.precision(12);
  for (const auto& r : rows)
    out << r.variant << "," << r.params << "," << r.final_train_loss << "," << r.test_metric
        << "," << r.test_metric2 << "," << r.epochs_to_95 << "," << cfg.seed_data << ","
        << cfg.seed_init << "," << cfg.seed_tree << "\n";
}

template <typename T>
std::vector<AblationRow> ablate_run(const RunConfig& cfg, const Dataset& ds,
                                    const std::vector<Variant>& variants) {
  std::vector<AblationRow> rows;
  for (Variant v : variants) rows.push_back(ablate_one<T>(cfg, v, ds));
  std::filesystem::create_directories(cfg.out_dir);
  write_ablation_csv(cfg.out_dir + "/ablation.csv", rows, cfg);
  return rows;
}

}  // namespace mrt
