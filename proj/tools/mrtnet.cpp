// Command-line interface for training, evaluating, and sampling MRT networks.
#include <CLI11.hpp>
#include <cstdio>
#include <iostream>

#include "mrt/train.hpp"

using namespace mrt;

namespace {

struct CommonArgs {
  std::string config_path;
  std::string out_dir;
  std::string task;
  std::string variant;
  std::string precision;
  std::string dataset;
  std::string nn_backend;
  std::string augment;
  long long count = -1, n_points = -1, k = -1, batch = -1, epochs = -1, tta = -1;
  long long n_classes = -1, n_out = -1, latent = -1, filter_cap = -1;
  double base_lr = -1, lambda = -1, delta_c = -1, scale_std = -1, train_fraction = -1;
  long long halve_every = -1;
  long long seed_data = -1, seed_init = -1, seed_tree = -1, seed_noise = -1;
  std::string enc_filters, dec_filters;

  void add_to(CLI::App* app) {
    app->add_option("--config", config_path, "config file (key = value sections)");
    app->add_option("--out", out_dir, "output directory");
    app->add_option("--task", task, "classifier|vae|decoder|segmenter");
    app->add_option("--variant", variant, "full|single-res|filters4|fc-decoder");
    app->add_option("--precision", precision, "f32|f64");
    app->add_option("--dataset", dataset, "synth:<kinds> or mesh:<dir>");
    app->add_option("--count", count, "dataset size");
    app->add_option("--n-points", n_points, "points per cloud (power of two)");
    app->add_option("--k", k, "multiresolution scale ratio");
    app->add_option("--batch", batch, "batch size");
    app->add_option("--epochs", epochs, "training epochs");
    app->add_option("--base-lr", base_lr, "initial learning rate");
    app->add_option("--halve-every", halve_every, "epochs between lr halvings");
    app->add_option("--lambda", lambda, "vae regularizer weight");
    app->add_option("--delta-c", delta_c, "vae noise variance c");
    app->add_option("--augment", augment, "none|gaussian|uniform");
    app->add_option("--scale-std", scale_std, "gaussian scale std");
    app->add_option("--nn-backend", nn_backend, "tree|brute");
    app->add_option("--tta", tta, "test-time augmentation count");
    app->add_option("--n-classes", n_classes, "class or part count");
    app->add_option("--n-out", n_out, "decoder output points");
    app->add_option("--latent", latent, "encoding dimension");
    app->add_option("--filter-cap", filter_cap, "filter schedule cap");
    app->add_option("--enc-filters", enc_filters, "encoder filters CSV override");
    app->add_option("--dec-filters", dec_filters, "decoder filters CSV override");
    app->add_option("--train-fraction", train_fraction, "train split fraction");
    app->add_option("--seed-data", seed_data, "data seed");
    app->add_option("--seed-init", seed_init, "init seed");
    app->add_option("--seed-tree", seed_tree, "tree seed");
    app->add_option("--seed-noise", seed_noise, "noise seed");
  }

  RunConfig resolve() const {
    RunConfig cfg;
    if (!config_path.empty()) cfg = RunConfig::load(config_path);
    if (!out_dir.empty()) cfg.out_dir = out_dir;
    if (!task.empty()) cfg.task = task_from(task);
    if (!variant.empty()) cfg.variant = variant_from(variant);
    if (!precision.empty()) {
      if (precision != "f32" && precision != "f64")
        throw std::invalid_argument("precision must be f32|f64");
      cfg.precision = precision;
    }
    if (!dataset.empty()) cfg.dataset = dataset;
    if (!nn_backend.empty()) cfg.nn_backend = nn_backend;
    if (!augment.empty()) {
      if (augment == "none") cfg.augment = AugmentMode::none;
      else if (augment == "gaussian") cfg.augment = AugmentMode::gaussian;
      else if (augment == "uniform") cfg.augment = AugmentMode::uniform;
      else throw std::invalid_argument("augment must be none|gaussian|uniform");
    }
    auto set_size = [](std::size_t& dst, long long v) {
      if (v >= 0) dst = static_cast<std::size_t>(v);
    };
    set_size(cfg.count, count);
    set_size(cfg.n_points, n_points);
    set_size(cfg.k, k);
    set_size(cfg.batch_size, batch);
    if (epochs >= 0) cfg.epochs = static_cast<int>(epochs);
    if (tta >= 0) cfg.tta = static_cast<int>(tta);
    set_size(cfg.n_classes, n_classes);
    set_size(cfg.n_out, n_out);
    set_size(cfg.latent_dim, latent);
    set_size(cfg.filter_cap, filter_cap);
    if (base_lr >= 0) cfg.base_lr = base_lr;
    if (halve_every >= 0) cfg.halve_every = static_cast<int>(halve_every);
    if (lambda >= 0) cfg.lambda = lambda;
    if (delta_c >= 0) cfg.delta_c = delta_c;
    if (scale_std >= 0) cfg.scale_std = scale_std;
    if (train_fraction >= 0) cfg.train_fraction = train_fraction;
    if (seed_data >= 0) cfg.seed_data = static_cast<std::uint64_t>(seed_data);
    if (seed_init >= 0) cfg.seed_init = static_cast<std::uint64_t>(seed_init);
    if (seed_tree >= 0) cfg.seed_tree = static_cast<std::uint64_t>(seed_tree);
    if (seed_noise >= 0) cfg.seed_noise = static_cast<std::uint64_t>(seed_noise);
    auto parse_filters = [](const std::string& csv) {
      std::vector<std::size_t> out;
      std::istringstream is(csv);
      std::string tok;
      while (std::getline(is, tok, ',')) out.push_back(std::stoull(tok));
      return out;
    };
    if (!enc_filters.empty()) cfg.enc_filters = parse_filters(enc_filters);
    if (!dec_filters.empty()) cfg.dec_filters = parse_filters(dec_filters);
    return cfg;
  }
};

template <typename T>
int run_train(const RunConfig& cfg) {
  Dataset ds = load_dataset(cfg);
  ModelBundle<T> model = build_model<T>(cfg.network_spec(), cfg.seed_init, cfg.seed_tree);
  TrainResult tr = train_run(cfg, ds, model);
  std::printf("trained %d epochs; final loss %.6f; checkpoint %s\n", cfg.epochs,
              tr.curve.back().loss, tr.final_checkpoint.c_str());
  return 0;
}

template <typename T>
int run_eval(const RunConfig& cfg, const std::string& ckpt_path, int tta_override) {
  CheckpointData ck = CheckpointData::load(ckpt_path);
  if (ck.spec.task != cfg.task)
    throw std::runtime_error("checkpoint task '" + task_name(ck.spec.task) +
                             "' does not match requested task '" + task_name(cfg.task) + "'");
  ModelBundle<T> model = from_checkpoint<T>(ck);
  RunConfig eval_cfg = cfg;
  if (tta_override > 0) eval_cfg.tta = tta_override;
  Dataset ds = load_dataset(eval_cfg);
  EvalReport rep = evaluate_run(eval_cfg, model, ds);
  std::fputs(rep.text(eval_cfg.task).c_str(), stdout);
  return 0;
}

template <typename T>
int run_generate(const RunConfig& cfg, const std::string& ckpt_path, int count,
                 std::uint64_t seed) {
  CheckpointData ck = CheckpointData::load(ckpt_path);
  if (ck.spec.task != Task::vae && ck.spec.task != Task::decoder)
    throw std::runtime_error("generate needs a vae or decoder checkpoint");
  ModelBundle<T> model = from_checkpoint<T>(ck);
  RunConfig gen_cfg = cfg;
  gen_cfg.latent_dim = ck.spec.latent_dim;
  const auto files = generate_run(gen_cfg, model, count, seed);
  for (const auto& f : files) std::printf("%s\n", f.c_str());
  return 0;
}

template <typename T>
int run_interpolate(const RunConfig& cfg, const std::string& ckpt_path, const std::string& a,
                    const std::string& b, int steps) {
  CheckpointData ck = CheckpointData::load(ckpt_path);
  if (ck.spec.task != Task::vae) throw std::runtime_error("interpolate needs a vae checkpoint");
  ModelBundle<T> model = from_checkpoint<T>(ck);
  RunConfig icfg = cfg;
  icfg.latent_dim = ck.spec.latent_dim;
  PointCloud pa = normalize_cloud(read_xyz(a).points);
  PointCloud pb = normalize_cloud(read_xyz(b).points);
  const auto files = interpolate_run(icfg, model, pa, pb, steps);
  for (const auto& f : files) std::printf("%s\n", f.c_str());
  return 0;
}

template <typename T>
int run_probe(const RunConfig& cfg, const std::string& ckpt_path) {
  CheckpointData ck = CheckpointData::load(ckpt_path);
  if (ck.spec.task != Task::vae) throw std::runtime_error("probe needs a vae checkpoint");
  ModelBundle<T> model = from_checkpoint<T>(ck);
  Dataset ds = load_dataset(cfg);
  ProbeResult res = probe_run(cfg, model, ds);
  std::printf("feature_dim = %zu\n", res.feature_dim);
  std::printf("probe_accuracy = %.6f\n", res.accuracy);
  std::printf("untrained_baseline_accuracy = %.6f\n", res.baseline_accuracy);
  return 0;
}

template <typename T>
int run_ablate(const RunConfig& cfg) {
  Dataset ds = load_dataset(cfg);
  std::vector<Variant> variants;
  if (cfg.task == Task::classifier)
    variants = {Variant::full, Variant::single_res, Variant::filters4};
  else
    variants = {Variant::full, Variant::single_res, Variant::fc_decoder};
  const auto rows = ablate_run<T>(cfg, ds, variants);
  std::printf("variant,params,final_train_loss,test_metric,test_metric2,epochs_to_95\n");
  for (const auto& r : rows)
    std::printf("%s,%zu,%.6f,%.6f,%.6f,%d\n", r.variant.c_str(), r.params, r.final_train_loss,
                r.test_metric, r.test_metric2, r.epochs_to_95);
  return 0;
}

int run_sort_dump(const std::string& in_path, const std::string& out_path,
                  const std::string& tree, std::uint64_t seed) {
  PointCloud pc = normalize_cloud(read_xyz(in_path).points);
  SortedCloud sc;
  if (tree == "kd") sc = kd_sort(pc);
  else if (tree == "prob-kd") sc = prob_kd_sort(pc, seed);
  else if (tree == "rp")
    sc = rp_sort(pc, AxisSet::random(NetworkSpec::log2_of(pc.size()), mix_seed(seed, 0xa7e5)));
  else throw std::invalid_argument("tree must be kd|prob-kd|rp");
  PointCloud ordered;
  std::vector<int> original_index;
  for (std::size_t i = 0; i < sc.order.size(); ++i) {
    ordered.points.push_back(sc.sorted_point(i));
    original_index.push_back(static_cast<int>(sc.order[i]));
  }
  write_xyz(out_path, ordered, &original_index);
  std::printf("%s\n", out_path.c_str());
  return 0;
}

template <typename F32, typename F64>
int dispatch_precision(const RunConfig& cfg, F32&& f32, F64&& f64) {
  return cfg.precision == "f64" ? f64() : f32();
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"multiresolution tree networks for point clouds"};
  app.require_subcommand(1);

  CommonArgs targs, eargs, gargs, iargs, pargs, aargs;
  std::string ckpt, shape_a, shape_b, sort_in, sort_out, sort_tree = "kd";
  long long gen_count = 5, gen_seed = 17, steps = 5, eval_tta = -1;
  long long sort_seed = 1;

  CLI::App* train = app.add_subcommand("train", "train a model from a config");
  targs.add_to(train);

  CLI::App* eval = app.add_subcommand("eval", "evaluate a checkpoint");
  eargs.add_to(eval);
  eval->add_option("--checkpoint", ckpt, "checkpoint path")->required();
  eval->add_option("--eval-tta", eval_tta, "override TTA count");

  CLI::App* gen = app.add_subcommand("generate", "decode random encodings to XYZ files");
  gargs.add_to(gen);
  gen->add_option("--checkpoint", ckpt, "checkpoint path")->required();
  gen->add_option("--gen-count", gen_count, "number of shapes");
  gen->add_option("--gen-seed", gen_seed, "sampling seed");

  CLI::App* interp = app.add_subcommand("interpolate", "interpolate between two shapes");
  iargs.add_to(interp);
  interp->add_option("--checkpoint", ckpt, "checkpoint path")->required();
  interp->add_option("--shape-a", shape_a, "first XYZ file")->required();
  interp->add_option("--shape-b", shape_b, "second XYZ file")->required();
  interp->add_option("--steps", steps, "interpolation steps");

  CLI::App* probe = app.add_subcommand("probe", "linear probe on frozen encoder features");
  pargs.add_to(probe);
  probe->add_option("--checkpoint", ckpt, "vae checkpoint path")->required();

  CLI::App* ablate = app.add_subcommand("ablate", "train and compare model variants");
  aargs.add_to(ablate);

  CLI::App* sort_dump = app.add_subcommand("sort-dump", "write a sorted cloud as indexed XYZ");
  sort_dump->add_option("--in", sort_in, "input XYZ")->required();
  sort_dump->add_option("--out-file", sort_out, "output XYZ")->required();
  sort_dump->add_option("--tree", sort_tree, "kd|prob-kd|rp");
  sort_dump->add_option("--seed", sort_seed, "tree seed");

  CLI11_PARSE(app, argc, argv);

  try {
    if (train->parsed()) {
      const RunConfig cfg = targs.resolve();
      return dispatch_precision(cfg, [&] { return run_train<float>(cfg); },
                                [&] { return run_train<double>(cfg); });
    }
    if (eval->parsed()) {
      const RunConfig cfg = eargs.resolve();
      return dispatch_precision(
          cfg, [&] { return run_eval<float>(cfg, ckpt, static_cast<int>(eval_tta)); },
          [&] { return run_eval<double>(cfg, ckpt, static_cast<int>(eval_tta)); });
    }
    if (gen->parsed()) {
      const RunConfig cfg = gargs.resolve();
      return dispatch_precision(
          cfg,
          [&] {
            return run_generate<float>(cfg, ckpt, static_cast<int>(gen_count),
                                       static_cast<std::uint64_t>(gen_seed));
          },
          [&] {
            return run_generate<double>(cfg, ckpt, static_cast<int>(gen_count),
                                        static_cast<std::uint64_t>(gen_seed));
          });
    }
    if (interp->parsed()) {
      const RunConfig cfg = iargs.resolve();
      return dispatch_precision(
          cfg,
          [&] {
            return run_interpolate<float>(cfg, ckpt, shape_a, shape_b, static_cast<int>(steps));
          },
          [&] {
            return run_interpolate<double>(cfg, ckpt, shape_a, shape_b, static_cast<int>(steps));
          });
    }
    if (probe->parsed()) {
      const RunConfig cfg = pargs.resolve();
      return dispatch_precision(cfg, [&] { return run_probe<float>(cfg, ckpt); },
                                [&] { return run_probe<double>(cfg, ckpt); });
    }
    if (ablate->parsed()) {
      const RunConfig cfg = aargs.resolve();
      return dispatch_precision(cfg, [&] { return run_ablate<float>(cfg); },
                                [&] { return run_ablate<double>(cfg); });
    }
    if (sort_dump->parsed())
      return run_sort_dump(sort_in, sort_out, sort_tree,
                           static_cast<std::uint64_t>(sort_seed));
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  }
  return 0;
}
