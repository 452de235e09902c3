#include "mrt/config.hpp"

#include <fstream>
#include <functional>
#include <map>
#include <sstream>
#include <stdexcept>

namespace mrt {

std::string task_name(Task t) {
  switch (t) {
    case Task::classifier: return "classifier";
    case Task::vae: return "vae";
    case Task::decoder: return "decoder";
    case Task::segmenter: return "segmenter";
  }
  return "classifier";
}

Task task_from(const std::string& s) {
  if (s == "classifier") return Task::classifier;
  if (s == "vae") return Task::vae;
  if (s == "decoder") return Task::decoder;
  if (s == "segmenter") return Task::segmenter;
  throw std::invalid_argument("unknown task '" + s + "'");
}

std::string variant_name(Variant v) {
  switch (v) {
    case Variant::full: return "full";
    case Variant::single_res: return "single-res";
    case Variant::filters4: return "filters4";
    case Variant::fc_decoder: return "fc-decoder";
  }
  return "full";
}

Variant variant_from(const std::string& s) {
  if (s == "full") return Variant::full;
  if (s == "single-res") return Variant::single_res;
  if (s == "filters4") return Variant::filters4;
  if (s == "fc-decoder") return Variant::fc_decoder;
  throw std::invalid_argument("unknown variant '" + s + "'");
}

namespace {

std::string augment_name(AugmentMode m) {
  switch (m) {
    case AugmentMode::none: return "none";
    case AugmentMode::gaussian: return "gaussian";
    case AugmentMode::uniform: return "uniform";
  }
  return "none";
}

AugmentMode augment_from(const std::string& s) {
  if (s == "none") return AugmentMode::none;
  if (s == "gaussian") return AugmentMode::gaussian;
  if (s == "uniform") return AugmentMode::uniform;
  throw std::invalid_argument("unknown augment mode '" + s + "'");
}

std::string filters_csv(const std::vector<std::size_t>& fs) {
  std::ostringstream os;
  for (std::size_t i = 0; i < fs.size(); ++i) os << (i ? "," : "") << fs[i];
  return os.str();
}

std::vector<std::size_t> filters_from(const std::string& s) {
  std::vector<std::size_t> out;
  if (s.empty()) return out;
  std::istringstream is(s);
  std::string tok;
  while (std::getline(is, tok, ',')) out.push_back(std::stoull(tok));
  return out;
}

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

}  // namespace

NetworkSpec RunConfig::network_spec() const {
  NetworkSpec spec;
  spec.task = task;
  spec.variant = variant;
  spec.k = k;
  spec.n_points = n_points;
  spec.n_out = n_out;
  spec.latent_dim = latent_dim;
  spec.seed_channels = seed_channels;
  spec.head_filters = head_filters;
  spec.n_classes = n_classes;
  spec.filter_cap = filter_cap;
  spec.enc_filters = enc_filters;
  spec.dec_filters = dec_filters;
  spec.tanh_output = tanh_output;
  spec.use_skips = use_skips;
  return spec;
}

std::string RunConfig::serialize() const {
  std::ostringstream os;
  os.precision(17);
  os << "[run]\n";
  os << "task = " << task_name(task) << "\n";
  os << "variant = " << variant_name(variant) << "\n";
  os << "precision = " << precision << "\n";
  os << "out_dir = " << out_dir << "\n";
  os << "\n[data]\n";
  os << "dataset = " << dataset << "\n";
  os << "count = " << count << "\n";
  os << "n_points = " << n_points << "\n";
  os << "train_fraction = " << train_fraction << "\n";
  os << "\n[model]\n";
  os << "k = " << k << "\n";
  os << "latent_dim = " << latent_dim << "\n";
  os << "filter_cap = " << filter_cap << "\n";
  os << "enc_filters = " << filters_csv(enc_filters) << "\n";
  os << "dec_filters = " << filters_csv(dec_filters) << "\n";
  os << "n_classes = " << n_classes << "\n";
  os << "n_out = " << n_out << "\n";
  os << "seed_channels = " << seed_channels << "\n";
  os << "head_filters = " << head_filters << "\n";
  os << "tanh_output = " << (tanh_output ? "true" : "false") << "\n";
  os << "use_skips = " << (use_skips ? "true" : "false") << "\n";
  os << "\n[train]\n";
  os << "batch_size = " << batch_size << "\n";
  os << "epochs = " << epochs << "\n";
  os << "base_lr = " << base_lr << "\n";
  os << "halve_every = " << halve_every << "\n";
  os << "lambda = " << lambda << "\n";
  os << "delta_c = " << delta_c << "\n";
  os << "augment = " << augment_name(augment) << "\n";
  os << "scale_std = " << scale_std << "\n";
  os << "nn_backend = " << nn_backend << "\n";
  os << "\n[eval]\n";
  os << "tta = " << tta << "\n";
  os << "\n[seeds]\n";
  os << "data = " << seed_data << "\n";
  os << "init = " << seed_init << "\n";
  os << "tree = " << seed_tree << "\n";
  os << "noise = " << seed_noise << "\n";
  return os.str();
}

RunConfig RunConfig::parse(const std::string& text, const std::string& name) {
  RunConfig cfg;
  using Setter = std::function<void(RunConfig&, const std::string&)>;
  static const std::map<std::string, Setter> setters = {
      {"run.task", [](RunConfig& c, const std::string& v) { c.task = task_from(v); }},
      {"run.variant", [](RunConfig& c, const std::string& v) { c.variant = variant_from(v); }},
      {"run.precision",
       [](RunConfig& c, const std::string& v) {
         if (v != "f32" && v != "f64") throw std::invalid_argument("precision must be f32|f64");
         c.precision = v;
       }},
      {"run.out_dir", [](RunConfig& c, const std::string& v) { c.out_dir = v; }},
      {"data.dataset", [](RunConfig& c, const std::string& v) { c.dataset = v; }},
      {"data.count", [](RunConfig& c, const std::string& v) { c.count = std::stoull(v); }},
      {"data.n_points",
       [](RunConfig& c, const std::string& v) { c.n_points = std::stoull(v); }},
      {"data.train_fraction",
       [](RunConfig& c, const std::string& v) { c.train_fraction = std::stod(v); }},
      {"model.k", [](RunConfig& c, const std::string& v) { c.k = std::stoull(v); }},
      {"model.latent_dim",
       [](RunConfig& c, const std::string& v) { c.latent_dim = std::stoull(v); }},
      {"model.filter_cap",
       [](RunConfig& c, const std::string& v) { c.filter_cap = std::stoull(v); }},
      {"model.enc_filters",
       [](RunConfig& c, const std::string& v) { c.enc_filters = filters_from(v); }},
      {"model.dec_filters",
       [](RunConfig& c, const std::string& v) { c.dec_filters = filters_from(v); }},
      {"model.n_classes",
       [](RunConfig& c, const std::string& v) { c.n_classes = std::stoull(v); }},
      {"model.n_out", [](RunConfig& c, const std::string& v) { c.n_out = std::stoull(v); }},
      {"model.seed_channels",
       [](RunConfig& c, const std::string& v) { c.seed_channels = std::stoull(v); }},
      {"model.head_filters",
       [](RunConfig& c, const std::string& v) { c.head_filters = std::stoull(v); }},
      {"model.tanh_output",
       [](RunConfig& c, const std::string& v) { c.tanh_output = v == "true"; }},
      {"model.use_skips",
       [](RunConfig& c, const std::string& v) { c.use_skips = v == "true"; }},
      {"train.batch_size",
       [](RunConfig& c, const std::string& v) { c.batch_size = std::stoull(v); }},
      {"train.epochs", [](RunConfig& c, const std::string& v) { c.epochs = std::stoi(v); }},
      {"train.base_lr", [](RunConfig& c, const std::string& v) { c.base_lr = std::stod(v); }},
      {"train.halve_every",
       [](RunConfig& c, const std::string& v) { c.halve_every = std::stoi(v); }},
      {"train.lambda", [](RunConfig& c, const std::string& v) { c.lambda = std::stod(v); }},
      {"train.delta_c", [](RunConfig& c, const std::string& v) { c.delta_c = std::stod(v); }},
      {"train.augment",
       [](RunConfig& c, const std::string& v) { c.augment = augment_from(v); }},
      {"train.scale_std",
       [](RunConfig& c, const std::string& v) { c.scale_std = std::stod(v); }},
      {"train.nn_backend",
       [](RunConfig& c, const std::string& v) {
         if (v != "tree" && v != "brute") throw std::invalid_argument("nn_backend tree|brute");
         c.nn_backend = v;
       }},
      {"eval.tta", [](RunConfig& c, const std::string& v) { c.tta = std::stoi(v); }},
      {"seeds.data", [](RunConfig& c, const std::string& v) { c.seed_data = std::stoull(v); }},
      {"seeds.init", [](RunConfig& c, const std::string& v) { c.seed_init = std::stoull(v); }},
      {"seeds.tree", [](RunConfig& c, const std::string& v) { c.seed_tree = std::stoull(v); }},
      {"seeds.noise",
       [](RunConfig& c, const std::string& v) { c.seed_noise = std::stoull(v); }},
  };

  std::istringstream in(text);
  std::string line, section;
  std::size_t no = 0;
  while (std::getline(in, line)) {
    ++no;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line = line.substr(0, hash);
    line = trim(line);
    if (line.empty()) continue;
    if (line.front() == '[') {
      if (line.back() != ']')
        throw std::runtime_error(name + ":" + std::to_string(no) + ": malformed section");
      section = line.substr(1, line.size() - 2);
      continue;
    }
    const auto eq = line.find('=');
    if (eq == std::string::npos)
      throw std::runtime_error(name + ":" + std::to_string(no) + ": expected key = value");
    const std::string key = section + "." + trim(line.substr(0, eq));
    const std::string value = trim(line.substr(eq + 1));
    const auto it = setters.find(key);
    if (it == setters.end())
      throw std::runtime_error(name + ":" + std::to_string(no) + ": unknown key '" + key + "'");
    try {
      it->second(cfg, value);
    } catch (const std::exception& e) {
      throw std::runtime_error(name + ":" + std::to_string(no) + ": " + e.what());
    }
  }
  return cfg;
}

RunConfig RunConfig::load(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open " + path);
  std::stringstream buf;
  buf << in.rdbuf();
  return parse(buf.str(), path);
}

void RunConfig::save(const std::string& path) const {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path);
  out << serialize();
}

}  // namespace mrt
