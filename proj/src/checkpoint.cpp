#include "mrt/checkpoint.hpp"

#include <cstring>
#include <fstream>
#include <map>
#include <sstream>
#include <stdexcept>

#include "mrt/config.hpp"

namespace mrt {

namespace {

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

void put_le32(std::string& buf, float v) {
  std::uint32_t bits;
  std::memcpy(&bits, &v, 4);
  buf.push_back(static_cast<char>(bits & 0xff));
  buf.push_back(static_cast<char>((bits >> 8) & 0xff));
  buf.push_back(static_cast<char>((bits >> 16) & 0xff));
  buf.push_back(static_cast<char>((bits >> 24) & 0xff));
}

float get_le32(const char* p) {
  const auto u = [&](int i) { return static_cast<std::uint32_t>(static_cast<unsigned char>(p[i])); };
  const std::uint32_t bits = u(0) | (u(1) << 8) | (u(2) << 16) | (u(3) << 24);
  float v;
  std::memcpy(&v, &bits, 4);
  return v;
}

std::string fmt_double(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

}  // namespace

const CheckpointEntry* CheckpointData::find(const std::string& name) const {
  for (const auto& e : entries)
    if (e.name == name) return &e;
  return nullptr;
}

void CheckpointData::save(const std::string& path) const {
  std::ostringstream header;
  header << "MRTNET-CKPT " << version << "\n";
  header << "epoch = " << epoch << "\n";
  header << "spec.task = " << task_name(spec.task) << "\n";
  header << "spec.variant = " << variant_name(spec.variant) << "\n";
  header << "spec.k = " << spec.k << "\n";
  header << "spec.n_points = " << spec.n_points << "\n";
  header << "spec.n_out = " << spec.n_out << "\n";
  header << "spec.latent_dim = " << spec.latent_dim << "\n";
  header << "spec.seed_channels = " << spec.seed_channels << "\n";
  header << "spec.head_filters = " << spec.head_filters << "\n";
  header << "spec.n_classes = " << spec.n_classes << "\n";
  header << "spec.filter_cap = " << spec.filter_cap << "\n";
  header << "spec.enc_filters = " << filters_csv(spec.enc_filters) << "\n";
  header << "spec.dec_filters = " << filters_csv(spec.dec_filters) << "\n";
  header << "spec.tanh_output = " << (spec.tanh_output ? "true" : "false") << "\n";
  header << "spec.use_skips = " << (spec.use_skips ? "true" : "false") << "\n";
  header << "adam.lr = " << fmt_double(adam_lr) << "\n";
  header << "adam.beta1 = " << fmt_double(adam_beta1) << "\n";
  header << "adam.beta2 = " << fmt_double(adam_beta2) << "\n";
  header << "adam.epsilon = " << fmt_double(adam_epsilon) << "\n";
  header << "adam.steps = " << adam_steps << "\n";

  std::size_t offset = 0;
  std::string payload;
  for (const auto& e : entries) {
    std::size_t numel = 1;
    for (std::size_t d : e.shape) numel *= d;
    if (numel != e.data.size())
      throw std::runtime_error("checkpoint: entry '" + e.name + "' shape does not match data");
    header << "tensor " << e.name << " " << offset << " ";
    for (std::size_t i = 0; i < e.shape.size(); ++i) header << (i ? "," : "") << e.shape[i];
    header << "\n";
    for (float v : e.data) put_le32(payload, v);
    offset += numel;
  }
  header << "\n";

  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path);
  const std::string h = header.str();
  out.write(h.data(), static_cast<std::streamsize>(h.size()));
  out.write(payload.data(), static_cast<std::streamsize>(payload.size()));
}

CheckpointData CheckpointData::load(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open " + path);
  std::stringstream buf;
  buf << in.rdbuf();
  const std::string all = buf.str();

  CheckpointData ck;
  std::size_t pos = 0;
  auto next_line = [&]() -> std::string {
    const auto nl = all.find('\n', pos);
    if (nl == std::string::npos) throw std::runtime_error(path + ": truncated header");
    std::string line = all.substr(pos, nl - pos);
    pos = nl + 1;
    return line;
  };

  {
    std::istringstream ls(next_line());
    std::string magic;
    ls >> magic >> ck.version;
    if (magic != "MRTNET-CKPT") throw std::runtime_error(path + ": not a checkpoint file");
    if (ck.version != 1)
      throw std::runtime_error(path + ": unsupported version " + std::to_string(ck.version));
  }

  struct IndexRow {
    std::string name;
    std::size_t offset;
    std::vector<std::size_t> shape;
  };
  std::vector<IndexRow> index;
  std::size_t total = 0;

  for (;;) {
    const std::string line = next_line();
    if (line.empty()) break;  // header/payload separator
    if (line.rfind("tensor ", 0) == 0) {
      std::istringstream ls(line);
      std::string tag;
      IndexRow row;
      std::string shape_csv;
      ls >> tag >> row.name >> row.offset >> shape_csv;
      if (row.name.empty()) throw std::runtime_error(path + ": malformed tensor line");
      row.shape = filters_from(shape_csv);
      std::size_t numel = 1;
      for (std::size_t d : row.shape) numel *= d;
      if (row.offset != total)
        throw std::runtime_error(path + ": non-contiguous offset for '" + row.name + "'");
      total += numel;
      index.push_back(std::move(row));
      continue;
    }
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw std::runtime_error(path + ": malformed header line");
    const std::string key = line.substr(0, eq - 1);
    const std::string value = line.substr(eq + 2);
    if (key == "epoch") ck.epoch = std::stoi(value);
    else if (key == "spec.task") ck.spec.task = task_from(value);
    else if (key == "spec.variant") ck.spec.variant = variant_from(value);
    else if (key == "spec.k") ck.spec.k = std::stoull(value);
    else if (key == "spec.n_points") ck.spec.n_points = std::stoull(value);
    else if (key == "spec.n_out") ck.spec.n_out = std::stoull(value);
    else if (key == "spec.latent_dim") ck.spec.latent_dim = std::stoull(value);
    else if (key == "spec.seed_channels") ck.spec.seed_channels = std::stoull(value);
    else if (key == "spec.head_filters") ck.spec.head_filters = std::stoull(value);
    else if (key == "spec.n_classes") ck.spec.n_classes = std::stoull(value);
    else if (key == "spec.filter_cap") ck.spec.filter_cap = std::stoull(value);
    else if (key == "spec.enc_filters") ck.spec.enc_filters = filters_from(value);
    else if (key == "spec.dec_filters") ck.spec.dec_filters = filters_from(value);
    else if (key == "spec.tanh_output") ck.spec.tanh_output = value == "true";
    else if (key == "spec.use_skips") ck.spec.use_skips = value == "true";
    else if (key == "adam.lr") ck.adam_lr = std::stod(value);
    else if (key == "adam.beta1") ck.adam_beta1 = std::stod(value);
    else if (key == "adam.beta2") ck.adam_beta2 = std::stod(value);
    else if (key == "adam.epsilon") ck.adam_epsilon = std::stod(value);
    else if (key == "adam.steps") ck.adam_steps = std::stoll(value);
    else throw std::runtime_error(path + ": unknown header key '" + key + "'");
  }

  const std::size_t payload_bytes = all.size() - pos;
  if (payload_bytes != total * 4)
    throw std::runtime_error(path + ": payload holds " + std::to_string(payload_bytes / 4) +
                             " values but the index declares " + std::to_string(total));

  for (const auto& row : index) {
    CheckpointEntry e;
    e.name = row.name;
    e.shape = row.shape;
    std::size_t numel = 1;
    for (std::size_t d : row.shape) numel *= d;
    e.data.resize(numel);
    const char* base = all.data() + pos + row.offset * 4;
    for (std::size_t i = 0; i < numel; ++i) e.data[i] = get_le32(base + i * 4);
    ck.entries.push_back(std::move(e));
  }
  return ck;
}

}  // namespace mrt
