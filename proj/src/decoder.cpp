#include "cnnsplit/decoder.hpp"

#include <filesystem>
#include <fstream>
#include <sstream>

#include "cnnsplit/error.hpp"

namespace cnnsplit {

Model slice_channels(const ModelSpec& spec, const WeightStore& weights,
                     const std::vector<std::vector<int>>& kept) {
  const ShapeInfo info = infer_shapes(spec);
  const std::size_t convs = info.conv_output.size();
  if (kept.size() != convs) {
    throw ShapeError("channel plan covers " + std::to_string(kept.size()) + " conv layers, model has " +
                     std::to_string(convs));
  }
  for (std::size_t c = 0; c < convs; ++c) {
    if (kept[c].empty()) throw ShapeError("channel plan removes every kernel of conv" + std::to_string(c));
    for (std::size_t j = 0; j < kept[c].size(); ++j) {
      if (kept[c][j] < 0 || kept[c][j] >= info.conv_output[c].c || (j > 0 && kept[c][j] <= kept[c][j - 1])) {
        throw ShapeError("channel plan for conv" + std::to_string(c) + " is not an ascending subset");
      }
    }
  }

  Model out;
  out.spec = spec;
  for (std::size_t c = 0; c < convs; ++c) {
    out.spec.layers[info.conv_layer_index[c]].out = static_cast<int>(kept[c].size());
  }

  for (std::size_t c = 0; c < convs; ++c) {
    const int idx = static_cast<int>(c);
    const Tensor& k = weights.get(conv_kernels_name(idx));
    const Tensor& b = weights.get(conv_bias_name(idx));
    const int c_in = k.dim(1);
    const int ks = k.dim(2);
    std::vector<int> in_keep;
    if (c == 0) {
      for (int i = 0; i < c_in; ++i) in_keep.push_back(i);
    } else {
      in_keep = kept[c - 1];
    }
    const std::size_t kk = static_cast<std::size_t>(ks) * ks;
    Tensor nk({static_cast<int>(kept[c].size()), static_cast<int>(in_keep.size()), ks, ks});
    Tensor nb({static_cast<int>(kept[c].size())});
    float* dst = nk.data();
    for (std::size_t o = 0; o < kept[c].size(); ++o) {
      const int oc = kept[c][o];
      nb[o] = b[oc];
      for (int ic : in_keep) {
        const float* src = k.data() + (static_cast<std::size_t>(oc) * c_in + ic) * kk;
        dst = std::copy(src, src + kk, dst);
      }
    }
    out.weights.set(conv_kernels_name(idx), std::move(nk));
    out.weights.set(conv_bias_name(idx), std::move(nb));
  }

  const Shape3 flat = info.flatten_source;
  const std::size_t hw = static_cast<std::size_t>(flat.h) * flat.w;
  const std::vector<int>& last = kept.back();
  for (std::size_t f = 0; f < info.fc_output.size(); ++f) {
    const int idx = static_cast<int>(f);
    const Tensor& w = weights.get(fc_weights_name(idx));
    out.weights.set(fc_bias_name(idx), weights.get(fc_bias_name(idx)));
    if (f != 0) {
      out.weights.set(fc_weights_name(idx), w);
      continue;
    }
    const int d_out = w.dim(0);
    const std::size_t d = static_cast<std::size_t>(w.dim(1));
    Tensor nw({d_out, static_cast<int>(last.size() * hw)});
    float* dst = nw.data();
    for (int r = 0; r < d_out; ++r) {
      const float* row = w.data() + r * d;
      for (int ch : last) dst = std::copy(row + ch * hw, row + (ch + 1) * hw, dst);
    }
    out.weights.set(fc_weights_name(idx), std::move(nw));
  }
  validate_weights(out.spec, out.weights);
  return out;
}

ModuleArtifact decode(const Model& parent, const GroupingMap& grouping, const Genome& genome,
                      const DecodeOptions& opts) {
  Genome g = genome;
  if (opts.repair) {
    g = repair(std::move(g), grouping.layout);
  } else if (!is_repaired(g, grouping.layout)) {
    throw ConfigError("genome for class " + std::to_string(g.class_id) +
                      " removes every group of a layer and repair is disabled");
  }
  const auto kept = kept_channels(grouping, g);
  Model sliced = slice_channels(parent.spec, parent.weights, kept);

  ModuleArtifact m;
  m.spec = std::move(sliced.spec);
  m.spec.name = parent.spec.name + "-module" + std::to_string(g.class_id);
  m.weights = std::move(sliced.weights);
  m.retained_kernels = retained_kernel_set(grouping, g);
  m.parent_fingerprint = opts.parent_fingerprint ? *opts.parent_fingerprint : fingerprint(parent.weights);
  m.class_id = g.class_id;
  m.genome = std::move(g);
  return m;
}

std::string format_genome_sidecar(const ModuleArtifact& module) {
  std::ostringstream os;
  os << "class = " << module.class_id << '\n';
  os << "parent = " << to_hex(module.parent_fingerprint) << '\n';
  os << "kernels = " << module.retained_kernels.size() << '\n';
  os << "bits = " << module.genome.bit_string() << '\n';
  os << "retained =";
  for (int k : module.retained_kernels) os << ' ' << k;
  os << '\n';
  return os.str();
}

void save_module(const ModuleArtifact& module, const std::string& dir) {
  std::filesystem::create_directories(dir);
  const std::filesystem::path base(dir);
  save_model_spec_file(module.spec, (base / "spec.txt").string());
  save_weights_file(module.weights, (base / "weights.cnsp").string());
  std::ofstream out(base / "genome.txt", std::ios::binary);
  if (!out) throw Error("cannot write genome sidecar in '" + dir + "'");
  out << format_genome_sidecar(module);
}

ModuleArtifact load_module(const std::string& dir) {
  const std::filesystem::path base(dir);
  ModuleArtifact m;
  m.spec = load_model_spec_file((base / "spec.txt").string());
  m.weights = load_weights_file((base / "weights.cnsp").string());
  validate_weights(m.spec, m.weights);
  std::ifstream in(base / "genome.txt");
  if (!in) throw Error("missing genome sidecar in '" + dir + "'");
  bool have_class = false;
  std::string bits;
  for (std::string line; std::getline(in, line);) {
    const auto eq = line.find('=');
    if (eq == std::string::npos) continue;
    std::string key = line.substr(0, eq);
    std::string value = line.substr(eq + 1);
    key.erase(key.find_last_not_of(' ') + 1);
    value.erase(0, value.find_first_not_of(' '));
    std::istringstream vs(value);
    if (key == "class") {
      vs >> m.class_id;
      have_class = true;
    } else if (key == "parent") {
      m.parent_fingerprint = std::stoull(value, nullptr, 16);
    } else if (key == "bits") {
      bits = value;
    } else if (key == "retained") {
      for (int k; vs >> k;) m.retained_kernels.push_back(k);
    }
  }
  if (!have_class) throw FormatError(FormatError::Kind::invalid, dir + "/genome.txt: missing class");
  m.genome = Genome::from_bit_string(bits, m.class_id);
  if (static_cast<std::int64_t>(m.retained_kernels.size()) != count_kernels(m.spec)) {
    throw FormatError(FormatError::Kind::invalid, dir + "/genome.txt: retained kernel list disagrees with spec");
  }
  return m;
}

}  // namespace cnnsplit
