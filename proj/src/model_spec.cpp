#include "cnnsplit/model_spec.hpp"

#include <charconv>
#include <fstream>
#include <map>
#include <sstream>

#include "cnnsplit/error.hpp"
#include "cnnsplit/layers.hpp"

namespace cnnsplit {

LayerDesc LayerDesc::conv(int out_channels, int kernel_size, int stride, int padding) {
  LayerDesc d;
  d.kind = LayerKind::conv;
  d.out = out_channels;
  d.kernel = kernel_size;
  d.stride = stride;
  d.padding = padding;
  return d;
}

LayerDesc LayerDesc::maxpool(int window, int stride) {
  LayerDesc d;
  d.kind = LayerKind::maxpool;
  d.window = window;
  d.stride = stride;
  return d;
}

LayerDesc LayerDesc::flatten() {
  LayerDesc d;
  d.kind = LayerKind::flatten;
  return d;
}

LayerDesc LayerDesc::fc(int out_features) {
  LayerDesc d;
  d.kind = LayerKind::fc;
  d.out = out_features;
  return d;
}

std::string conv_kernels_name(int i) { return "conv" + std::to_string(i) + ".kernels"; }
std::string conv_bias_name(int i) { return "conv" + std::to_string(i) + ".bias"; }
std::string fc_weights_name(int i) { return "fc" + std::to_string(i) + ".weights"; }
std::string fc_bias_name(int i) { return "fc" + std::to_string(i) + ".bias"; }

namespace {

std::string shape_str(const Shape3& s) {
  return std::to_string(s.c) + "x" + std::to_string(s.h) + "x" + std::to_string(s.w);
}

}  // namespace

ShapeInfo infer_shapes(const ModelSpec& spec) {
  if (spec.num_classes <= 0) throw ConfigError("model spec: classes must be positive");
  if (spec.input.c <= 0 || spec.input.h <= 0 || spec.input.w <= 0) {
    throw ConfigError("model spec: input dims must be positive, got " + shape_str(spec.input));
  }
  ShapeInfo info;
  Shape3 cur = spec.input;
  int features = 0;
  bool flattened = false;

  for (std::size_t i = 0; i < spec.layers.size(); ++i) {
    const LayerDesc& l = spec.layers[i];
    const std::string where = "layer " + std::to_string(i);
    switch (l.kind) {
      case LayerKind::conv: {
        if (flattened) throw ConfigError(where + ": conv after flatten");
        if (l.out <= 0 || l.kernel <= 0 || l.stride <= 0 || l.padding < 0) {
          throw ConfigError(where + ": conv needs out>0, kernel>0, stride>0, padding>=0");
        }
        if (cur.h + 2 * l.padding < l.kernel || cur.w + 2 * l.padding < l.kernel) {
          throw ConfigError(where + ": kernel " + std::to_string(l.kernel) +
                            " larger than padded input " + shape_str(cur));
        }
        info.conv_input.push_back(cur);
        Shape3 next{l.out, conv_output_extent(cur.h, l.kernel, l.stride, l.padding),
                    conv_output_extent(cur.w, l.kernel, l.stride, l.padding)};
        info.conv_output.push_back(next);
        info.conv_layer_index.push_back(static_cast<int>(i));
        cur = next;
        break;
      }
      case LayerKind::maxpool: {
        if (flattened) throw ConfigError(where + ": maxpool after flatten");
        if (l.window <= 0 || l.stride <= 0 || l.window > cur.h || l.window > cur.w) {
          throw ConfigError(where + ": pool window " + std::to_string(l.window) +
                            " invalid for input " + shape_str(cur));
        }
        cur = Shape3{cur.c, conv_output_extent(cur.h, l.window, l.stride, 0),
                     conv_output_extent(cur.w, l.window, l.stride, 0)};
        break;
      }
      case LayerKind::flatten: {
        if (flattened) throw ConfigError(where + ": second flatten");
        flattened = true;
        info.flatten_source = cur;
        features = cur.c * cur.h * cur.w;
        break;
      }
      case LayerKind::fc: {
        if (!flattened) throw ConfigError(where + ": fc before flatten");
        if (l.out <= 0) throw ConfigError(where + ": fc needs out>0");
        info.fc_input.push_back(features);
        info.fc_output.push_back(l.out);
        info.fc_layer_index.push_back(static_cast<int>(i));
        features = l.out;
        break;
      }
    }
  }

  if (info.conv_output.empty()) throw ConfigError("model spec: at least one conv layer required");
  if (info.fc_output.empty() || spec.layers.back().kind != LayerKind::fc) {
    throw ConfigError("model spec: must end with flatten ... fc producing the logits");
  }
  if (features != spec.num_classes) {
    throw ConfigError("model spec: final fc emits " + std::to_string(features) +
                      " logits but classes = " + std::to_string(spec.num_classes));
  }
  info.logits = features;

  const int convs = static_cast<int>(info.conv_output.size());
  for (const ResidualPair& r : spec.residuals) {
    const std::string pair = "residual pair conv" + std::to_string(r.source) + " -> conv" +
                             std::to_string(r.dest);
    if (r.source < 0 || r.dest < 0 || r.source >= convs || r.dest >= convs) {
      throw ConfigError(pair + ": conv index out of range (" + std::to_string(convs) +
                        " conv layers)");
    }
    if (r.source >= r.dest) throw ConfigError(pair + ": source must precede destination");
    const Shape3& a = info.conv_output[r.source];
    const Shape3& b = info.conv_output[r.dest];
    if (a.c != b.c) {
      throw ConfigError(pair + ": channel mismatch (" + std::to_string(a.c) + " vs " +
                        std::to_string(b.c) + ")");
    }
    if (a.h != b.h || a.w != b.w) {
      throw ConfigError(pair + ": spatial mismatch (" + shape_str(a) + " vs " + shape_str(b) +
                        ")");
    }
  }
  return info;
}

namespace {

std::string trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return std::string(s.substr(b, e - b + 1));
}

std::vector<std::string> split_ws(const std::string& s) {
  std::istringstream is(s);
  std::vector<std::string> out;
  for (std::string tok; is >> tok;) out.push_back(tok);
  return out;
}

int parse_int(const std::string& s, const std::string& where) {
  int v = 0;
  const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || ptr != s.data() + s.size()) {
    throw ConfigError(where + ": expected integer, got '" + s + "'");
  }
  return v;
}

LayerDesc parse_layer(const std::vector<std::string>& toks, const std::string& where) {
  if (toks.empty()) throw ConfigError(where + ": empty layer");
  std::map<std::string, int> kv;
  for (std::size_t i = 1; i < toks.size(); ++i) {
    const auto eq = toks[i].find('=');
    if (eq == std::string::npos) throw ConfigError(where + ": expected key=value, got '" + toks[i] + "'");
    kv[toks[i].substr(0, eq)] = parse_int(toks[i].substr(eq + 1), where);
  }
  auto take = [&](const char* key, int fallback, bool required) {
    const auto it = kv.find(key);
    if (it == kv.end()) {
      if (required) throw ConfigError(where + ": missing '" + key + "'");
      return fallback;
    }
    const int v = it->second;
    kv.erase(it);
    return v;
  };
  LayerDesc d;
  const std::string& kind = toks[0];
  if (kind == "conv") {
    const int out = take("out", 0, true);
    const int kernel = take("kernel", 0, true);
    const int stride = take("stride", 1, false);
    const int padding = take("padding", 0, false);
    d = LayerDesc::conv(out, kernel, stride, padding);
  } else if (kind == "maxpool") {
    const int window = take("window", 0, true);
    const int stride = take("stride", window, false);
    d = LayerDesc::maxpool(window, stride);
  } else if (kind == "flatten") {
    d = LayerDesc::flatten();
  } else if (kind == "fc") {
    d = LayerDesc::fc(take("out", 0, true));
  } else {
    throw ConfigError(where + ": unknown layer kind '" + kind + "'");
  }
  if (!kv.empty()) throw ConfigError(where + ": unknown attribute '" + kv.begin()->first + "'");
  return d;
}

}  // namespace

ModelSpec parse_model_spec(std::string_view text) {
  ModelSpec spec;
  bool have_classes = false;
  bool have_input = false;
  std::istringstream is{std::string(text)};
  int lineno = 0;
  for (std::string raw; std::getline(is, raw);) {
    ++lineno;
    const auto hash = raw.find('#');
    const std::string line = trim(hash == std::string::npos ? raw : raw.substr(0, hash));
    if (line.empty()) continue;
    const std::string where = "line " + std::to_string(lineno);
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw ConfigError(where + ": expected 'key = value'");
    const std::string key = trim(std::string_view(line).substr(0, eq));
    const std::string value = trim(std::string_view(line).substr(eq + 1));
    const auto toks = split_ws(value);
    if (key == "name") {
      spec.name = value;
    } else if (key == "classes") {
      if (toks.size() != 1) throw ConfigError(where + ": classes takes one integer");
      spec.num_classes = parse_int(toks[0], where);
      have_classes = true;
    } else if (key == "input") {
      if (toks.size() != 3) throw ConfigError(where + ": input takes C H W");
      spec.input = Shape3{parse_int(toks[0], where), parse_int(toks[1], where),
                          parse_int(toks[2], where)};
      have_input = true;
    } else if (key == "layer") {
      spec.layers.push_back(parse_layer(toks, where));
    } else if (key == "residual") {
      if (toks.size() != 2) throw ConfigError(where + ": residual takes source and dest conv indices");
      spec.residuals.push_back(ResidualPair{parse_int(toks[0], where), parse_int(toks[1], where)});
    } else {
      throw ConfigError(where + ": unknown key '" + key + "'");
    }
  }
  if (!have_classes) throw ConfigError("model spec: missing 'classes'");
  if (!have_input) throw ConfigError("model spec: missing 'input'");
  infer_shapes(spec);
  return spec;
}

ModelSpec load_model_spec_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open model spec '" + path + "'");
  std::ostringstream os;
  os << in.rdbuf();
  try {
    return parse_model_spec(os.str());
  } catch (const ConfigError& e) {
    throw ConfigError(path + ": " + e.what());
  }
}

std::string format_model_spec(const ModelSpec& spec) {
  std::ostringstream os;
  os << "name = " << spec.name << '\n';
  os << "classes = " << spec.num_classes << '\n';
  os << "input = " << spec.input.c << ' ' << spec.input.h << ' ' << spec.input.w << '\n';
  for (const LayerDesc& l : spec.layers) {
    os << "layer = ";
    switch (l.kind) {
      case LayerKind::conv:
        os << "conv out=" << l.out << " kernel=" << l.kernel << " stride=" << l.stride
           << " padding=" << l.padding;
        break;
      case LayerKind::maxpool:
        os << "maxpool window=" << l.window << " stride=" << l.stride;
        break;
      case LayerKind::flatten:
        os << "flatten";
        break;
      case LayerKind::fc:
        os << "fc out=" << l.out;
        break;
    }
    os << '\n';
  }
  for (const ResidualPair& r : spec.residuals) {
    os << "residual = " << r.source << ' ' << r.dest << '\n';
  }
  return os.str();
}

void save_model_spec_file(const ModelSpec& spec, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot write model spec '" + path + "'");
  out << format_model_spec(spec);
}

int conv_layer_count(const ModelSpec& spec) {
  int n = 0;
  for (const auto& l : spec.layers) n += l.kind == LayerKind::conv;
  return n;
}

int fc_layer_count(const ModelSpec& spec) {
  int n = 0;
  for (const auto& l : spec.layers) n += l.kind == LayerKind::fc;
  return n;
}

std::vector<int> conv_channels(const ModelSpec& spec) {
  std::vector<int> out;
  for (const auto& l : spec.layers) {
    if (l.kind == LayerKind::conv) out.push_back(l.out);
  }
  return out;
}

std::int64_t count_kernels(const ModelSpec& spec) {
  std::int64_t total = 0;
  for (int c : conv_channels(spec)) total += c;
  return total;
}

std::vector<std::int64_t> layer_flops(const ModelSpec& spec, const Shape3& input) {
  ModelSpec resized = spec;
  resized.input = input;
  const ShapeInfo info = infer_shapes(resized);
  std::vector<std::int64_t> flops(spec.layers.size(), 0);
  for (std::size_t i = 0; i < info.conv_output.size(); ++i) {
    const LayerDesc& l = spec.layers[info.conv_layer_index[i]];
    const Shape3& in = info.conv_input[i];
    const Shape3& out = info.conv_output[i];
    flops[info.conv_layer_index[i]] = 2LL * in.c * l.kernel * l.kernel * out.h * out.w * out.c;
  }
  for (std::size_t i = 0; i < info.fc_output.size(); ++i) {
    flops[info.fc_layer_index[i]] = 2LL * info.fc_input[i] * info.fc_output[i];
  }
  return flops;
}

std::int64_t count_flops(const ModelSpec& spec, const Shape3& input) {
  std::int64_t total = 0;
  for (std::int64_t f : layer_flops(spec, input)) total += f;
  return total;
}

std::int64_t count_flops(const ModelSpec& spec) { return count_flops(spec, spec.input); }

}  // namespace cnnsplit
