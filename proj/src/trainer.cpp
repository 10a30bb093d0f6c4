#include "cnnsplit/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <sstream>

#include "cnnsplit/error.hpp"
#include "cnnsplit/layers.hpp"
#include "cnnsplit/network.hpp"

namespace cnnsplit {

void TrainConfig::validate() const {
  if (!(learning_rate >= 0.0)) throw ConfigError("learning_rate must be >= 0");
  if (!(momentum >= 0.0 && momentum < 1.0)) throw ConfigError("momentum must be in [0,1)");
  if (!(weight_decay >= 0.0)) throw ConfigError("weight_decay must be >= 0");
  if (epochs <= 0) throw ConfigError("epochs must be positive");
  if (batch_size <= 0) throw ConfigError("batch_size must be positive");
  if (!(dropout_rate >= 0.0 && dropout_rate < 1.0)) throw ConfigError("dropout_rate must be in [0,1)");
}

WeightStore init_weights(const ModelSpec& spec, std::uint64_t seed) {
  const ShapeInfo info = infer_shapes(spec);
  std::mt19937_64 rng(seed);
  WeightStore store;
  auto he = [&](std::vector<int> dims, int fan_in) {
    Tensor t(std::move(dims));
    std::normal_distribution<float> dist(0.0f, std::sqrt(2.0f / static_cast<float>(fan_in)));
    for (float& v : t.values()) v = dist(rng);
    return t;
  };
  for (std::size_t i = 0; i < info.conv_output.size(); ++i) {
    const LayerDesc& l = spec.layers[info.conv_layer_index[i]];
    const int c_in = info.conv_input[i].c;
    const int idx = static_cast<int>(i);
    store.set(conv_kernels_name(idx), he({l.out, c_in, l.kernel, l.kernel}, c_in * l.kernel * l.kernel));
    store.set(conv_bias_name(idx), Tensor({l.out}));
  }
  for (std::size_t i = 0; i < info.fc_output.size(); ++i) {
    const int idx = static_cast<int>(i);
    store.set(fc_weights_name(idx), he({info.fc_output[i], info.fc_input[i]}, info.fc_input[i]));
    store.set(fc_bias_name(idx), Tensor({info.fc_output[i]}));
  }
  return store;
}

namespace {

struct Param {
  Tensor* value;
  std::vector<double> grad;
  std::vector<double> velocity;
  bool decay;
};

struct ConvRef {
  Param* kernels;
  Param* bias;
  int stride;
  int padding;
  int residual_source;
};

struct FcRef {
  Param* weights;
  Param* bias;
};

// Activations of one sample, indexed by layer-list position.
struct Trace {
  std::vector<Tensor> inputs;
  std::vector<Tensor> outputs;
  std::vector<std::vector<int>> pool_argmax;
  std::vector<std::vector<float>> dropout_scale;
};

class Trainer {
 public:
  Trainer(const ModelSpec& spec, WeightStore& store, const TrainConfig& cfg)
      : spec_(spec), info_(infer_shapes(spec)), cfg_(cfg) {
    // std::map never relocates values, so pointers into `store` stay valid.
    for (const auto& [name, t] : store.entries()) {
      Tensor& value = store.get(name);
      params_.push_back(Param{&value, std::vector<double>(t.size(), 0.0),
                              std::vector<double>(t.size(), 0.0), !name.ends_with(".bias")});
    }
    auto find = [&](const std::string& name) -> Param* {
      for (Param& p : params_) {
        if (p.value == &store.get(name)) return &p;
      }
      throw ShapeError("missing parameter " + name);
    };
    std::vector<int> sources(info_.conv_output.size(), -1);
    for (const ResidualPair& r : spec_.residuals) sources[r.dest] = r.source;
    for (std::size_t i = 0; i < info_.conv_output.size(); ++i) {
      const LayerDesc& l = spec_.layers[info_.conv_layer_index[i]];
      const int idx = static_cast<int>(i);
      convs_.push_back(ConvRef{find(conv_kernels_name(idx)), find(conv_bias_name(idx)), l.stride,
                               l.padding, sources[i]});
    }
    for (std::size_t i = 0; i < info_.fc_output.size(); ++i) {
      const int idx = static_cast<int>(i);
      fcs_.push_back(FcRef{find(fc_weights_name(idx)), find(fc_bias_name(idx))});
    }
  }

  // Forward one sample recording everything backward needs; returns logits.
  Tensor forward(const Tensor& input, Trace& tr, std::mt19937_64* dropout_rng) {
    const std::size_t n = spec_.layers.size();
    tr.inputs.assign(n, Tensor());
    tr.outputs.assign(n, Tensor());
    tr.pool_argmax.assign(n, {});
    tr.dropout_scale.assign(n, {});
    std::vector<Tensor> conv_out(convs_.size());
    Tensor x = input;
    std::size_t ci = 0;
    std::size_t fi = 0;
    for (std::size_t li = 0; li < n; ++li) {
      const LayerDesc& l = spec_.layers[li];
      switch (l.kind) {
        case LayerKind::conv: {
          const ConvRef& c = convs_[ci];
          tr.inputs[li] = x;
          x = conv2d_forward(x, *c.kernels->value, *c.bias->value, c.stride, c.padding);
          if (c.residual_source >= 0) {
            const Tensor& skip = conv_out[c.residual_source];
            for (std::size_t j = 0; j < x.size(); ++j) x[j] += skip[j];
          }
          relu_inplace(x);
          conv_out[ci] = x;
          tr.outputs[li] = x;
          ++ci;
          break;
        }
        case LayerKind::maxpool: {
          tr.inputs[li] = x;
          const int c = x.dim(0), h = x.dim(1), w = x.dim(2);
          const int oh = conv_output_extent(h, l.window, l.stride, 0);
          const int ow = conv_output_extent(w, l.window, l.stride, 0);
          Tensor out({c, oh, ow});
          auto& arg = tr.pool_argmax[li];
          arg.resize(out.size());
          for (int ch = 0; ch < c; ++ch) {
            for (int oy = 0; oy < oh; ++oy) {
              for (int ox = 0; ox < ow; ++ox) {
                int best = (ch * h + oy * l.stride) * w + ox * l.stride;
                for (int dy = 0; dy < l.window; ++dy) {
                  for (int dx = 0; dx < l.window; ++dx) {
                    const int idx = (ch * h + oy * l.stride + dy) * w + ox * l.stride + dx;
                    if (x[idx] > x[best]) best = idx;
                  }
                }
                const std::size_t o = (static_cast<std::size_t>(ch) * oh + oy) * ow + ox;
                out[o] = x[best];
                arg[o] = best;
              }
            }
          }
          x = std::move(out);
          tr.outputs[li] = x;
          break;
        }
        case LayerKind::flatten:
          tr.inputs[li] = x;
          x = x.reshaped({static_cast<int>(x.size())});
          tr.outputs[li] = x;
          break;
        case LayerKind::fc: {
          if (dropout_rng && cfg_.dropout_rate > 0.0) {
            std::bernoulli_distribution keep(1.0 - cfg_.dropout_rate);
            const float scale = static_cast<float>(1.0 / (1.0 - cfg_.dropout_rate));
            auto& s = tr.dropout_scale[li];
            s.resize(x.size());
            for (std::size_t j = 0; j < x.size(); ++j) {
              s[j] = keep(*dropout_rng) ? scale : 0.0f;
              x[j] *= s[j];
            }
          }
          tr.inputs[li] = x;
          const FcRef& f = fcs_[fi];
          x = fc_forward(x, *f.weights->value, *f.bias->value);
          ++fi;
          if (fi < fcs_.size()) relu_inplace(x);
          tr.outputs[li] = x;
          break;
        }
      }
    }
    return x;
  }

  void backward(const Trace& tr, std::vector<double> grad_logits) {
    const std::size_t n = spec_.layers.size();
    std::vector<double> g = std::move(grad_logits);
    std::vector<std::vector<double>> residual_grad(convs_.size());
    std::size_t ci = convs_.size();
    std::size_t fi = fcs_.size();
    for (std::size_t li = n; li-- > 0;) {
      const LayerDesc& l = spec_.layers[li];
      switch (l.kind) {
        case LayerKind::fc: {
          --fi;
          const FcRef& f = fcs_[fi];
          const Tensor& out = tr.outputs[li];
          if (fi + 1 < fcs_.size()) {
            for (std::size_t j = 0; j < g.size(); ++j) {
              if (out[j] <= 0.0f) g[j] = 0.0;
            }
          }
          const Tensor& x = tr.inputs[li];
          const Tensor& w = *f.weights->value;
          const int d_out = w.dim(0);
          const int d = w.dim(1);
          std::vector<double> gx(static_cast<std::size_t>(d), 0.0);
          for (int r = 0; r < d_out; ++r) {
            const double gr = g[r];
            f.bias->grad[r] += gr;
            if (gr == 0.0) continue;
            double* gw = f.weights->grad.data() + static_cast<std::size_t>(r) * d;
            const float* wr = w.data() + static_cast<std::size_t>(r) * d;
            for (int i = 0; i < d; ++i) {
              gw[i] += gr * x[i];
              gx[i] += gr * wr[i];
            }
          }
          const auto& s = tr.dropout_scale[li];
          if (!s.empty()) {
            for (std::size_t j = 0; j < gx.size(); ++j) gx[j] *= s[j];
          }
          g = std::move(gx);
          break;
        }
        case LayerKind::flatten:
          break;
        case LayerKind::maxpool: {
          const Tensor& x = tr.inputs[li];
          std::vector<double> gx(x.size(), 0.0);
          const auto& arg = tr.pool_argmax[li];
          for (std::size_t o = 0; o < arg.size(); ++o) gx[arg[o]] += g[o];
          g = std::move(gx);
          break;
        }
        case LayerKind::conv: {
          --ci;
          const ConvRef& c = convs_[ci];
          const Tensor& out = tr.outputs[li];
          if (!residual_grad[ci].empty()) {
            for (std::size_t j = 0; j < g.size(); ++j) g[j] += residual_grad[ci][j];
          }
          for (std::size_t j = 0; j < g.size(); ++j) {
            if (out[j] <= 0.0f) g[j] = 0.0;
          }
          if (c.residual_source >= 0) {
            auto& rg = residual_grad[c.residual_source];
            if (rg.empty()) rg.assign(g.size(), 0.0);
            for (std::size_t j = 0; j < g.size(); ++j) rg[j] += g[j];
          }
          const Tensor& x = tr.inputs[li];
          const Tensor& k = *c.kernels->value;
          const int c_out = k.dim(0), c_in = k.dim(1), ks = k.dim(2);
          const int h = x.dim(1), w = x.dim(2);
          const int oh = out.dim(1), ow = out.dim(2);
          std::vector<double> gx(ci == 0 ? 0 : x.size(), 0.0);
          for (int oc = 0; oc < c_out; ++oc) {
            for (int oy = 0; oy < oh; ++oy) {
              for (int ox = 0; ox < ow; ++ox) {
                const double go = g[(static_cast<std::size_t>(oc) * oh + oy) * ow + ox];
                if (go == 0.0) continue;
                c.bias->grad[oc] += go;
                for (int ic = 0; ic < c_in; ++ic) {
                  for (int ky = 0; ky < ks; ++ky) {
                    const int iy = oy * c.stride - c.padding + ky;
                    if (iy < 0 || iy >= h) continue;
                    for (int kx = 0; kx < ks; ++kx) {
                      const int ix = ox * c.stride - c.padding + kx;
                      if (ix < 0 || ix >= w) continue;
                      const std::size_t kidx = ((static_cast<std::size_t>(oc) * c_in + ic) * ks + ky) * ks + kx;
                      const std::size_t xidx = (static_cast<std::size_t>(ic) * h + iy) * w + ix;
                      c.kernels->grad[kidx] += go * x[xidx];
                      if (!gx.empty()) gx[xidx] += go * k[kidx];
                    }
                  }
                }
              }
            }
          }
          g = std::move(gx);
          break;
        }
      }
    }
  }

  void step(std::size_t batch) {
    const double inv = 1.0 / static_cast<double>(batch);
    for (Param& p : params_) {
      float* w = p.value->data();
      for (std::size_t j = 0; j < p.grad.size(); ++j) {
        double grad = p.grad[j] * inv;
        if (p.decay) grad += cfg_.weight_decay * w[j];
        p.velocity[j] = cfg_.momentum * p.velocity[j] + grad;
        w[j] = static_cast<float>(w[j] - cfg_.learning_rate * p.velocity[j]);
        p.grad[j] = 0.0;
      }
    }
  }

 private:
  const ModelSpec& spec_;
  ShapeInfo info_;
  const TrainConfig& cfg_;
  std::vector<Param> params_;
  std::vector<ConvRef> convs_;
  std::vector<FcRef> fcs_;
};

Tensor flipped(const Tensor& img) {
  Tensor out(img.dims());
  const int c = img.dim(0), h = img.dim(1), w = img.dim(2);
  for (int ch = 0; ch < c; ++ch) {
    for (int y = 0; y < h; ++y) {
      for (int x = 0; x < w; ++x) out.at(ch, y, x) = img.at(ch, y, w - 1 - x);
    }
  }
  return out;
}

}  // namespace

TrainResult sgd_train(const ModelSpec& spec, const WeightStore& initial, const LabeledDataset& train,
                      const TrainConfig& cfg, const LabeledDataset* val) {
  cfg.validate();
  validate_weights(spec, initial);
  for (int label : train.labels) {
    if (label < 0 || label >= spec.num_classes) {
      throw ConfigError("training label " + std::to_string(label) + " outside [0," +
                        std::to_string(spec.num_classes) + ")");
    }
  }
  if (train.count() == 0) throw ConfigError("training set is empty");

  TrainResult result;
  result.weights = initial;
  Trainer trainer(spec, result.weights, cfg);
  std::mt19937_64 rng(cfg.seed);
  std::vector<std::size_t> order(train.count());
  std::iota(order.begin(), order.end(), 0);
  Trace trace;

  for (int epoch = 1; epoch <= cfg.epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng);
    double loss_sum = 0.0;
    std::size_t correct = 0;
    for (std::size_t start = 0; start < order.size(); start += cfg.batch_size) {
      const std::size_t end = std::min(order.size(), start + static_cast<std::size_t>(cfg.batch_size));
      double batch_loss = 0.0;
      for (std::size_t b = start; b < end; ++b) {
        const std::size_t i = order[b];
        Tensor img = train.image(i);
        if (cfg.augment && std::bernoulli_distribution(0.5)(rng)) img = flipped(img);
        const Tensor logits = trainer.forward(img, trace, &rng);
        const auto probs = softmax(logits.values());
        const int label = train.labels[i];
        batch_loss += -std::log(std::max(probs[label], 1e-300));
        correct += argmax(logits.values()) == label;
        std::vector<double> grad = probs;
        grad[label] -= 1.0;
        trainer.backward(trace, std::move(grad));
      }
      if (!std::isfinite(batch_loss)) {
        throw TrainingError("non-finite loss at epoch " + std::to_string(epoch) + ", batch starting at " +
                            std::to_string(start) + " (lr " + std::to_string(cfg.learning_rate) + ")");
      }
      loss_sum += batch_loss;
      trainer.step(end - start);
    }
    EpochStats stats;
    stats.epoch = epoch;
    stats.loss = loss_sum / static_cast<double>(order.size());
    stats.train_accuracy = static_cast<double>(correct) / static_cast<double>(order.size());
    if (val && val->count() > 0) {
      stats.val_accuracy = accuracy(Network(spec, result.weights), *val);
    }
    result.history.push_back(stats);
  }
  return result;
}

std::string format_history_csv(const std::vector<EpochStats>& history) {
  std::ostringstream os;
  os.precision(9);
  os << "epoch,loss,train_accuracy,val_accuracy\n";
  for (const auto& e : history) {
    os << e.epoch << ',' << e.loss << ',' << e.train_accuracy << ',' << e.val_accuracy << '\n';
  }
  return os.str();
}

std::vector<EpochStats> parse_history_csv(const std::string& text) {
  std::istringstream is(text);
  std::string line;
  if (!std::getline(is, line) || !line.starts_with("epoch,")) {
    throw FormatError(FormatError::Kind::invalid, "training history: missing header");
  }
  std::vector<EpochStats> out;
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    EpochStats e;
    char c1, c2, c3;
    std::istringstream ls(line);
    if (!(ls >> e.epoch >> c1 >> e.loss >> c2 >> e.train_accuracy >> c3 >> e.val_accuracy)) {
      throw FormatError(FormatError::Kind::invalid, "training history: bad row '" + line + "'");
    }
    out.push_back(e);
  }
  return out;
}

int best_epoch(const std::vector<EpochStats>& history) {
  if (history.empty()) throw ConfigError("training history is empty");
  int best = history.back().epoch;
  double best_acc = -1.0;
  for (const auto& e : history) {
    if (e.val_accuracy > best_acc) {
      best_acc = e.val_accuracy;
      best = e.epoch;
    }
  }
  return best_acc < 0.0 ? history.back().epoch : best;
}

}  // namespace cnnsplit
