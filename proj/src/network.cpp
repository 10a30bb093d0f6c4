#include "cnnsplit/network.hpp"

#include <string>

#include "cnnsplit/dataset.hpp"
#include "cnnsplit/error.hpp"
#include "cnnsplit/layers.hpp"
#include "cnnsplit/parallel.hpp"

namespace cnnsplit {

Network::Network(ModelSpec spec, const WeightStore& weights)
    : spec_(std::move(spec)), shapes_(infer_shapes(spec_)) {
  validate_weights(spec_, weights);
  std::vector<int> sources(shapes_.conv_output.size(), -1);
  for (const ResidualPair& r : spec_.residuals) {
    if (sources[r.dest] != -1) {
      throw ConfigError("conv" + std::to_string(r.dest) + " is the destination of two residual pairs");
    }
    sources[r.dest] = r.source;
  }
  for (std::size_t i = 0; i < shapes_.conv_output.size(); ++i) {
    const LayerDesc& l = spec_.layers[shapes_.conv_layer_index[i]];
    const int idx = static_cast<int>(i);
    convs_.push_back(Conv{weights.get(conv_kernels_name(idx)), weights.get(conv_bias_name(idx)),
                          l.stride, l.padding, sources[i]});
  }
  for (std::size_t i = 0; i < shapes_.fc_output.size(); ++i) {
    const int idx = static_cast<int>(i);
    fcs_.push_back(Fc{weights.get(fc_weights_name(idx)), weights.get(fc_bias_name(idx))});
  }
}

Tensor Network::forward(const Tensor& input, const ChannelMask* mask,
                        std::vector<Tensor>* conv_outputs) const {
  const Shape3& in = spec_.input;
  if (input.size() != static_cast<std::size_t>(in.c) * in.h * in.w) {
    throw ShapeError("network '" + spec_.name + "' expects input " + std::to_string(in.c) + "x" +
                     std::to_string(in.h) + "x" + std::to_string(in.w) + ", got " +
                     dims_to_string(input.dims()));
  }
  if (mask && !mask->empty() && mask->size() != convs_.size()) {
    throw ShapeError("channel mask covers " + std::to_string(mask->size()) + " conv layers, network has " +
                     std::to_string(convs_.size()));
  }

  // Residual sources need their outputs kept around.
  std::vector<Tensor> kept(convs_.size());
  std::vector<bool> needed(convs_.size(), false);
  for (const Conv& c : convs_) {
    if (c.residual_source >= 0) needed[c.residual_source] = true;
  }

  Tensor x = input.rank() == 3 ? input : input.reshaped({in.c, in.h, in.w});
  std::size_t conv_i = 0;
  std::size_t fc_i = 0;
  for (const LayerDesc& l : spec_.layers) {
    switch (l.kind) {
      case LayerKind::conv: {
        const Conv& c = convs_[conv_i];
        x = conv2d_forward(x, c.kernels, c.bias, c.stride, c.padding);
        if (c.residual_source >= 0) {
          const Tensor& skip = kept[c.residual_source];
          for (std::size_t j = 0; j < x.size(); ++j) x[j] += skip[j];
        }
        relu_inplace(x);
        if (mask && !mask->empty() && !(*mask)[conv_i].empty()) {
          const auto& m = (*mask)[conv_i];
          if (m.size() != static_cast<std::size_t>(x.dim(0))) {
            throw ShapeError("channel mask for conv" + std::to_string(conv_i) + " has " +
                             std::to_string(m.size()) + " entries, layer has " + std::to_string(x.dim(0)));
          }
          const std::size_t plane = static_cast<std::size_t>(x.dim(1)) * x.dim(2);
          for (std::size_t ch = 0; ch < m.size(); ++ch) {
            if (m[ch]) continue;
            std::fill_n(x.data() + ch * plane, plane, 0.0f);
          }
        }
        if (needed[conv_i]) kept[conv_i] = x;
        if (conv_outputs) conv_outputs->push_back(x);
        ++conv_i;
        break;
      }
      case LayerKind::maxpool:
        x = maxpool2d(x, l.window, l.stride);
        break;
      case LayerKind::flatten:
        x = x.reshaped({static_cast<int>(x.size())});
        break;
      case LayerKind::fc: {
        const Fc& f = fcs_[fc_i];
        x = fc_forward(x, f.weights, f.bias);
        ++fc_i;
        if (fc_i < fcs_.size()) relu_inplace(x);
        break;
      }
    }
  }
  return x;
}

Tensor model_forward(const ModelSpec& spec, const WeightStore& weights, const Tensor& input) {
  return Network(spec, weights).forward(input);
}

std::vector<std::vector<float>> forward_all(const Network& net, const LabeledDataset& data,
                                            int threads, const ChannelMask* mask) {
  std::vector<std::vector<float>> out(data.count());
  parallel_for(data.count(), threads, [&](std::size_t i) {
    const Tensor logits = net.forward(data.image(i), mask);
    out[i].assign(logits.values().begin(), logits.values().end());
  });
  return out;
}

std::vector<int> predict_all(const Network& net, const LabeledDataset& data, int threads,
                             const ChannelMask* mask) {
  const auto logits = forward_all(net, data, threads, mask);
  std::vector<int> out(logits.size());
  for (std::size_t i = 0; i < logits.size(); ++i) out[i] = argmax(std::span<const float>(logits[i]));
  return out;
}

double accuracy(const Network& net, const LabeledDataset& data, int threads, const ChannelMask* mask) {
  if (data.count() == 0) return 0.0;
  const auto pred = predict_all(net, data, threads, mask);
  std::size_t correct = 0;
  for (std::size_t i = 0; i < pred.size(); ++i) correct += pred[i] == data.labels[i];
  return static_cast<double>(correct) / static_cast<double>(pred.size());
}

}  // namespace cnnsplit
