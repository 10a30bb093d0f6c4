#pragma once

#include <cstdint>
#include <vector>

#include "cnnsplit/model_spec.hpp"
#include "cnnsplit/tensor.hpp"
#include "cnnsplit/weight_store.hpp"

namespace cnnsplit {

/// Per conv layer, 1 = channel kept, 0 = channel forced to zero after the
/// layer's activation. An empty inner vector keeps every channel.
using ChannelMask = std::vector<std::vector<std::uint8_t>>;

/// A spec bound to its weights, validated once. Forward passes are const and
/// safe to run concurrently.
class Network {
 public:
  Network(ModelSpec spec, const WeightStore& weights);

  const ModelSpec& spec() const noexcept { return spec_; }
  const ShapeInfo& shapes() const noexcept { return shapes_; }
  int num_classes() const noexcept { return spec_.num_classes; }

  /// Logits for one [C,H,W] input. `conv_outputs`, when given, receives each
  /// conv layer's post-activation (post-residual, post-mask) feature map.
  Tensor forward(const Tensor& input, const ChannelMask* mask = nullptr,
                 std::vector<Tensor>* conv_outputs = nullptr) const;

 private:
  struct Conv {
    Tensor kernels;
    Tensor bias;
    int stride;
    int padding;
    int residual_source;  // conv index or -1
  };
  struct Fc {
    Tensor weights;
    Tensor bias;
  };

  ModelSpec spec_;
  ShapeInfo shapes_;
  std::vector<Conv> convs_;
  std::vector<Fc> fcs_;
};

struct Model {
  ModelSpec spec;
  WeightStore weights;
};

Tensor model_forward(const ModelSpec& spec, const WeightStore& weights, const Tensor& input);

struct LabeledDataset;

/// Logits for every sample, row i for sample i.
std::vector<std::vector<float>> forward_all(const Network& net, const LabeledDataset& data,
                                            int threads = 1, const ChannelMask* mask = nullptr);
std::vector<int> predict_all(const Network& net, const LabeledDataset& data, int threads = 1,
                             const ChannelMask* mask = nullptr);
/// Fraction of correct argmax predictions; 0 on an empty dataset.
double accuracy(const Network& net, const LabeledDataset& data, int threads = 1,
                const ChannelMask* mask = nullptr);

}  // namespace cnnsplit
