#pragma once

#include <span>
#include <vector>

#include "cnnsplit/tensor.hpp"

namespace cnnsplit {

struct ConvLayerWeights {
  Tensor kernels;  // [C_out, C_in, K, K]
  Tensor bias;     // [C_out]
  int stride = 1;
  int padding = 0;
};

/// Output spatial extent of a convolution or pooling window.
int conv_output_extent(int extent, int kernel, int stride, int padding);

/// Direct convolution. Dot products accumulate in double.
Tensor conv2d_forward(const Tensor& input, const Tensor& kernels, const Tensor& bias,
                      int stride, int padding);
Tensor conv2d_forward(const Tensor& input, const ConvLayerWeights& layer);

Tensor maxpool2d(const Tensor& input, int window, int stride);

Tensor relu(Tensor input);
void relu_inplace(Tensor& t);

/// W.x + b with W laid out [D_out, D].
Tensor fc_forward(const Tensor& input, const Tensor& weights, const Tensor& bias);

/// Max-subtracted softmax.
Tensor softmax(const Tensor& input);
std::vector<double> softmax(std::span<const float> logits);

/// Index of the largest value; ties go to the lowest index.
int argmax(std::span<const float> values);
int argmax(std::span<const double> values);

}  // namespace cnnsplit
