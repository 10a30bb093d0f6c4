#include "cnnsplit/layers.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "cnnsplit/error.hpp"

namespace cnnsplit {

int conv_output_extent(int extent, int kernel, int stride, int padding) {
  if (stride <= 0) throw ShapeError("stride must be positive");
  const int span = extent + 2 * padding - kernel;
  if (span < 0) {
    throw ShapeError("window " + std::to_string(kernel) + " exceeds padded extent " +
                     std::to_string(extent + 2 * padding));
  }
  return span / stride + 1;
}

Tensor conv2d_forward(const Tensor& input, const Tensor& kernels, const Tensor& bias,
                      int stride, int padding) {
  if (input.rank() != 3) {
    throw ShapeError("conv2d input must be [C,H,W], got " + dims_to_string(input.dims()));
  }
  if (kernels.rank() != 4 || kernels.dim(2) != kernels.dim(3)) {
    throw ShapeError("conv2d kernels must be [C_out,C_in,K,K], got " +
                     dims_to_string(kernels.dims()));
  }
  const int c_out = kernels.dim(0);
  const int c_in = kernels.dim(1);
  const int k = kernels.dim(2);
  if (input.dim(0) != c_in) {
    throw ShapeError("conv2d channel mismatch: kernels expect " + std::to_string(c_in) +
                     " input channels, input has " + std::to_string(input.dim(0)));
  }
  if (bias.size() != static_cast<std::size_t>(c_out)) {
    throw ShapeError("conv2d bias length " + std::to_string(bias.size()) +
                     " does not match " + std::to_string(c_out) + " kernels");
  }
  const int h = input.dim(1);
  const int w = input.dim(2);
  const int oh = conv_output_extent(h, k, stride, padding);
  const int ow = conv_output_extent(w, k, stride, padding);

  Tensor out({c_out, oh, ow});
  const float* in = input.data();
  const float* kw = kernels.data();
  float* o = out.data();
  const std::size_t plane = static_cast<std::size_t>(h) * w;
  const std::size_t kernel_size = static_cast<std::size_t>(c_in) * k * k;

  for (int oc = 0; oc < c_out; ++oc) {
    const float* kern = kw + oc * kernel_size;
    for (int oy = 0; oy < oh; ++oy) {
      const int iy0 = oy * stride - padding;
      const int ky_lo = std::max(0, -iy0);
      const int ky_hi = std::min(k, h - iy0);
      for (int ox = 0; ox < ow; ++ox) {
        const int ix0 = ox * stride - padding;
        const int kx_lo = std::max(0, -ix0);
        const int kx_hi = std::min(k, w - ix0);
        double acc = bias[oc];
        for (int ic = 0; ic < c_in; ++ic) {
          const float* in_c = in + ic * plane;
          const float* k_c = kern + static_cast<std::size_t>(ic) * k * k;
          for (int ky = ky_lo; ky < ky_hi; ++ky) {
            const float* row = in_c + static_cast<std::size_t>(iy0 + ky) * w + ix0;
            const float* krow = k_c + ky * k;
            for (int kx = kx_lo; kx < kx_hi; ++kx) {
              acc += static_cast<double>(krow[kx]) * row[kx];
            }
          }
        }
        o[(static_cast<std::size_t>(oc) * oh + oy) * ow + ox] = static_cast<float>(acc);
      }
    }
  }
  return out;
}

Tensor conv2d_forward(const Tensor& input, const ConvLayerWeights& layer) {
  return conv2d_forward(input, layer.kernels, layer.bias, layer.stride, layer.padding);
}

Tensor maxpool2d(const Tensor& input, int window, int stride) {
  if (input.rank() != 3) {
    throw ShapeError("maxpool input must be [C,H,W], got " + dims_to_string(input.dims()));
  }
  const int c = input.dim(0);
  const int h = input.dim(1);
  const int w = input.dim(2);
  if (window <= 0 || window > h || window > w) {
    throw ShapeError("pool window " + std::to_string(window) + " exceeds spatial dims " +
                     std::to_string(h) + "x" + std::to_string(w));
  }
  const int oh = conv_output_extent(h, window, stride, 0);
  const int ow = conv_output_extent(w, window, stride, 0);
  Tensor out({c, oh, ow});
  for (int ch = 0; ch < c; ++ch) {
    for (int oy = 0; oy < oh; ++oy) {
      for (int ox = 0; ox < ow; ++ox) {
        float best = input.at(ch, oy * stride, ox * stride);
        for (int dy = 0; dy < window; ++dy) {
          for (int dx = 0; dx < window; ++dx) {
            best = std::max(best, input.at(ch, oy * stride + dy, ox * stride + dx));
          }
        }
        out.at(ch, oy, ox) = best;
      }
    }
  }
  return out;
}

void relu_inplace(Tensor& t) {
  for (float& v : t.values()) v = v > 0.0f ? v : 0.0f;
}

Tensor relu(Tensor input) {
  relu_inplace(input);
  return input;
}

Tensor fc_forward(const Tensor& input, const Tensor& weights, const Tensor& bias) {
  if (weights.rank() != 2) {
    throw ShapeError("fc weights must be [D_out,D], got " + dims_to_string(weights.dims()));
  }
  const int d_out = weights.dim(0);
  const int d = weights.dim(1);
  if (input.size() != static_cast<std::size_t>(d)) {
    throw ShapeError("fc input mismatch: weights expect " + std::to_string(d) +
                     " features, input has " + std::to_string(input.size()));
  }
  if (bias.size() != static_cast<std::size_t>(d_out)) {
    throw ShapeError("fc bias length " + std::to_string(bias.size()) + " does not match " +
                     std::to_string(d_out) + " outputs");
  }
  Tensor out({d_out});
  const float* x = input.data();
  for (int r = 0; r < d_out; ++r) {
    const float* row = weights.data() + static_cast<std::size_t>(r) * d;
    double acc = bias[r];
    for (int i = 0; i < d; ++i) acc += static_cast<double>(row[i]) * x[i];
    out[r] = static_cast<float>(acc);
  }
  return out;
}

std::vector<double> softmax(std::span<const float> logits) {
  std::vector<double> out(logits.size());
  if (logits.empty()) return out;
  const float peak = *std::max_element(logits.begin(), logits.end());
  double total = 0.0;
  for (std::size_t i = 0; i < logits.size(); ++i) {
    out[i] = std::exp(static_cast<double>(logits[i]) - peak);
    total += out[i];
  }
  for (double& v : out) v /= total;
  return out;
}

Tensor softmax(const Tensor& input) {
  const auto probs = softmax(input.values());
  Tensor out(input.dims());
  for (std::size_t i = 0; i < probs.size(); ++i) out[i] = static_cast<float>(probs[i]);
  return out;
}

int argmax(std::span<const float> values) {
  int best = 0;
  for (std::size_t i = 1; i < values.size(); ++i) {
    if (values[i] > values[best]) best = static_cast<int>(i);
  }
  return best;
}

int argmax(std::span<const double> values) {
  int best = 0;
  for (std::size_t i = 1; i < values.size(); ++i) {
    if (values[i] > values[best]) best = static_cast<int>(i);
  }
  return best;
}

}  // namespace cnnsplit
