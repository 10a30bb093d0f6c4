#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "cnnsplit/model_spec.hpp"
#include "cnnsplit/tensor.hpp"

namespace cnnsplit {

/// Images [count,C,H,W] in [0,1] with integer labels in [0,N).
struct LabeledDataset {
  Shape3 shape;
  int num_classes = 0;
  std::vector<float> pixels;
  std::vector<int> labels;

  std::size_t count() const noexcept { return labels.size(); }
  std::size_t image_size() const noexcept {
    return static_cast<std::size_t>(shape.c) * shape.h * shape.w;
  }
  std::span<const float> image_span(std::size_t i) const {
    return std::span<const float>(pixels).subspan(i * image_size(), image_size());
  }
  Tensor image(std::size_t i) const;

  std::vector<std::size_t> indices_of(int class_id) const;
  LabeledDataset subset(std::span<const std::size_t> indices) const;
  /// Samples whose label is in `classes`.
  LabeledDataset restricted_to(std::span<const int> classes) const;

  bool operator==(const LabeledDataset&) const = default;
};

// CNDS layout, little-endian:
//   "CNDS" u32 count u32 C u32 H u32 W u32 N, count*C*H*W f32 pixels, count u32 labels
std::vector<std::uint8_t> save_dataset(const LabeledDataset& ds);
LabeledDataset load_dataset(const std::vector<std::uint8_t>& bytes);
void save_dataset_file(const LabeledDataset& ds, const std::string& path);
LabeledDataset load_dataset_file(const std::string& path);

/// Settings for the procedurally drawn shape-recognition task used at desk scale.
struct ShapeTaskConfig {
  int num_classes = 3;
  int per_class = 100;
  int size = 12;
  float noise = 0.15f;
  std::uint64_t seed = 1;
};

/// Classes are flip-invariant glyphs (horizontal bar, vertical bar, box
/// outline, plus, X, ring, dot, frame corner pair) drawn at jittered
/// positions with additive noise. Samples are interleaved by class.
LabeledDataset make_shape_dataset(const ShapeTaskConfig& cfg);

inline constexpr int kShapeTaskMaxClasses = 8;

}  // namespace cnnsplit
