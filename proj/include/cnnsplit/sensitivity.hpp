#pragma once

#include <vector>

#include "cnnsplit/dataset.hpp"
#include "cnnsplit/grouping.hpp"
#include "cnnsplit/importance.hpp"
#include "cnnsplit/network.hpp"

namespace cnnsplit {

inline constexpr double kDefaultSensitivityThreshold = 0.05;

/// Accuracy as the least important kernels of one segment are removed.
/// Flags are per genome segment (residual-joined layers are probed together).
struct SensitivityProfile {
  double baseline_accuracy = 0.0;
  double threshold = kDefaultSensitivityThreshold;
  std::vector<double> ratios;                 // 0.1 .. 0.9
  std::vector<std::vector<double>> accuracy;  // [segment][ratio]
  std::vector<bool> sensitive;                // [segment]

  bool operator==(const SensitivityProfile&) const = default;
};

/// Kernels removed from one layer at `ratio`: the round(ratio*K) lowest
/// entries of the descending importance order.
std::vector<int> lowest_importance_kernels(const std::vector<double>& scores, double ratio);

/// Zero mask removing `ratio` of every layer in `segment`.
ChannelMask segment_drop_mask(const SegmentLayout& layout, const LayerScores& scores, int segment,
                              double ratio);

/// Segment is sensitive iff baseline minus accuracy at the 90% drop exceeds
/// `threshold`. Accuracy is measured by zero-masking dropped channels.
SensitivityProfile layer_sensitivity(const Network& net, const LabeledDataset& val,
                                     const ImportanceTable& importance, const SegmentLayout& layout,
                                     double threshold = kDefaultSensitivityThreshold, int threads = 1);

}  // namespace cnnsplit
