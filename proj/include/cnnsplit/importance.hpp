#pragma once

#include <vector>

#include "cnnsplit/dataset.hpp"
#include "cnnsplit/network.hpp"

namespace cnnsplit {

/// scores[conv][kernel]
using LayerScores = std::vector<std::vector<double>>;

/// Per-class kernel importance: the mean, over up to `sample_cap` class
/// samples, of the sum of a kernel's post-activation feature map.
struct ImportanceTable {
  std::vector<LayerScores> per_class;

  int num_classes() const noexcept { return static_cast<int>(per_class.size()); }
  bool operator==(const ImportanceTable&) const = default;
};

inline constexpr int kDefaultImportanceSamples = 500;

/// Uses the first min(sample_cap, available) samples of `class_id` in
/// dataset order. Throws ConfigError when the class has no samples.
LayerScores kernel_importance(const Network& net, const LabeledDataset& data, int class_id,
                              int sample_cap = kDefaultImportanceSamples);

ImportanceTable compute_importance(const Network& net, const LabeledDataset& data,
                                   int sample_cap = kDefaultImportanceSamples, int threads = 1);

/// Mean over classes, used where a class-independent ordering is needed.
LayerScores class_agnostic(const ImportanceTable& table);

}  // namespace cnnsplit
