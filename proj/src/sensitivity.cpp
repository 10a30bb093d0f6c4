#include "cnnsplit/sensitivity.hpp"

#include <cmath>

#include "cnnsplit/error.hpp"
#include "cnnsplit/parallel.hpp"

namespace cnnsplit {

std::vector<int> lowest_importance_kernels(const std::vector<double>& scores, double ratio) {
  const std::vector<int> order = importance_order(scores);
  const auto k = static_cast<long>(order.size());
  const long drop = std::min(k, std::lround(ratio * static_cast<double>(k)));
  return std::vector<int>(order.end() - drop, order.end());
}

ChannelMask segment_drop_mask(const SegmentLayout& layout, const LayerScores& scores, int segment,
                              double ratio) {
  ChannelMask mask(scores.size());
  for (int c : layout.members.at(segment)) {
    mask[c].assign(scores[c].size(), 1);
    for (int k : lowest_importance_kernels(scores[c], ratio)) mask[c][k] = 0;
  }
  return mask;
}

SensitivityProfile layer_sensitivity(const Network& net, const LabeledDataset& val,
                                     const ImportanceTable& importance, const SegmentLayout& layout,
                                     double threshold, int threads) {
  if (val.count() == 0) throw ConfigError("sensitivity needs a non-empty validation set");
  const LayerScores scores = class_agnostic(importance);
  SensitivityProfile p;
  p.threshold = threshold;
  p.baseline_accuracy = accuracy(net, val, threads);
  for (int i = 1; i <= 9; ++i) p.ratios.push_back(i / 10.0);

  const int segments = layout.segment_count();
  const std::size_t jobs = static_cast<std::size_t>(segments) * p.ratios.size();
  std::vector<double> acc(jobs);
  parallel_for(jobs, threads, [&](std::size_t j) {
    const int seg = static_cast<int>(j / p.ratios.size());
    const ChannelMask mask = segment_drop_mask(layout, scores, seg, p.ratios[j % p.ratios.size()]);
    acc[j] = accuracy(net, val, 1, &mask);
  });
  p.accuracy.resize(segments);
  for (int s = 0; s < segments; ++s) {
    p.accuracy[s].assign(acc.begin() + s * p.ratios.size(), acc.begin() + (s + 1) * p.ratios.size());
    p.sensitive.push_back(p.baseline_accuracy - p.accuracy[s].back() > threshold);
  }
  return p;
}

}  // namespace cnnsplit
