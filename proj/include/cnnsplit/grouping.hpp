#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "cnnsplit/importance.hpp"
#include "cnnsplit/model_spec.hpp"

namespace cnnsplit {

enum class GroupingMode { importance, random, none };

GroupingMode parse_grouping_mode(const std::string& s);
std::string to_string(GroupingMode m);

/// How genome bits map onto conv layers. Conv layers joined by residual
/// pairs (transitively) share one segment; members[s][0] is the earliest
/// layer of the segment and drives its group count.
struct SegmentLayout {
  std::vector<std::vector<int>> members;
  std::vector<int> segment_of;  // conv index -> segment
  std::vector<int> groups;      // bits per segment
  std::vector<int> offset;      // first bit of each segment
  int total_bits = 0;

  int segment_count() const noexcept { return static_cast<int>(members.size()); }
  bool operator==(const SegmentLayout&) const = default;
};

/// 10 groups below 256 kernels, 100 otherwise, never more groups than
/// kernels. `none` mode gives one group per kernel.
int groups_for_layer(int kernels, GroupingMode mode);

SegmentLayout make_segment_layout(const ModelSpec& spec, GroupingMode mode);

/// groups[class][conv][g] = kernel indices of group g, highest importance
/// first within the layer.
struct GroupingMap {
  SegmentLayout layout;
  std::vector<int> layer_kernels;  // per conv
  std::vector<std::vector<std::vector<std::vector<int>>>> groups;
  GroupingMode mode = GroupingMode::importance;

  int num_classes() const noexcept { return static_cast<int>(groups.size()); }
  int total_bits() const noexcept { return layout.total_bits; }
  /// Global id offset of each conv layer's kernels.
  std::vector<int> kernel_offsets() const;
  int total_kernels() const;

  bool operator==(const GroupingMap&) const = default;
};

/// Kernel indices by descending score; ties keep ascending index.
std::vector<int> importance_order(const std::vector<double>& scores);

/// Splits an ordering into `groups` contiguous runs whose sizes differ by at
/// most one; the larger runs come first.
std::vector<std::vector<int>> partition_ordered(const std::vector<int>& order, int groups);

/// `seed` only matters for GroupingMode::random.
GroupingMap build_grouping(const ImportanceTable& importance, const ModelSpec& spec,
                           GroupingMode mode = GroupingMode::importance, std::uint64_t seed = 0);

}  // namespace cnnsplit
