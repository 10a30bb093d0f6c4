#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "cnnsplit/grouping.hpp"

namespace cnnsplit {

/// One bit per kernel group; 1 keeps the group, 0 removes it.
struct Genome {
  std::vector<std::uint8_t> bits;
  int class_id = 0;

  std::size_t size() const noexcept { return bits.size(); }
  std::string bit_string() const;
  static Genome from_bit_string(const std::string& s, int class_id);

  bool operator==(const Genome&) const = default;
};

Genome all_ones_genome(const SegmentLayout& layout, int class_id);

/// True when every segment keeps at least one group.
bool is_repaired(const Genome& g, const SegmentLayout& layout);

/// Re-enables group 0 (the most important) of every segment left empty.
Genome repair(Genome g, const SegmentLayout& layout);

/// Kept kernel indices per conv layer, ascending. Residual-joined layers
/// each apply the shared segment bits to their own grouping.
std::vector<std::vector<int>> kept_channels(const GroupingMap& grouping, const Genome& g);

/// Union of kept groups as global kernel ids (conv offset + index), sorted.
std::vector<int> retained_kernel_set(const GroupingMap& grouping, const Genome& g);

}  // namespace cnnsplit
