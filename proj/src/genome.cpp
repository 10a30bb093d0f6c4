#include "cnnsplit/genome.hpp"

#include <algorithm>

#include "cnnsplit/error.hpp"

namespace cnnsplit {

std::string Genome::bit_string() const {
  std::string s(bits.size(), '0');
  for (std::size_t i = 0; i < bits.size(); ++i) {
    if (bits[i]) s[i] = '1';
  }
  return s;
}

Genome Genome::from_bit_string(const std::string& s, int class_id) {
  Genome g;
  g.class_id = class_id;
  g.bits.reserve(s.size());
  for (char ch : s) {
    if (ch != '0' && ch != '1') throw FormatError(FormatError::Kind::invalid, "genome bit string has '" + std::string(1, ch) + "'");
    g.bits.push_back(ch == '1');
  }
  return g;
}

Genome all_ones_genome(const SegmentLayout& layout, int class_id) {
  Genome g;
  g.class_id = class_id;
  g.bits.assign(layout.total_bits, 1);
  return g;
}

namespace {

void check_length(const Genome& g, const SegmentLayout& layout) {
  if (g.bits.size() != static_cast<std::size_t>(layout.total_bits)) {
    throw ConfigError("genome has " + std::to_string(g.bits.size()) + " bits, grouping expects " +
                      std::to_string(layout.total_bits));
  }
}

}  // namespace

bool is_repaired(const Genome& g, const SegmentLayout& layout) {
  check_length(g, layout);
  for (int s = 0; s < layout.segment_count(); ++s) {
    const auto first = g.bits.begin() + layout.offset[s];
    if (std::none_of(first, first + layout.groups[s], [](std::uint8_t b) { return b != 0; })) return false;
  }
  return true;
}

Genome repair(Genome g, const SegmentLayout& layout) {
  check_length(g, layout);
  for (int s = 0; s < layout.segment_count(); ++s) {
    const auto first = g.bits.begin() + layout.offset[s];
    if (std::none_of(first, first + layout.groups[s], [](std::uint8_t b) { return b != 0; })) {
      g.bits[layout.offset[s]] = 1;
    }
  }
  return g;
}

std::vector<std::vector<int>> kept_channels(const GroupingMap& grouping, const Genome& g) {
  check_length(g, grouping.layout);
  if (g.class_id < 0 || g.class_id >= grouping.num_classes()) {
    throw ConfigError("genome class " + std::to_string(g.class_id) + " outside grouping's " +
                      std::to_string(grouping.num_classes()) + " classes");
  }
  const auto& layers = grouping.groups[g.class_id];
  std::vector<std::vector<int>> kept(layers.size());
  for (std::size_t c = 0; c < layers.size(); ++c) {
    const int seg = grouping.layout.segment_of[c];
    const int off = grouping.layout.offset[seg];
    for (std::size_t grp = 0; grp < layers[c].size(); ++grp) {
      if (!g.bits[off + grp]) continue;
      kept[c].insert(kept[c].end(), layers[c][grp].begin(), layers[c][grp].end());
    }
    std::sort(kept[c].begin(), kept[c].end());
  }
  return kept;
}

std::vector<int> retained_kernel_set(const GroupingMap& grouping, const Genome& g) {
  const auto kept = kept_channels(grouping, g);
  const auto offsets = grouping.kernel_offsets();
  std::vector<int> ids;
  for (std::size_t c = 0; c < kept.size(); ++c) {
    for (int k : kept[c]) ids.push_back(offsets[c] + k);
  }
  return ids;
}

}  // namespace cnnsplit
