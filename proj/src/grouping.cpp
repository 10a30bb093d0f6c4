#include "cnnsplit/grouping.hpp"

#include <algorithm>
#include <numeric>
#include <random>

#include "cnnsplit/error.hpp"

namespace cnnsplit {

GroupingMode parse_grouping_mode(const std::string& s) {
  if (s == "importance") return GroupingMode::importance;
  if (s == "random") return GroupingMode::random;
  if (s == "none") return GroupingMode::none;
  throw ConfigError("unknown grouping mode '" + s + "' (importance|random|none)");
}

std::string to_string(GroupingMode m) {
  switch (m) {
    case GroupingMode::importance: return "importance";
    case GroupingMode::random: return "random";
    case GroupingMode::none: return "none";
  }
  return "?";
}

int groups_for_layer(int kernels, GroupingMode mode) {
  if (kernels <= 0) throw ConfigError("layer has no kernels");
  if (mode == GroupingMode::none) return kernels;
  return std::min(kernels, kernels < 256 ? 10 : 100);
}

SegmentLayout make_segment_layout(const ModelSpec& spec, GroupingMode mode) {
  const std::vector<int> channels = conv_channels(spec);
  const int n = static_cast<int>(channels.size());
  std::vector<int> parent(n);
  std::iota(parent.begin(), parent.end(), 0);
  auto find = [&](int x) {
    while (parent[x] != x) x = parent[x] = parent[parent[x]];
    return x;
  };
  for (const ResidualPair& r : spec.residuals) {
    const int a = find(r.source);
    const int b = find(r.dest);
    if (a != b) parent[std::max(a, b)] = std::min(a, b);
  }

  SegmentLayout layout;
  layout.segment_of.assign(n, -1);
  for (int c = 0; c < n; ++c) {
    const int root = find(c);
    if (layout.segment_of[root] == -1) {
      layout.segment_of[root] = static_cast<int>(layout.members.size());
      layout.members.push_back({});
    }
    layout.segment_of[c] = layout.segment_of[root];
    layout.members[layout.segment_of[c]].push_back(c);
  }
  int bit = 0;
  for (const auto& m : layout.members) {
    for (int c : m) {
      if (channels[c] != channels[m.front()]) {
        throw ConfigError("residual-joined conv" + std::to_string(m.front()) + " and conv" +
                          std::to_string(c) + " differ in kernel count");
      }
    }
    const int g = groups_for_layer(channels[m.front()], mode);
    layout.groups.push_back(g);
    layout.offset.push_back(bit);
    bit += g;
  }
  layout.total_bits = bit;
  return layout;
}

std::vector<int> GroupingMap::kernel_offsets() const {
  std::vector<int> off(layer_kernels.size());
  int acc = 0;
  for (std::size_t i = 0; i < layer_kernels.size(); ++i) {
    off[i] = acc;
    acc += layer_kernels[i];
  }
  return off;
}

int GroupingMap::total_kernels() const {
  return std::accumulate(layer_kernels.begin(), layer_kernels.end(), 0);
}

std::vector<int> importance_order(const std::vector<double>& scores) {
  std::vector<int> order(scores.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](int a, int b) { return scores[a] > scores[b]; });
  return order;
}

std::vector<std::vector<int>> partition_ordered(const std::vector<int>& order, int groups) {
  const int k = static_cast<int>(order.size());
  if (groups <= 0 || groups > k) {
    throw ConfigError("cannot split " + std::to_string(k) + " kernels into " + std::to_string(groups) + " groups");
  }
  const int base = k / groups;
  const int extra = k % groups;
  std::vector<std::vector<int>> out(groups);
  int pos = 0;
  for (int g = 0; g < groups; ++g) {
    const int size = base + (g < extra ? 1 : 0);
    out[g].assign(order.begin() + pos, order.begin() + pos + size);
    pos += size;
  }
  return out;
}

GroupingMap build_grouping(const ImportanceTable& importance, const ModelSpec& spec, GroupingMode mode,
                           std::uint64_t seed) {
  GroupingMap map;
  map.mode = mode;
  map.layout = make_segment_layout(spec, mode);
  map.layer_kernels = conv_channels(spec);
  const int convs = static_cast<int>(map.layer_kernels.size());
  if (importance.num_classes() != spec.num_classes) {
    throw ConfigError("importance table covers " + std::to_string(importance.num_classes()) +
                      " classes, model has " + std::to_string(spec.num_classes));
  }
  std::mt19937_64 rng(seed);
  map.groups.resize(spec.num_classes);
  for (int n = 0; n < spec.num_classes; ++n) {
    const LayerScores& scores = importance.per_class[n];
    if (static_cast<int>(scores.size()) != convs) {
      throw ConfigError("importance for class " + std::to_string(n) + " covers " +
                        std::to_string(scores.size()) + " conv layers, model has " + std::to_string(convs));
    }
    map.groups[n].resize(convs);
    for (int c = 0; c < convs; ++c) {
      if (static_cast<int>(scores[c].size()) != map.layer_kernels[c]) {
        throw ConfigError("importance for class " + std::to_string(n) + " conv" + std::to_string(c) +
                          " has wrong kernel count");
      }
      std::vector<int> order;
      if (mode == GroupingMode::random) {
        order.resize(scores[c].size());
        std::iota(order.begin(), order.end(), 0);
        std::shuffle(order.begin(), order.end(), rng);
      } else {
        order = importance_order(scores[c]);
      }
      const int g = map.layout.groups[map.layout.segment_of[c]];
      map.groups[n][c] = partition_ordered(order, g);
    }
  }
  return map;
}

}  // namespace cnnsplit
