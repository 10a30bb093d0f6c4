#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "cnnsplit/genome.hpp"
#include "cnnsplit/grouping.hpp"
#include "cnnsplit/network.hpp"

namespace cnnsplit {

/// A physically smaller sub-model cut out of a parent for one class.
struct ModuleArtifact {
  ModelSpec spec;
  WeightStore weights;
  std::vector<int> retained_kernels;  // global kernel ids of the parent
  std::uint64_t parent_fingerprint = 0;
  int class_id = 0;
  Genome genome;
};

/// Removes every conv output channel not listed in `kept[conv]` (ascending
/// indices) and slices the next conv's input channels, the biases, and the
/// first fc layer's flattened input blocks to match.
Model slice_channels(const ModelSpec& spec, const WeightStore& weights,
                     const std::vector<std::vector<int>>& kept);

struct DecodeOptions {
  bool repair = true;
  /// Parent fingerprint; computed from the weights when absent.
  std::optional<std::uint64_t> parent_fingerprint;
};

ModuleArtifact decode(const Model& parent, const GroupingMap& grouping, const Genome& genome,
                      const DecodeOptions& opts = {});

/// Writes spec.txt, weights.cnsp and genome.txt into `dir` (created if needed).
void save_module(const ModuleArtifact& module, const std::string& dir);
ModuleArtifact load_module(const std::string& dir);

std::string format_genome_sidecar(const ModuleArtifact& module);

}  // namespace cnnsplit
