#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <filesystem>
#include <random>

#include "cnnsplit/decoder.hpp"
#include "cnnsplit/error.hpp"
#include "cnnsplit/presets.hpp"
#include "oracle.hpp"

using namespace cnnsplit;

namespace {

ImportanceTable random_importance(const ModelSpec& spec, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> u(0.0, 1.0);
  ImportanceTable t;
  t.per_class.resize(spec.num_classes);
  for (auto& cls : t.per_class)
    for (int k : conv_channels(spec)) {
      std::vector<double> s(k);
      for (auto& v : s) v = u(rng);
      cls.push_back(s);
    }
  return t;
}

ChannelMask mask_from_keep(const std::vector<std::vector<int>>& keep, const std::vector<int>& channels) {
  ChannelMask m(channels.size());
  for (std::size_t c = 0; c < channels.size(); ++c) {
    m[c].assign(channels[c], 0);
    for (int k : keep[c]) m[c][k] = 1;
  }
  return m;
}

std::vector<double> as_doubles(const Tensor& t) { return {t.values().begin(), t.values().end()}; }

}  // namespace

TEST_CASE("bit strings") {
  Genome g;
  g.bits = {1, 0, 0, 1};
  CHECK(g.bit_string() == "1001");
  CHECK(Genome::from_bit_string("1001", 3).bits == g.bits);
  CHECK(Genome::from_bit_string("1001", 3).class_id == 3);
  CHECK_THROWS_AS(Genome::from_bit_string("10x1", 0), FormatError);
}

TEST_CASE("repair re-enables group 0 of emptied segments only") {
  const SegmentLayout layout = make_segment_layout(desk_simcnn(3), GroupingMode::importance);
  Genome g = all_ones_genome(layout, 1);
  CHECK(is_repaired(g, layout));
  for (int b = 10; b < 20; ++b) g.bits[b] = 0;  // segment 1 emptied
  g.bits[25] = 0;
  CHECK(!is_repaired(g, layout));
  const Genome r = repair(g, layout);
  CHECK(is_repaired(r, layout));
  for (int b = 0; b < 40; ++b) CHECK(r.bits[b] == (b == 10 ? 1 : g.bits[b]));
  CHECK(repair(r, layout) == r);
}

TEST_CASE("kept channels and retained kernel ids") {
  std::mt19937_64 rng(1);
  for (const ModelSpec& spec : {desk_simcnn(3), desk_rescnn(3)}) {
    const GroupingMap g = build_grouping(random_importance(spec, rng), spec);
    const auto offsets = g.kernel_offsets();
    for (int t = 0; t < 30; ++t) {
      const Genome genome = repair(oracle::random_genome(g.total_bits(), t % 3, rng), g.layout);
      const auto kept = kept_channels(g, genome);
      CHECK(kept == oracle::kept_from_bits(g, genome));
      std::vector<int> ids;
      for (std::size_t c = 0; c < kept.size(); ++c)
        for (int k : kept[c]) ids.push_back(offsets[c] + k);
      CHECK(retained_kernel_set(g, genome) == ids);
      // Residual partners keep the same number of kernels.
      for (const auto& r : spec.residuals) CHECK(kept[r.source].size() == kept[r.dest].size());
    }
  }
}

TEST_CASE("decoded sequential module equals the zero-masked parent") {
  const ModelSpec spec = desk_simcnn(3);
  std::mt19937_64 rng(2);
  const Model parent{spec, oracle::random_weights(spec, rng)};
  const Network full(spec, parent.weights);
  const GroupingMap g = build_grouping(random_importance(spec, rng), spec);
  for (int t = 0; t < 20; ++t) {
    const Genome genome = oracle::random_genome(g.total_bits(), t % 3, rng);
    const ModuleArtifact m = decode(parent, g, genome);
    const Network module(m.spec, m.weights);
    const ChannelMask mask = mask_from_keep(kept_channels(g, m.genome), g.layer_kernels);
    CHECK(count_kernels(m.spec) == static_cast<std::int64_t>(m.retained_kernels.size()));
    for (int i = 0; i < 3; ++i) {
      const Tensor x = oracle::random_input(spec.input, rng);
      CHECK(oracle::max_rel_diff(as_doubles(module.forward(x)), as_doubles(full.forward(x, &mask))) <= 1e-5);
    }
  }
}

TEST_CASE("decoded residual module equals the loop-nest oracle") {
  const ModelSpec spec = desk_rescnn(3);
  std::mt19937_64 rng(3);
  const Model parent{spec, oracle::random_weights(spec, rng)};
  const GroupingMap g = build_grouping(random_importance(spec, rng), spec);
  for (int t = 0; t < 15; ++t) {
    const Genome genome = repair(oracle::random_genome(g.total_bits(), t % 3, rng), g.layout);
    const ModuleArtifact m = decode(parent, g, genome);
    const Network module(m.spec, m.weights);
    const auto keep = oracle::kept_from_bits(g, genome);
    const Tensor x = oracle::random_input(spec.input, rng);
    CHECK(oracle::max_rel_diff(as_doubles(module.forward(x)), oracle::forward(spec, parent.weights, x, keep)) <= 1e-5);
  }
}

TEST_CASE("all-ones genome decodes to the parent") {
  for (const ModelSpec& spec : {desk_simcnn(3), desk_rescnn(3)}) {
    std::mt19937_64 rng(4);
    const Model parent{spec, oracle::random_weights(spec, rng)};
    const GroupingMap g = build_grouping(random_importance(spec, rng), spec);
    const ModuleArtifact m = decode(parent, g, all_ones_genome(g.layout, 2));
    CHECK(m.weights == parent.weights);
    CHECK(m.retained_kernels.size() == static_cast<std::size_t>(g.total_kernels()));
    CHECK(m.parent_fingerprint == fingerprint(parent.weights));
  }
}

TEST_CASE("decode without repair rejects empty segments") {
  const ModelSpec spec = desk_simcnn(3);
  std::mt19937_64 rng(5);
  const Model parent{spec, oracle::random_weights(spec, rng)};
  const GroupingMap g = build_grouping(random_importance(spec, rng), spec);
  Genome genome = all_ones_genome(g.layout, 0);
  for (int b = 0; b < 10; ++b) genome.bits[b] = 0;
  DecodeOptions opts;
  opts.repair = false;
  CHECK_THROWS_AS(decode(parent, g, genome, opts), ConfigError);
  const ModuleArtifact repaired = decode(parent, g, genome);
  CHECK(repaired.genome.bits[0] == 1);
  CHECK(repaired.spec.layers[0].out == static_cast<int>(g.groups[0][0][0].size()));
  Genome short_genome = genome;
  short_genome.bits.pop_back();
  CHECK_THROWS_AS(decode(parent, g, short_genome), ConfigError);
}

TEST_CASE("slice_channels validates the channel plan") {
  const ModelSpec spec = desk_simcnn(3);
  std::mt19937_64 rng(6);
  const WeightStore ws = oracle::random_weights(spec, rng);
  auto keep = oracle::all_channels(spec);
  keep[1].clear();
  CHECK_THROWS_AS(slice_channels(spec, ws, keep), ShapeError);
  keep = oracle::all_channels(spec);
  keep[2] = {3, 1};
  CHECK_THROWS_AS(slice_channels(spec, ws, keep), ShapeError);
  keep.pop_back();
  CHECK_THROWS_AS(slice_channels(spec, ws, keep), ShapeError);
}

TEST_CASE("module artifacts round trip on disk") {
  const ModelSpec spec = desk_rescnn(3);
  std::mt19937_64 rng(7);
  const Model parent{spec, oracle::random_weights(spec, rng)};
  const GroupingMap g = build_grouping(random_importance(spec, rng), spec);
  const ModuleArtifact m = decode(parent, g, oracle::random_genome(g.total_bits(), 1, rng));
  const auto dir = std::filesystem::temp_directory_path() / "cnnsplit_module_rt";
  std::filesystem::remove_all(dir);
  save_module(m, dir.string());
  const ModuleArtifact back = load_module(dir.string());
  CHECK(back.spec == m.spec);
  CHECK(back.weights == m.weights);
  CHECK(back.retained_kernels == m.retained_kernels);
  CHECK(back.parent_fingerprint == m.parent_fingerprint);
  CHECK(back.class_id == 1);
  CHECK(back.genome == m.genome);
  const std::string sidecar = format_genome_sidecar(m);
  CHECK(sidecar.starts_with("class = 1\nparent = " + to_hex(m.parent_fingerprint) + "\n"));
  std::filesystem::remove_all(dir);
}
