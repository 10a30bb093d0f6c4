#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>
#include <random>

#include "cnnsplit/dataset.hpp"
#include "cnnsplit/error.hpp"
#include "cnnsplit/presets.hpp"
#include "cnnsplit/search.hpp"
#include "oracle.hpp"

using namespace cnnsplit;

namespace {

GroupingMap flat_grouping(const ModelSpec& spec, GroupingMode mode = GroupingMode::importance) {
  ImportanceTable imp;
  imp.per_class.assign(spec.num_classes, {});
  for (auto& cls : imp.per_class)
    for (int k : conv_channels(spec)) {
      std::vector<double> s(k);
      for (int i = 0; i < k; ++i) s[i] = k - i;
      cls.push_back(s);
    }
  return build_grouping(imp, spec, mode);
}

SensitivityProfile profile_with(std::vector<bool> flags) {
  SensitivityProfile p;
  p.sensitive = std::move(flags);
  return p;
}

}  // namespace

TEST_CASE("search defaults") {
  const SearchConfig cfg;
  CHECK(cfg.population == 100);
  CHECK(cfg.parents == 50);
  CHECK(cfg.mutation_rate == 0.1);
  CHECK(cfg.generations == 200);
  CHECK(cfg.alpha == 0.9);
  CHECK(cfg.init_mode == InitMode::sensitivity);
  CHECK(cfg.grouping_mode == GroupingMode::importance);
  CHECK(cfg.pruning);
  CHECK_NOTHROW(cfg.validate());
  SearchConfig bad = cfg;
  bad.parents = 101;
  CHECK_THROWS_AS(bad.validate(), ConfigError);
  bad = cfg;
  bad.mutation_rate = 0.0;
  CHECK_THROWS_AS(bad.validate(), ConfigError);
  CHECK_THROWS_AS(parse_init_mode("greedy"), ConfigError);
}

TEST_CASE("sensitivity initialization drops the advertised share of groups") {
  const ModelSpec spec = desk_simcnn(3);
  const GroupingMap g = flat_grouping(spec);
  SearchConfig cfg;
  cfg.population = 400;
  Rng rng(1);
  const Population pop = init_population(profile_with({true, false, true, false}), g, cfg, rng);
  REQUIRE(pop.genomes.size() == 3);
  double sensitive_zeros = 0.0, insensitive_zeros = 0.0;
  for (const auto& cls : pop.genomes) {
    CHECK(cls.size() == 400);
    for (const Genome& genome : cls) {
      CHECK(is_repaired(genome, g.layout));
      for (int s = 0; s < 4; ++s) {
        int zeros = 0;
        for (int b = 0; b < 10; ++b) zeros += genome.bits[g.layout.offset[s] + b] == 0;
        if (s % 2 == 0) {
          CHECK((zeros >= 1 && zeros <= 5));
          sensitive_zeros += zeros;
        } else {
          CHECK((zeros >= 5 && zeros <= 9));
          insensitive_zeros += zeros;
        }
      }
    }
  }
  // Mean ratio 0.3 and 0.7 of 10 groups.
  CHECK(sensitive_zeros / (3 * 400 * 2) == doctest::Approx(3.0).epsilon(0.05));
  CHECK(insensitive_zeros / (3 * 400 * 2) == doctest::Approx(7.0).epsilon(0.05));

  Rng again(1);
  CHECK(init_population(profile_with({true, false, true, false}), g, cfg, again).genomes == pop.genomes);
  CHECK_THROWS_AS(init_population(profile_with({true}), g, cfg, again), ConfigError);
}

TEST_CASE("random initialization is a fair coin per bit") {
  const GroupingMap g = flat_grouping(desk_simcnn(2));
  SearchConfig cfg;
  cfg.population = 500;
  cfg.init_mode = InitMode::random;
  Rng rng(2);
  const Population pop = init_population(SensitivityProfile{}, g, cfg, rng);
  double ones = 0.0, total = 0.0;
  for (const auto& cls : pop.genomes)
    for (const Genome& genome : cls)
      for (auto b : genome.bits) {
        ones += b;
        total += 1;
      }
  CHECK(ones / total == doctest::Approx(0.5).epsilon(0.03));
}

TEST_CASE("drop counts round to nearest") {
  CHECK(drop_count(0.1, 10) == 1);
  CHECK(drop_count(0.34, 10) == 3);
  CHECK(drop_count(0.35, 10) == 4);
  CHECK(drop_count(0.9, 3) == 3);
}

TEST_CASE("selection keeps the top genomes, ties to the lower index") {
  CHECK(select_parents(std::vector<double>{0.2, 0.9, 0.5, 0.9, 0.1}, 3) == std::vector<int>{1, 3, 2});
  CHECK_THROWS_AS(select_parents(std::vector<double>{0.1}, 2), ConfigError);

  std::vector<std::optional<FitnessRecord>> recs(3);
  recs[0] = FitnessRecord{};
  recs[0]->level = 2;
  recs[0]->fitness = 0.99;
  recs[1] = FitnessRecord{};
  recs[1]->level = 3;
  recs[1]->fitness = 0.5;
  recs[2] = FitnessRecord{};
  recs[2]->level = 3;
  recs[2]->fitness = 0.6;
  CHECK(select_parents(recs, 2) == std::vector<int>{2, 1});
  recs[1].reset();
  CHECK_THROWS_AS(select_parents(recs, 1), ConfigError);
}

TEST_CASE("single-point crossover swaps the tails") {
  Genome a, b;
  a.bits = {1, 1, 1, 1, 1};
  b.bits = {0, 0, 0, 0, 0};
  const auto [x, y] = crossover(a, b, 2);
  CHECK(x.bits == std::vector<std::uint8_t>{1, 1, 0, 0, 0});
  CHECK(y.bits == std::vector<std::uint8_t>{0, 0, 1, 1, 1});
  CHECK_THROWS_AS(crossover(a, b, 0), ConfigError);
  CHECK_THROWS_AS(crossover(a, b, 5), ConfigError);

  // Property: per position the children hold the parents' bits, swapped after the cut.
  std::mt19937_64 rng(3);
  for (int t = 0; t < 100; ++t) {
    const Genome p = oracle::random_genome(17, 0, rng), q = oracle::random_genome(17, 0, rng);
    const int cut = 1 + static_cast<int>(rng() % 16);
    const auto [c, d] = crossover(p, q, cut);
    for (int i = 0; i < 17; ++i) {
      CHECK(c.bits[i] == (i < cut ? p.bits[i] : q.bits[i]));
      CHECK(d.bits[i] == (i < cut ? q.bits[i] : p.bits[i]));
    }
  }
}

TEST_CASE("mutation flips each bit with the configured probability") {
  Rng rng(4);
  for (double p : {0.05, 0.1, 0.3}) {
    Genome g;
    g.bits.assign(200000, 0);
    const Genome m = flip_bits(g, p, rng);
    double flipped = 0.0;
    for (auto b : m.bits) flipped += b;
    CHECK(std::abs(flipped / 200000 - p) <= 0.01);
  }
  const SegmentLayout layout = make_segment_layout(desk_simcnn(2), GroupingMode::importance);
  Genome zero;
  zero.bits.assign(layout.total_bits, 0);
  for (int t = 0; t < 50; ++t) CHECK(is_repaired(mutate(zero, 0.05, rng, layout), layout));
}

TEST_CASE("breeding keeps the population size and repairs children") {
  const GroupingMap g = flat_grouping(desk_simcnn(3));
  SearchConfig cfg;
  cfg.population = 21;
  cfg.parents = 7;
  Rng rng(5);
  std::mt19937_64 r2(6);
  std::vector<Genome> pop;
  std::vector<std::optional<FitnessRecord>> fit;
  for (int i = 0; i < 21; ++i) {
    pop.push_back(repair(oracle::random_genome(g.total_bits(), 0, r2), g.layout));
    FitnessRecord rec;
    rec.level = 3;
    rec.fitness = i / 21.0;
    fit.push_back(rec);
  }
  const auto children = breed(pop, fit, cfg, g.layout, rng);
  CHECK(children.size() == 21);
  for (const auto& c : children) {
    CHECK(is_repaired(c, g.layout));
    CHECK(c.class_id == 0);
  }
}

TEST_CASE("search over a small model is deterministic and thread independent") {
  const ModelSpec spec = desk_simcnn(3);
  std::mt19937_64 rng(7);
  const Model model{spec, oracle::random_weights(spec, rng)};
  ShapeTaskConfig task;
  task.per_class = 6;
  const LabeledDataset data = make_shape_dataset(task);
  const GroupingMap g = flat_grouping(spec);
  const SensitivityProfile p = profile_with({true, true, false, false});
  SearchConfig cfg;
  cfg.population = 6;
  cfg.parents = 3;
  cfg.generations = 4;
  cfg.n_top = 4;
  const SearchInputs in{&model, &data, &g, &p};
  const SearchResult a = run_search(in, cfg);
  cfg.threads = 4;
  const SearchResult b = run_search(in, cfg);
  CHECK(a.best == b.best);
  CHECK(a.composed_history == b.composed_history);
  CHECK(a.cm_evaluations == b.cm_evaluations);
  CHECK(a.generations_run == 4);
  CHECK(a.history.size() == 4 * 3);
  CHECK(a.cm_evaluations == 4 * plan_evaluation(3, 6, 4).total);
  for (std::size_t i = 1; i < a.composed_history.size(); ++i) CHECK(a.composed_history[i] >= a.composed_history[i - 1]);
  REQUIRE(a.best.size() == 3);
  for (int c = 0; c < 3; ++c) CHECK(a.best[c].class_id == c);

  cfg.pruning = false;
  cfg.exhaustive_budget = 100;
  CHECK_THROWS_WITH_AS(run_search(in, cfg), doctest::Contains("216"), ConfigError);

  const std::string csv = format_history_csv(a.history);
  CHECK(csv.starts_with("generation,class,best_fitness,best_acc,best_diff\n0,0,"));
}

TEST_CASE("early stopping honours patience") {
  const ModelSpec spec = desk_simcnn(2);
  std::mt19937_64 rng(8);
  const Model model{spec, oracle::random_weights(spec, rng)};
  ShapeTaskConfig task;
  task.num_classes = 2;
  task.per_class = 4;
  const LabeledDataset data = make_shape_dataset(task);
  const GroupingMap g = flat_grouping(spec);
  const SensitivityProfile p = profile_with({false, false, false, false});
  SearchConfig cfg;
  cfg.population = 4;
  cfg.parents = 2;
  cfg.generations = 50;
  cfg.n_top = 4;
  cfg.patience = 2;
  const SearchInputs in{&model, &data, &g, &p};
  const SearchResult r = run_search(in, cfg);
  CHECK(r.generations_run < 50);
  const int n = r.generations_run;
  CHECK(r.composed_history[n - 1] == r.composed_history[n - 3]);
}
