#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "cnnsplit/dataset.hpp"
#include "cnnsplit/evaluator.hpp"
#include "cnnsplit/genome.hpp"
#include "cnnsplit/grouping.hpp"
#include "cnnsplit/network.hpp"
#include "cnnsplit/sensitivity.hpp"

namespace cnnsplit {

enum class InitMode { sensitivity, random };

InitMode parse_init_mode(const std::string& s);
std::string to_string(InitMode m);

struct SearchConfig {
  int population = 100;         // N_I
  int parents = 50;             // N_P
  double mutation_rate = 0.1;   // p_M
  int generations = 200;        // T
  double alpha = 0.9;
  int n_top = 100;
  int patience = 20;
  std::uint64_t seed = 1;
  InitMode init_mode = InitMode::sensitivity;
  GroupingMode grouping_mode = GroupingMode::importance;
  bool pruning = true;
  std::uint64_t exhaustive_budget = 1'000'000;  // max CMs per generation without pruning
  int threads = 1;

  void validate() const;
};

using Rng = std::mt19937_64;

struct Population {
  std::vector<std::vector<Genome>> genomes;                        // [class][i]
  std::vector<std::vector<std::optional<FitnessRecord>>> fitness;  // [class][i]
  int generation = 0;
};

/// Draw for one segment: how many of its bits to clear.
int drop_count(double ratio, int groups);

/// Sensitive segments drop U[0.1,0.5] of their groups, insensitive ones
/// U[0.5,0.9]; random mode flips a fair coin per bit. Genomes are repaired.
Population init_population(const SensitivityProfile& profile, const GroupingMap& grouping,
                           const SearchConfig& cfg, Rng& rng);

/// Top `n_parents` indices by fitness (larger class subset first), ties to
/// the lower index. Throws ConfigError when a fitness is missing.
std::vector<int> select_parents(const std::vector<std::optional<FitnessRecord>>& fitness, int n_parents);
std::vector<int> select_parents(const std::vector<double>& fitness, int n_parents);

/// Single-point crossover; `cut` in [1, size).
std::pair<Genome, Genome> crossover(const Genome& a, const Genome& b, int cut);

/// Flips each bit with probability p, then repairs.
Genome mutate(Genome g, double p, Rng& rng, const SegmentLayout& layout);
/// Flips each bit with probability p, no repair.
Genome flip_bits(Genome g, double p, Rng& rng);

/// Next generation for one class from its evaluated population.
std::vector<Genome> breed(const std::vector<Genome>& population,
                          const std::vector<std::optional<FitnessRecord>>& fitness,
                          const SearchConfig& cfg, const SegmentLayout& layout, Rng& rng);

struct HistoryRow {
  int generation = 0;
  int class_id = 0;
  double best_fitness = 0.0;
  double best_acc = 0.0;
  double best_diff = 0.0;
};

struct SearchResult {
  std::vector<Genome> best;        // per class, members of the best composed model seen
  FitnessRecord best_composed;     // its record
  std::vector<HistoryRow> history; // best-so-far per class per generation
  std::vector<double> composed_history;  // best-so-far composed fitness per generation
  std::uint64_t cm_evaluations = 0;
  int generations_run = 0;
  std::vector<std::string> warnings;
};

struct SearchInputs {
  const Model* model = nullptr;
  const LabeledDataset* eval_data = nullptr;  // fitness accuracy is measured here
  const GroupingMap* grouping = nullptr;
  const SensitivityProfile* profile = nullptr;
};

/// Runs every genome of every class through its decoded module on the
/// evaluation data. Parallel over genomes; output order is fixed.
std::vector<std::vector<Candidate>> evaluate_candidates(const Model& model, const GroupingMap& grouping,
                                                        const std::vector<std::vector<Genome>>& genomes,
                                                        const LabeledDataset& data, int threads);

using ProgressFn = std::function<void(int generation, const SearchResult&)>;

SearchResult run_search(const SearchInputs& in, const SearchConfig& cfg, const ProgressFn& progress = {});

std::string format_history_csv(const std::vector<HistoryRow>& rows);

}  // namespace cnnsplit
