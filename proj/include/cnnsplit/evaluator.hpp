#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "cnnsplit/dataset.hpp"
#include "cnnsplit/decoder.hpp"

namespace cnnsplit {

/// (|A u B| - |A n B|) / |A u B|; two empty sets are at distance 0.
/// Inputs need not be sorted; duplicates are ignored.
double jaccard_distance(std::span<const int> a, std::span<const int> b);

/// Mean Jaccard distance over all unordered pairs. Needs at least two sets.
double cm_diff(const std::vector<std::vector<int>>& kernel_sets);

/// alpha*acc + (1-alpha)*diff, alpha in (0,1).
double fitness(double acc, double diff, double alpha);

/// Position i of the result is module i's logit for class `classes[i]`.
/// With no class list, module n contributes its logit n.
std::vector<float> compose_outputs(const std::vector<std::vector<float>>& module_outputs,
                                   std::span<const int> classes = {});

/// Modules ordered by ascending class id; module i covers class `modules[i].class_id`.
struct ComposedModel {
  std::vector<ModuleArtifact> modules;

  std::vector<int> classes() const;
  /// Composed prediction (a class id) for one input; ties go to the lower class.
  int predict(const Tensor& input) const;
};

/// Fraction of samples whose composed argmax equals the label. The data
/// must be non-empty and only contain the model's classes.
double cm_accuracy(const ComposedModel& cm, const LabeledDataset& data, int threads = 1);

// ---------------------------------------------------------------------------
// Search-time evaluation over precomputed module outputs.

/// One genome of one class after running its decoded module on the
/// evaluation set.
struct Candidate {
  std::vector<float> own_logits;  // module's logit for its own class, per sample
  std::vector<int> kernels;       // retained kernel ids, sorted
};

struct FitnessRecord {
  double acc = 0.0;
  double diff = 0.0;
  double fitness = 0.0;
  int level = 0;              // number of classes in the composed model
  std::vector<int> classes;   // ascending
  std::vector<int> members;   // genome index per entry of `classes`
};

/// Orders records for selection: larger class subset first, then fitness.
bool ranks_above(const FitnessRecord& a, const FitnessRecord& b);

struct EvalTask {
  std::vector<int> labels;                         // evaluation set labels
  std::vector<std::vector<Candidate>> candidates;  // [class][genome]
  double alpha = 0.9;
  int n_top = 100;
  int threads = 1;
};

struct EvaluationResult {
  /// Record credited to each genome: the best composed model it joined at
  /// the largest class subset it reached.
  std::vector<std::vector<FitnessRecord>> genome;  // [class][genome]
  FitnessRecord best;            // best composed model over all classes
  std::uint64_t cm_evaluations = 0;
  std::vector<std::string> warnings;
};

/// Hierarchical evaluation: classes are paired into binary subtasks (the
/// last takes three when N is odd), every leaf combination is evaluated on
/// the subtask's samples, the top n_top survive, and neighbouring subtasks
/// merge pairwise until one node spans all classes.
EvaluationResult pruned_evaluation(const EvalTask& task);

/// Every full combination; genome fitness is the max over the ones it joins.
EvaluationResult exhaustive_evaluation(const EvalTask& task);

struct PlanStep {
  std::vector<int> classes;
  std::uint64_t evaluations = 0;
  std::uint64_t kept = 0;
  bool leaf = false;
};

struct EvaluationPlan {
  std::vector<PlanStep> steps;
  std::uint64_t total = 0;
};

/// The evaluation schedule pruned_evaluation follows, without running it.
EvaluationPlan plan_evaluation(int num_classes, int population, int n_top);

/// population^num_classes, saturating at UINT64_MAX.
std::uint64_t exhaustive_cm_count(int num_classes, int population);

std::vector<std::vector<int>> leaf_subtasks(int num_classes);

}  // namespace cnnsplit
