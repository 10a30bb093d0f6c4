#include "cnnsplit/evaluator.hpp"

#include <algorithm>
#include <bit>
#include <limits>
#include <numeric>
#include <set>

#include "cnnsplit/error.hpp"
#include "cnnsplit/layers.hpp"
#include "cnnsplit/parallel.hpp"

namespace cnnsplit {

double jaccard_distance(std::span<const int> a, std::span<const int> b) {
  const std::set<int> sa(a.begin(), a.end());
  const std::set<int> sb(b.begin(), b.end());
  std::size_t inter = 0;
  for (int v : sa) inter += sb.count(v);
  const std::size_t uni = sa.size() + sb.size() - inter;
  if (uni == 0) return 0.0;
  return static_cast<double>(uni - inter) / static_cast<double>(uni);
}

double cm_diff(const std::vector<std::vector<int>>& kernel_sets) {
  const std::size_t n = kernel_sets.size();
  if (n < 2) throw ConfigError("diff needs at least two modules");
  double sum = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = i + 1; j < n; ++j) sum += jaccard_distance(kernel_sets[i], kernel_sets[j]);
  }
  return sum * 2.0 / static_cast<double>(n * (n - 1));
}

double fitness(double acc, double diff, double alpha) {
  if (!(alpha > 0.0 && alpha < 1.0)) throw ConfigError("alpha must lie in (0,1)");
  return alpha * acc + (1.0 - alpha) * diff;
}

std::vector<float> compose_outputs(const std::vector<std::vector<float>>& module_outputs,
                                   std::span<const int> classes) {
  if (!classes.empty() && classes.size() != module_outputs.size()) {
    throw ShapeError("compose: " + std::to_string(module_outputs.size()) + " modules for " +
                     std::to_string(classes.size()) + " classes");
  }
  std::vector<float> out(module_outputs.size());
  for (std::size_t i = 0; i < module_outputs.size(); ++i) {
    const std::size_t pick = classes.empty() ? i : static_cast<std::size_t>(classes[i]);
    if (pick >= module_outputs[i].size()) {
      throw ShapeError("compose: module " + std::to_string(i) + " emits " +
                       std::to_string(module_outputs[i].size()) + " logits, needs index " + std::to_string(pick));
    }
    out[i] = module_outputs[i][pick];
  }
  return out;
}

std::vector<int> ComposedModel::classes() const {
  std::vector<int> c;
  for (const auto& m : modules) c.push_back(m.class_id);
  return c;
}

int ComposedModel::predict(const Tensor& input) const {
  std::vector<std::vector<float>> outs;
  for (const auto& m : modules) {
    const Tensor logits = Network(m.spec, m.weights).forward(input);
    outs.emplace_back(logits.values().begin(), logits.values().end());
  }
  const auto cls = classes();
  const auto composed = compose_outputs(outs, cls);
  return cls[argmax(std::span<const float>(composed))];
}

double cm_accuracy(const ComposedModel& cm, const LabeledDataset& data, int threads) {
  if (data.count() == 0) throw ConfigError("composed-model accuracy needs a non-empty dataset");
  if (cm.modules.empty()) throw ConfigError("composed model has no modules");
  const auto cls = cm.classes();
  for (std::size_t i = 0; i < cls.size(); ++i) {
    for (std::size_t j = i + 1; j < cls.size(); ++j) {
      if (cls[i] == cls[j]) throw ConfigError("composed model repeats class " + std::to_string(cls[i]));
    }
    if (cm.modules[i].parent_fingerprint != cm.modules[0].parent_fingerprint) {
      throw ConfigError("composed model mixes modules from different parents");
    }
  }
  for (int l : data.labels) {
    if (std::find(cls.begin(), cls.end(), l) == cls.end()) {
      throw ConfigError("label " + std::to_string(l) + " is not covered by the composed model");
    }
  }
  std::vector<Network> nets;
  for (const auto& m : cm.modules) nets.emplace_back(m.spec, m.weights);
  std::vector<int> correct(data.count(), 0);
  parallel_for(data.count(), threads, [&](std::size_t s) {
    const Tensor img = data.image(s);
    int best = 0;
    float best_v = 0.0f;
    for (std::size_t i = 0; i < nets.size(); ++i) {
      const float v = nets[i].forward(img)[cls[i]];
      if (i == 0 || v > best_v) {
        best_v = v;
        best = static_cast<int>(i);
      }
    }
    correct[s] = cls[best] == data.labels[s];
  });
  return static_cast<double>(std::accumulate(correct.begin(), correct.end(), 0)) /
         static_cast<double>(data.count());
}

bool ranks_above(const FitnessRecord& a, const FitnessRecord& b) {
  if (a.level != b.level) return a.level > b.level;
  return a.fitness > b.fitness;
}

std::vector<std::vector<int>> leaf_subtasks(int num_classes) {
  if (num_classes < 2) throw ConfigError("pruned evaluation needs at least two classes");
  std::vector<std::vector<int>> out;
  for (int c = 0; c + 1 < num_classes; c += 2) out.push_back({c, c + 1});
  if (num_classes % 2 == 1) out.back().push_back(num_classes - 1);
  return out;
}

std::uint64_t exhaustive_cm_count(int num_classes, int population) {
  std::uint64_t total = 1;
  for (int i = 0; i < num_classes; ++i) {
    if (population != 0 && total > std::numeric_limits<std::uint64_t>::max() / population) {
      return std::numeric_limits<std::uint64_t>::max();
    }
    total *= static_cast<std::uint64_t>(population);
  }
  return total;
}

namespace {

using Bitset = std::vector<std::uint64_t>;

// One evaluated composed model inside a tree node.
struct Cm {
  std::vector<int> members;
  double acc = 0.0;
  double diff = 0.0;
  double fitness = 0.0;
};

struct Node {
  std::vector<int> classes;
  std::vector<Cm> beam;
};

class Evaluator {
 public:
  explicit Evaluator(const EvalTask& task) : task_(task) {
    const int n = static_cast<int>(task.candidates.size());
    if (n < 1) throw ConfigError("evaluation needs at least one class population");
    if (!(task.alpha > 0.0 && task.alpha < 1.0)) throw ConfigError("alpha must lie in (0,1)");
    if (task.n_top <= 0) throw ConfigError("n_top must be positive");
    int max_kernel = 0;
    for (int c = 0; c < n; ++c) {
      if (task.candidates[c].empty()) throw ConfigError("class " + std::to_string(c) + " has an empty population");
      for (const Candidate& cand : task.candidates[c]) {
        if (cand.own_logits.size() != task.labels.size()) {
          throw ShapeError("candidate of class " + std::to_string(c) + " has " +
                           std::to_string(cand.own_logits.size()) + " outputs for " +
                           std::to_string(task.labels.size()) + " samples");
        }
        for (int k : cand.kernels) max_kernel = std::max(max_kernel, k + 1);
      }
    }
    words_ = (static_cast<std::size_t>(max_kernel) + 63) / 64;
    bits_.resize(n);
    for (int c = 0; c < n; ++c) {
      for (const Candidate& cand : task.candidates[c]) {
        Bitset b(words_, 0);
        for (int k : cand.kernels) b[k / 64] |= std::uint64_t{1} << (k % 64);
        bits_[c].push_back(std::move(b));
      }
    }
    samples_.resize(n);
    for (std::size_t s = 0; s < task.labels.size(); ++s) {
      const int l = task.labels[s];
      if (l < 0 || l >= n) throw ConfigError("evaluation label " + std::to_string(l) + " out of range");
      samples_[l].push_back(s);
    }
    genome_.resize(n);
    for (int c = 0; c < n; ++c) genome_[c].resize(task.candidates[c].size());
  }

  double jd(int ca, int ia, int cb, int ib) const {
    const Bitset& a = bits_[ca][ia];
    const Bitset& b = bits_[cb][ib];
    std::size_t inter = 0;
    std::size_t uni = 0;
    for (std::size_t w = 0; w < words_; ++w) {
      inter += std::popcount(a[w] & b[w]);
      uni += std::popcount(a[w] | b[w]);
    }
    return uni == 0 ? 0.0 : static_cast<double>(uni - inter) / static_cast<double>(uni);
  }

  double accuracy(const std::vector<int>& classes, const std::vector<int>& members) const {
    std::size_t total = 0;
    std::size_t correct = 0;
    for (std::size_t ci = 0; ci < classes.size(); ++ci) {
      for (std::size_t s : samples_[classes[ci]]) {
        std::size_t best = 0;
        float best_v = task_.candidates[classes[0]][members[0]].own_logits[s];
        for (std::size_t k = 1; k < classes.size(); ++k) {
          const float v = task_.candidates[classes[k]][members[k]].own_logits[s];
          if (v > best_v) {
            best_v = v;
            best = k;
          }
        }
        correct += best == ci;
        ++total;
      }
    }
    return total == 0 ? 0.0 : static_cast<double>(correct) / static_cast<double>(total);
  }

  void finish(Cm& cm, const std::vector<int>& classes) const {
    const std::size_t n = classes.size();
    cm.acc = accuracy(classes, cm.members);
    // Fixed pair order: pruned and exhaustive results match bit for bit.
    double jd_sum = 0.0;
    for (std::size_t a = 0; a < n; ++a) {
      for (std::size_t b = a + 1; b < n; ++b) jd_sum += jd(classes[a], cm.members[a], classes[b], cm.members[b]);
    }
    cm.diff = n < 2 ? 0.0 : jd_sum * 2.0 / static_cast<double>(n * (n - 1));
    cm.fitness = fitness(cm.acc, cm.diff, task_.alpha);
  }

  // All combinations of the populations of `classes`.
  Node leaf(const std::vector<int>& classes) {
    std::uint64_t count = 1;
    for (int c : classes) count *= task_.candidates[c].size();
    Node node{classes, std::vector<Cm>(count)};
    parallel_for(count, task_.threads, [&](std::size_t id) {
      Cm& cm = node.beam[id];
      cm.members.resize(classes.size());
      std::size_t rest = id;
      for (std::size_t k = classes.size(); k-- > 0;) {
        const std::size_t pop = task_.candidates[classes[k]].size();
        cm.members[k] = static_cast<int>(rest % pop);
        rest /= pop;
      }
      finish(cm, classes);
    });
    evaluations_ += count;
    return node;
  }

  Node merge(const Node& left, const Node& right) {
    Node node;
    node.classes = left.classes;
    node.classes.insert(node.classes.end(), right.classes.begin(), right.classes.end());
    const std::size_t count = left.beam.size() * right.beam.size();
    node.beam.resize(count);
    parallel_for(count, task_.threads, [&](std::size_t id) {
      const Cm& a = left.beam[id / right.beam.size()];
      const Cm& b = right.beam[id % right.beam.size()];
      Cm& cm = node.beam[id];
      cm.members = a.members;
      cm.members.insert(cm.members.end(), b.members.begin(), b.members.end());
      finish(cm, node.classes);
    });
    evaluations_ += count;
    return node;
  }

  void credit(const Node& node) {
    const int level = static_cast<int>(node.classes.size());
    for (const Cm& cm : node.beam) {
      for (std::size_t k = 0; k < node.classes.size(); ++k) {
        FitnessRecord& slot = genome_[node.classes[k]][cm.members[k]];
        if (slot.level < level || (slot.level == level && cm.fitness > slot.fitness)) {
          slot = to_record(cm, node.classes);
        }
      }
    }
  }

  void prune(Node& node) {
    const std::size_t keep = static_cast<std::size_t>(task_.n_top);
    if (keep > node.beam.size()) {
      warnings_.push_back("n_top " + std::to_string(keep) + " exceeds the " + std::to_string(node.beam.size()) +
                          " composed models over classes " + class_list(node.classes) + "; keeping all");
      return;
    }
    std::vector<std::size_t> order(node.beam.size());
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), [&](std::size_t x, std::size_t y) {
      const Cm& a = node.beam[x];
      const Cm& b = node.beam[y];
      if (a.acc != b.acc) return a.acc > b.acc;
      return a.fitness > b.fitness;
    });
    std::vector<Cm> kept;
    kept.reserve(keep);
    for (std::size_t i = 0; i < keep; ++i) kept.push_back(std::move(node.beam[order[i]]));
    node.beam = std::move(kept);
  }

  EvaluationResult result(const Node& top) {
    EvaluationResult r;
    std::size_t best = 0;
    for (std::size_t i = 1; i < top.beam.size(); ++i) {
      if (top.beam[i].fitness > top.beam[best].fitness) best = i;
    }
    r.best = to_record(top.beam[best], top.classes);
    r.genome = std::move(genome_);
    r.cm_evaluations = evaluations_;
    r.warnings = std::move(warnings_);
    return r;
  }

 private:
  static std::string class_list(const std::vector<int>& classes) {
    std::string s = "{";
    for (std::size_t i = 0; i < classes.size(); ++i) s += (i ? "," : "") + std::to_string(classes[i]);
    return s + "}";
  }

  static FitnessRecord to_record(const Cm& cm, const std::vector<int>& classes) {
    FitnessRecord r;
    r.acc = cm.acc;
    r.diff = cm.diff;
    r.fitness = cm.fitness;
    r.level = static_cast<int>(classes.size());
    r.classes = classes;
    r.members = cm.members;
    return r;
  }

  const EvalTask& task_;
  std::size_t words_ = 0;
  std::vector<std::vector<Bitset>> bits_;
  std::vector<std::vector<std::size_t>> samples_;
  std::vector<std::vector<FitnessRecord>> genome_;
  std::uint64_t evaluations_ = 0;
  std::vector<std::string> warnings_;
};

}  // namespace

EvaluationResult pruned_evaluation(const EvalTask& task) {
  Evaluator ev(task);
  const int n = static_cast<int>(task.candidates.size());
  std::vector<Node> nodes;
  for (const auto& classes : leaf_subtasks(n)) {
    Node node = ev.leaf(classes);
    ev.credit(node);
    nodes.push_back(std::move(node));
  }
  while (nodes.size() > 1) {
    std::vector<Node> next;
    for (std::size_t i = 0; i < nodes.size(); i += 2) {
      if (i + 1 == nodes.size()) {
        next.push_back(std::move(nodes[i]));
        continue;
      }
      ev.prune(nodes[i]);
      ev.prune(nodes[i + 1]);
      Node merged = ev.merge(nodes[i], nodes[i + 1]);
      ev.credit(merged);
      next.push_back(std::move(merged));
    }
    nodes = std::move(next);
  }
  return ev.result(nodes.front());
}

EvaluationResult exhaustive_evaluation(const EvalTask& task) {
  Evaluator ev(task);
  std::vector<int> all(task.candidates.size());
  std::iota(all.begin(), all.end(), 0);
  Node node = ev.leaf(all);
  ev.credit(node);
  return ev.result(node);
}

EvaluationPlan plan_evaluation(int num_classes, int population, int n_top) {
  if (population <= 0 || n_top <= 0) throw ConfigError("population and n_top must be positive");
  struct Sketch {
    std::vector<int> classes;
    std::uint64_t size;
  };
  EvaluationPlan plan;
  std::vector<Sketch> nodes;
  for (const auto& classes : leaf_subtasks(num_classes)) {
    const std::uint64_t count = exhaustive_cm_count(static_cast<int>(classes.size()), population);
    plan.steps.push_back(PlanStep{classes, count, count, true});
    nodes.push_back(Sketch{classes, count});
  }
  const auto keep = [&](std::uint64_t size) { return std::min<std::uint64_t>(size, n_top); };
  while (nodes.size() > 1) {
    std::vector<Sketch> next;
    for (std::size_t i = 0; i < nodes.size(); i += 2) {
      if (i + 1 == nodes.size()) {
        next.push_back(nodes[i]);
        continue;
      }
      Sketch merged;
      merged.classes = nodes[i].classes;
      merged.classes.insert(merged.classes.end(), nodes[i + 1].classes.begin(), nodes[i + 1].classes.end());
      merged.size = keep(nodes[i].size) * keep(nodes[i + 1].size);
      plan.steps.push_back(PlanStep{merged.classes, merged.size, merged.size, false});
      next.push_back(merged);
    }
    nodes = std::move(next);
  }
  // Nodes that feed a merge keep only their beam.
  for (auto& step : plan.steps) {
    if (step.classes.size() != static_cast<std::size_t>(num_classes)) step.kept = keep(step.evaluations);
    plan.total += step.evaluations;
  }
  return plan;
}

}  // namespace cnnsplit
