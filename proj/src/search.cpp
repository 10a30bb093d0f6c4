#include "cnnsplit/search.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>
#include <sstream>

#include "cnnsplit/decoder.hpp"
#include "cnnsplit/error.hpp"
#include "cnnsplit/parallel.hpp"

namespace cnnsplit {

InitMode parse_init_mode(const std::string& s) {
  if (s == "sensitivity") return InitMode::sensitivity;
  if (s == "random") return InitMode::random;
  throw ConfigError("unknown init mode '" + s + "' (sensitivity|random)");
}

std::string to_string(InitMode m) { return m == InitMode::sensitivity ? "sensitivity" : "random"; }

void SearchConfig::validate() const {
  if (population <= 0) throw ConfigError("population must be positive");
  if (parents <= 0 || parents > population) throw ConfigError("parents must be in [1, population]");
  if (!(mutation_rate > 0.0 && mutation_rate < 1.0)) throw ConfigError("mutation rate must lie in (0,1)");
  if (generations <= 0) throw ConfigError("generations must be positive");
  if (!(alpha > 0.0 && alpha < 1.0)) throw ConfigError("alpha must lie in (0,1)");
  if (n_top <= 0) throw ConfigError("n_top must be positive");
  if (patience <= 0) throw ConfigError("patience must be positive");
  if (threads <= 0) throw ConfigError("threads must be positive");
}

int drop_count(double ratio, int groups) {
  return static_cast<int>(std::min<long>(groups, std::lround(ratio * groups)));
}

namespace {

int uniform_index(Rng& rng, int n) {
  return static_cast<int>(std::uniform_int_distribution<int>(0, n - 1)(rng));
}

}  // namespace

Population init_population(const SensitivityProfile& profile, const GroupingMap& grouping,
                           const SearchConfig& cfg, Rng& rng) {
  const SegmentLayout& layout = grouping.layout;
  if (cfg.init_mode == InitMode::sensitivity &&
      profile.sensitive.size() != static_cast<std::size_t>(layout.segment_count())) {
    throw ConfigError("sensitivity profile covers " + std::to_string(profile.sensitive.size()) +
                      " segments, grouping has " + std::to_string(layout.segment_count()));
  }
  Population pop;
  pop.genomes.resize(grouping.num_classes());
  pop.fitness.resize(grouping.num_classes());
  for (int n = 0; n < grouping.num_classes(); ++n) {
    for (int i = 0; i < cfg.population; ++i) {
      Genome g = all_ones_genome(layout, n);
      if (cfg.init_mode == InitMode::random) {
        std::bernoulli_distribution coin(0.5);
        for (auto& b : g.bits) b = coin(rng);
      } else {
        for (int s = 0; s < layout.segment_count(); ++s) {
          const bool sensitive = profile.sensitive[s];
          std::uniform_real_distribution<double> ratio(sensitive ? 0.1 : 0.5, sensitive ? 0.5 : 0.9);
          const int groups = layout.groups[s];
          const int zeros = drop_count(ratio(rng), groups);
          std::vector<int> pos(groups);
          std::iota(pos.begin(), pos.end(), 0);
          for (int k = 0; k < zeros; ++k) {
            const int j = k + uniform_index(rng, groups - k);
            std::swap(pos[k], pos[j]);
            g.bits[layout.offset[s] + pos[k]] = 0;
          }
        }
      }
      pop.genomes[n].push_back(repair(std::move(g), layout));
    }
    pop.fitness[n].assign(cfg.population, std::nullopt);
  }
  return pop;
}

std::vector<int> select_parents(const std::vector<std::optional<FitnessRecord>>& fitness, int n_parents) {
  if (n_parents <= 0 || n_parents > static_cast<int>(fitness.size())) {
    throw ConfigError("cannot select " + std::to_string(n_parents) + " parents from " +
                      std::to_string(fitness.size()));
  }
  for (std::size_t i = 0; i < fitness.size(); ++i) {
    if (!fitness[i]) throw ConfigError("genome " + std::to_string(i) + " has no fitness");
  }
  std::vector<int> idx(fitness.size());
  std::iota(idx.begin(), idx.end(), 0);
  std::stable_sort(idx.begin(), idx.end(), [&](int a, int b) { return ranks_above(*fitness[a], *fitness[b]); });
  idx.resize(n_parents);
  return idx;
}

std::vector<int> select_parents(const std::vector<double>& fitness, int n_parents) {
  std::vector<std::optional<FitnessRecord>> records;
  for (double f : fitness) {
    FitnessRecord r;
    r.fitness = f;
    records.emplace_back(r);
  }
  return select_parents(records, n_parents);
}

std::pair<Genome, Genome> crossover(const Genome& a, const Genome& b, int cut) {
  if (a.size() != b.size()) throw ConfigError("crossover parents differ in length");
  if (cut < 1 || cut >= static_cast<int>(a.size())) {
    throw ConfigError("crossover cut " + std::to_string(cut) + " outside [1," + std::to_string(a.size()) + ")");
  }
  Genome x = a;
  Genome y = b;
  std::copy(b.bits.begin() + cut, b.bits.end(), x.bits.begin() + cut);
  std::copy(a.bits.begin() + cut, a.bits.end(), y.bits.begin() + cut);
  return {std::move(x), std::move(y)};
}

Genome flip_bits(Genome g, double p, Rng& rng) {
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (auto& b : g.bits) {
    if (u(rng) < p) b = !b;
  }
  return g;
}

Genome mutate(Genome g, double p, Rng& rng, const SegmentLayout& layout) {
  return repair(flip_bits(std::move(g), p, rng), layout);
}

std::vector<Genome> breed(const std::vector<Genome>& population,
                          const std::vector<std::optional<FitnessRecord>>& fitness,
                          const SearchConfig& cfg, const SegmentLayout& layout, Rng& rng) {
  const std::vector<int> parents = select_parents(fitness, cfg.parents);
  const int np = static_cast<int>(parents.size());
  const int length = static_cast<int>(population.front().size());
  std::vector<Genome> children;
  children.reserve(cfg.population + 1);
  while (static_cast<int>(children.size()) < cfg.population) {
    const int ia = uniform_index(rng, np);
    int ib = ia;
    if (np > 1) {
      ib = uniform_index(rng, np - 1);
      if (ib >= ia) ++ib;
    }
    const Genome& a = population[parents[ia]];
    const Genome& b = population[parents[ib]];
    if (length < 2) {
      children.push_back(a);
      children.push_back(b);
      continue;
    }
    const int cut = 1 + uniform_index(rng, length - 1);
    auto [x, y] = crossover(a, b, cut);
    children.push_back(std::move(x));
    children.push_back(std::move(y));
  }
  children.resize(cfg.population);
  for (auto& c : children) c = mutate(std::move(c), cfg.mutation_rate, rng, layout);
  return children;
}

std::vector<std::vector<Candidate>> evaluate_candidates(const Model& model, const GroupingMap& grouping,
                                                        const std::vector<std::vector<Genome>>& genomes,
                                                        const LabeledDataset& data, int threads) {
  struct Job {
    int cls;
    int index;
  };
  std::vector<Job> jobs;
  std::vector<std::vector<int>> source(genomes.size());  // first occurrence of identical bits
  for (std::size_t n = 0; n < genomes.size(); ++n) {
    std::map<std::vector<std::uint8_t>, int> seen;
    for (std::size_t i = 0; i < genomes[n].size(); ++i) {
      const auto [it, inserted] = seen.emplace(genomes[n][i].bits, static_cast<int>(i));
      source[n].push_back(it->second);
      if (inserted) jobs.push_back(Job{static_cast<int>(n), static_cast<int>(i)});
    }
  }
  const std::uint64_t parent_fp = fingerprint(model.weights);
  std::vector<std::vector<Candidate>> out(genomes.size());
  for (std::size_t n = 0; n < genomes.size(); ++n) out[n].resize(genomes[n].size());

  parallel_for(jobs.size(), threads, [&](std::size_t j) {
    const Job& job = jobs[j];
    const ModuleArtifact m = decode(model, grouping, genomes[job.cls][job.index], DecodeOptions{true, parent_fp});
    const Network net(m.spec, m.weights);
    Candidate& c = out[job.cls][job.index];
    c.own_logits.resize(data.count());
    for (std::size_t s = 0; s < data.count(); ++s) c.own_logits[s] = net.forward(data.image(s))[job.cls];
    c.kernels = m.retained_kernels;
  });
  for (std::size_t n = 0; n < genomes.size(); ++n) {
    for (std::size_t i = 0; i < genomes[n].size(); ++i) {
      if (source[n][i] != static_cast<int>(i)) out[n][i] = out[n][source[n][i]];
    }
  }
  return out;
}

SearchResult run_search(const SearchInputs& in, const SearchConfig& cfg, const ProgressFn& progress) {
  cfg.validate();
  if (!in.model || !in.eval_data || !in.grouping || !in.profile) {
    throw ConfigError("search needs a model, evaluation data, grouping and sensitivity profile");
  }
  const GroupingMap& grouping = *in.grouping;
  const int classes = grouping.num_classes();
  if (classes < 2) throw ConfigError("modularization needs at least two classes");
  if (!cfg.pruning) {
    const std::uint64_t count = exhaustive_cm_count(classes, cfg.population);
    if (count > cfg.exhaustive_budget) {
      throw ConfigError("exhaustive evaluation needs " + std::to_string(count) +
                        " composed models per generation, over the budget of " +
                        std::to_string(cfg.exhaustive_budget));
    }
  }

  Rng rng(cfg.seed);
  Population pop = init_population(*in.profile, grouping, cfg, rng);
  SearchResult result;
  std::vector<std::optional<FitnessRecord>> class_best(classes);
  int last_improvement = 0;

  for (int gen = 0; gen < cfg.generations; ++gen) {
    pop.generation = gen;
    EvaluationResult eval;
    try {
      EvalTask task;
      task.labels = in.eval_data->labels;
      task.candidates = evaluate_candidates(*in.model, grouping, pop.genomes, *in.eval_data, cfg.threads);
      task.alpha = cfg.alpha;
      task.n_top = cfg.n_top;
      task.threads = cfg.threads;
      eval = cfg.pruning ? pruned_evaluation(task) : exhaustive_evaluation(task);
    } catch (const ConfigError& e) {
      throw ConfigError("generation " + std::to_string(gen) + ": " + e.what());
    } catch (const Error& e) {
      throw Error("generation " + std::to_string(gen) + ": " + e.what());
    }
    result.cm_evaluations += eval.cm_evaluations;
    if (gen == 0) result.warnings = eval.warnings;

    for (int n = 0; n < classes; ++n) {
      for (int i = 0; i < cfg.population; ++i) {
        pop.fitness[n][i] = eval.genome[n][i];
        if (!class_best[n] || ranks_above(eval.genome[n][i], *class_best[n])) class_best[n] = eval.genome[n][i];
      }
      result.history.push_back(HistoryRow{gen, n, class_best[n]->fitness, class_best[n]->acc, class_best[n]->diff});
    }

    if (gen == 0 || eval.best.fitness > result.best_composed.fitness) {
      result.best_composed = eval.best;
      result.best.clear();
      for (int n = 0; n < classes; ++n) result.best.push_back(pop.genomes[n][eval.best.members[n]]);
      last_improvement = gen;
    }
    result.composed_history.push_back(result.best_composed.fitness);
    result.generations_run = gen + 1;
    if (progress) progress(gen, result);

    if (gen - last_improvement >= cfg.patience) break;
    if (gen + 1 == cfg.generations) break;
    for (int n = 0; n < classes; ++n) {
      pop.genomes[n] = breed(pop.genomes[n], pop.fitness[n], cfg, grouping.layout, rng);
      pop.fitness[n].assign(cfg.population, std::nullopt);
    }
  }
  return result;
}

std::string format_history_csv(const std::vector<HistoryRow>& rows) {
  std::ostringstream os;
  os.precision(9);
  os << "generation,class,best_fitness,best_acc,best_diff\n";
  for (const auto& r : rows) {
    os << r.generation << ',' << r.class_id << ',' << r.best_fitness << ',' << r.best_acc << ',' << r.best_diff << '\n';
  }
  return os.str();
}

}  // namespace cnnsplit
