#include "cli.hpp"

#include <algorithm>
#include <chrono>
#include <cstdio>
#include <filesystem>
#include <iomanip>
#include <iostream>
#include <limits>
#include <map>
#include <numeric>
#include <optional>
#include <sstream>

#include "CLI11.hpp"
#include "cnnsplit/artifacts.hpp"
#include "cnnsplit/dataset.hpp"
#include "cnnsplit/decoder.hpp"
#include "cnnsplit/error.hpp"
#include "cnnsplit/evaluator.hpp"
#include "cnnsplit/grouping.hpp"
#include "cnnsplit/importance.hpp"
#include "cnnsplit/layers.hpp"
#include "cnnsplit/metrics.hpp"
#include "cnnsplit/network.hpp"
#include "cnnsplit/parallel.hpp"
#include "cnnsplit/patcher.hpp"
#include "cnnsplit/presets.hpp"
#include "cnnsplit/search.hpp"
#include "cnnsplit/sensitivity.hpp"
#include "cnnsplit/trainer.hpp"
#include "cnnsplit/weight_store.hpp"
#include "json.hpp"

namespace fs = std::filesystem;

namespace cnnsplit::cli {
namespace {

// ---------------------------------------------------------------------------
// Output helpers

std::string fixed(double v, int digits = 4) {
  std::ostringstream os;
  os << std::fixed << std::setprecision(digits) << v;
  return os.str();
}

std::string percent(double v) { return fixed(100.0 * v, 2) + "%"; }

std::string opt_fixed(const std::optional<double>& v) { return v ? fixed(*v) : "n/a"; }

using Table = std::vector<std::vector<std::string>>;

std::string format_csv(const Table& rows) {
  std::string s;
  for (const auto& row : rows) {
    for (std::size_t i = 0; i < row.size(); ++i) {
      if (i) s += ',';
      s += row[i];
    }
    s += '\n';
  }
  return s;
}

std::string format_aligned(const Table& rows) {
  std::vector<std::size_t> width;
  for (const auto& row : rows) {
    width.resize(std::max(width.size(), row.size()), 0);
    for (std::size_t i = 0; i < row.size(); ++i) width[i] = std::max(width[i], row[i].size());
  }
  std::ostringstream os;
  for (std::size_t r = 0; r < rows.size(); ++r) {
    for (std::size_t i = 0; i < rows[r].size(); ++i) {
      if (i) os << "  ";
      if (i + 1 == rows[r].size()) {
        os << rows[r][i];
      } else {
        os << std::left << std::setw(static_cast<int>(width[i])) << rows[r][i];
      }
    }
    os << '\n';
    if (r == 0) {
      std::size_t total = 0;
      for (auto w : width) total += w + 2;
      os << std::string(total >= 2 ? total - 2 : 0, '-') << '\n';
    }
  }
  return os.str();
}

// ---------------------------------------------------------------------------
// Run manifest

class Manifest {
 public:
  Manifest(std::string command, std::string config, std::uint64_t seed)
      : command_(std::move(command)), config_(std::move(config)), seed_(seed) {}

  void input(const std::string& path) {
    const auto bytes = read_file_bytes(path);
    inputs_[path] = to_hex(fnv1a(bytes.data(), bytes.size()));
  }

  void output(const std::string& path) { outputs_.push_back(path); }
  void setting(const std::string& key, nlohmann::ordered_json value) { settings_[key] = std::move(value); }

  template <typename Fn>
  auto stage(const std::string& name, Fn&& fn) {
    const auto t0 = std::chrono::steady_clock::now();
    struct Timer {
      Manifest* m;
      std::string name;
      std::chrono::steady_clock::time_point t0;
      ~Timer() {
        m->stages_.emplace_back(name, std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count());
      }
    } timer{this, name, t0};
    return fn();
  }

  void write(const std::string& path) const {
    nlohmann::ordered_json j;
    j["command"] = command_;
    j["seed"] = seed_;
    j["config"] = config_;
    if (!settings_.empty()) j["effective"] = settings_;
    j["inputs"] = inputs_;
    nlohmann::ordered_json outs = nlohmann::ordered_json::array();
    for (const auto& p : outputs_) {
      const auto bytes = read_file_bytes(p);
      outs.push_back({{"path", p}, {"fingerprint", to_hex(fnv1a(bytes.data(), bytes.size()))}});
    }
    j["outputs"] = outs;
    nlohmann::ordered_json stages = nlohmann::ordered_json::array();
    for (const auto& [name, secs] : stages_) stages.push_back({{"stage", name}, {"seconds", secs}});
    j["stages"] = stages;
    write_text_file(path, j.dump(2) + "\n");
  }

 private:
  std::string command_;
  std::string config_;
  std::uint64_t seed_;
  std::map<std::string, std::string> inputs_;
  std::vector<std::string> outputs_;
  nlohmann::ordered_json settings_ = nlohmann::ordered_json::object();
  std::vector<std::pair<std::string, double>> stages_;
};

// ---------------------------------------------------------------------------
// Loading

struct LoadedModel {
  Model model;
  std::string spec_path;
  std::string weights_path;
};

LoadedModel load_model_dir(const std::string& dir) {
  LoadedModel m;
  m.spec_path = (fs::path(dir) / "spec.txt").string();
  m.weights_path = (fs::path(dir) / "weights.cnsp").string();
  if (!fs::exists(m.spec_path)) throw ConfigError("model directory '" + dir + "' has no spec.txt");
  if (!fs::exists(m.weights_path)) throw ConfigError("model directory '" + dir + "' has no weights.cnsp");
  m.model.spec = load_model_spec_file(m.spec_path);
  m.model.weights = load_weights_file(m.weights_path);
  validate_weights(m.model.spec, m.model.weights);
  return m;
}

LabeledDataset load_data(const std::string& path, const ModelSpec* spec, const char* role) {
  if (path.empty()) throw ConfigError(std::string("--") + role + " is required");
  LabeledDataset ds = load_dataset_file(path);
  if (spec) {
    if (!(ds.shape == spec->input)) {
      throw ConfigError(std::string(role) + " data '" + path + "' has images " + std::to_string(ds.shape.c) + "x" +
                        std::to_string(ds.shape.h) + "x" + std::to_string(ds.shape.w) + ", model expects " +
                        std::to_string(spec->input.c) + "x" + std::to_string(spec->input.h) + "x" +
                        std::to_string(spec->input.w));
    }
    if (ds.num_classes != spec->num_classes) {
      throw ConfigError(std::string(role) + " data '" + path + "' has " + std::to_string(ds.num_classes) +
                        " classes, model has " + std::to_string(spec->num_classes));
    }
  }
  return ds;
}

/// Module directories below `dir` named module_<n>, ordered by class.
std::vector<std::string> module_dirs(const std::string& dir) {
  std::vector<std::pair<int, std::string>> found;
  if (!fs::is_directory(dir)) throw ConfigError("'" + dir + "' is not a directory");
  for (const auto& entry : fs::directory_iterator(dir)) {
    const std::string name = entry.path().filename().string();
    if (!entry.is_directory() || !name.starts_with("module_")) continue;
    try {
      found.emplace_back(std::stoi(name.substr(7)), entry.path().string());
    } catch (const std::exception&) {
    }
  }
  if (found.empty()) throw ConfigError("no module_<n> directories in '" + dir + "'");
  std::sort(found.begin(), found.end());
  std::vector<std::string> out;
  for (auto& f : found) out.push_back(f.second);
  return out;
}

void ensure_dir(const std::string& dir) {
  if (dir.empty()) throw ConfigError("--out-dir is required");
  fs::create_directories(dir);
}

std::string join_path(const std::string& dir, const std::string& file) { return (fs::path(dir) / file).string(); }

// ---------------------------------------------------------------------------
// Commands

struct Shared {
  std::uint64_t seed = 1;
  int threads = 1;
  std::string out_dir;
};

void add_shared(CLI::App* cmd, Shared& s, bool needs_out_dir) {
  cmd->add_option("--seed", s.seed, "Random seed")->capture_default_str();
  cmd->add_option("--threads", s.threads, "Worker threads")->capture_default_str()->check(CLI::PositiveNumber);
  auto* o = cmd->add_option("--out-dir", s.out_dir, "Output directory");
  if (needs_out_dir) o->required();
}

struct SynthArgs {
  ShapeTaskConfig task;
  std::string out;
};

int cmd_synth(const SynthArgs& a, const Shared& s, std::ostream& out) {
  ShapeTaskConfig task = a.task;
  task.seed = s.seed;
  const LabeledDataset ds = make_shape_dataset(task);
  save_dataset_file(ds, a.out);
  out << "wrote " << ds.count() << " samples (" << ds.num_classes << " classes, " << ds.shape.c << "x" << ds.shape.h
      << "x" << ds.shape.w << ") to " << a.out << '\n';
  return kExitOk;
}

struct TrainArgs {
  std::string spec;
  std::string preset;
  std::string train;
  std::string val;
  std::string weak;
  std::string baseline_history;
  TrainConfig cfg;
  bool no_augment = false;
};

int cmd_train(TrainArgs a, const Shared& s, const CLI::App& cmd, const std::string& config, std::ostream& out) {
  ensure_dir(s.out_dir);
  Manifest manifest("train", config, s.seed);

  const LabeledDataset train = load_data(a.train, nullptr, "train");
  manifest.input(a.train);

  ModelSpec spec;
  if (a.spec.empty() == a.preset.empty()) throw ConfigError("exactly one of --spec and --preset is required");
  if (!a.spec.empty()) {
    spec = load_model_spec_file(a.spec);
    manifest.input(a.spec);
  } else {
    spec = preset_by_name(a.preset, train.num_classes);
  }

  TrainConfig cfg = a.cfg;
  if (a.no_augment) cfg.augment = false;
  const auto given = [&](const char* flag) { return cmd.get_option(flag)->count() > 0; };
  if (a.weak == "simple") {
    spec = shallow_variant(spec);
  } else if (a.weak == "underfit") {
    if (a.baseline_history.empty()) throw ConfigError("--weak underfit needs --baseline-history");
    const auto history = parse_history_csv(read_text_file(a.baseline_history));
    manifest.input(a.baseline_history);
    if (!given("--epochs")) cfg.epochs = std::max(1, best_epoch(history) / 2);
  } else if (a.weak == "overfit") {
    if (!given("--weight-decay")) cfg.weight_decay = 0.0;
    if (!given("--dropout")) cfg.dropout_rate = 0.0;
    cfg.augment = false;
  }
  cfg.seed = s.seed;
  cfg.validate();
  manifest.setting("model", spec.name);
  manifest.setting("epochs", cfg.epochs);
  manifest.setting("learning_rate", cfg.learning_rate);
  manifest.setting("momentum", cfg.momentum);
  manifest.setting("weight_decay", cfg.weight_decay);
  manifest.setting("batch_size", cfg.batch_size);
  manifest.setting("dropout", cfg.dropout_rate);
  manifest.setting("augment", cfg.augment);
  out << "settings: model " << spec.name << ", epochs " << cfg.epochs << ", lr " << cfg.learning_rate
      << ", weight decay " << cfg.weight_decay << ", dropout " << cfg.dropout_rate << ", augment "
      << (cfg.augment ? "on" : "off") << '\n';

  std::optional<LabeledDataset> val;
  if (!a.val.empty()) {
    val = load_data(a.val, &spec, "val");
    manifest.input(a.val);
  }
  if (!(train.shape == spec.input) || train.num_classes != spec.num_classes) load_data(a.train, &spec, "train");

  TrainResult result = manifest.stage("train", [&] {
    try {
      return sgd_train(spec, init_weights(spec, s.seed), train, cfg, val ? &*val : nullptr);
    } catch (const TrainingError& e) {
      throw TrainingError(std::string("train: ") + e.what());
    }
  });

  const std::string spec_out = join_path(s.out_dir, "spec.txt");
  const std::string weights_out = join_path(s.out_dir, "weights.cnsp");
  const std::string history_out = join_path(s.out_dir, "history.csv");
  save_model_spec_file(spec, spec_out);
  save_weights_file(result.weights, weights_out);
  write_text_file(history_out, format_history_csv(result.history));
  for (const auto& p : {spec_out, weights_out, history_out}) manifest.output(p);
  manifest.write(join_path(s.out_dir, "manifest.json"));

  const EpochStats& last = result.history.back();
  out << "trained " << spec.name << " for " << cfg.epochs << " epochs: loss " << fixed(last.loss)
      << ", train acc " << fixed(last.train_accuracy);
  if (last.val_accuracy >= 0.0) out << ", val acc " << fixed(last.val_accuracy);
  out << '\n';
  return kExitOk;
}

struct EvalArgs {
  std::string model;
  std::string modules;
  std::string data;
};

int cmd_eval(const EvalArgs& a, const Shared& s, std::ostream& out) {
  if (a.model.empty() == a.modules.empty()) throw ConfigError("exactly one of --model and --modules is required");
  std::vector<int> predictions;
  LabeledDataset data;
  std::string title;
  if (!a.model.empty()) {
    const LoadedModel m = load_model_dir(a.model);
    data = load_data(a.data, &m.model.spec, "data");
    predictions = predict_all(Network(m.model.spec, m.model.weights), data, s.threads);
    title = "model " + a.model;
  } else {
    ComposedModel cm;
    for (const auto& dir : module_dirs(a.modules)) cm.modules.push_back(load_module(dir));
    data = load_data(a.data, &cm.modules.front().spec, "data");
    predictions.resize(data.count());
    parallel_for(data.count(), s.threads, [&](std::size_t i) { predictions[i] = cm.predict(data.image(i)); });
    title = "composed model " + a.modules;
  }
  const auto metrics = per_class_metrics(confusion(data.labels, predictions, data.num_classes));
  std::size_t correct = 0;
  for (std::size_t i = 0; i < data.count(); ++i) correct += predictions[i] == data.labels[i];
  const double acc = data.count() ? static_cast<double>(correct) / data.count() : 0.0;

  out << format_class_metrics_table(metrics, title);
  out << "accuracy " << fixed(acc) << " (" << correct << "/" << data.count() << ")\n";

  if (!s.out_dir.empty()) {
    ensure_dir(s.out_dir);
    Table rows{{"class", "support", "precision", "recall", "f1"}};
    for (std::size_t c = 0; c < metrics.size(); ++c) {
      rows.push_back({std::to_string(c), std::to_string(metrics[c].support), opt_fixed(metrics[c].precision),
                      opt_fixed(metrics[c].recall), opt_fixed(metrics[c].f1)});
    }
    rows.push_back({"# accuracy", fixed(acc)});
    write_text_file(join_path(s.out_dir, "eval.csv"), format_csv(rows));
  }
  return kExitOk;
}

struct AnalysisArgs {
  std::string model;
  std::string train;
  std::string val;
  std::string grouping = "importance";
  double threshold = kDefaultSensitivityThreshold;
  int samples = kDefaultImportanceSamples;
};

struct Analysis {
  ImportanceTable importance;
  GroupingMap grouping;
  SensitivityProfile profile;
};

Analysis run_analysis(const Model& model, const LabeledDataset& train, const LabeledDataset& val,
                      const AnalysisArgs& a, const Shared& s, Manifest& manifest) {
  const Network net(model.spec, model.weights);
  Analysis r;
  const GroupingMode mode = parse_grouping_mode(a.grouping);
  if (a.samples <= 0) throw ConfigError("--samples must be positive");
  r.importance = manifest.stage("importance", [&] { return compute_importance(net, train, a.samples, s.threads); });
  r.grouping = build_grouping(r.importance, model.spec, mode, s.seed);
  r.profile = manifest.stage("sensitivity", [&] {
    return layer_sensitivity(net, val, r.importance, r.grouping.layout, a.threshold, s.threads);
  });
  return r;
}

std::string format_sensitivity_csv(const SensitivityProfile& p, const SegmentLayout& layout) {
  Table rows{{"segment", "layers", "baseline"}};
  for (double r : p.ratios) rows[0].push_back("drop_" + fixed(r, 1));
  rows[0].push_back("sensitive");
  for (std::size_t seg = 0; seg < p.sensitive.size(); ++seg) {
    std::string layers;
    for (int c : layout.members[seg]) layers += (layers.empty() ? "conv" : " conv") + std::to_string(c);
    std::vector<std::string> row{std::to_string(seg), layers, fixed(p.baseline_accuracy)};
    for (double acc : p.accuracy[seg]) row.push_back(fixed(acc));
    row.push_back(p.sensitive[seg] ? "yes" : "no");
    rows.push_back(std::move(row));
  }
  return format_csv(rows);
}

void write_analysis(const Analysis& an, const std::string& dir, Manifest& manifest) {
  const std::pair<std::string, std::string> files[] = {
      {"importance.json", importance_to_json(an.importance)},
      {"grouping.json", grouping_to_json(an.grouping)},
      {"sensitivity.json", sensitivity_to_json(an.profile)},
      {"sensitivity.csv", format_sensitivity_csv(an.profile, an.grouping.layout)},
  };
  for (const auto& [name, text] : files) {
    const std::string path = join_path(dir, name);
    write_text_file(path, text);
    manifest.output(path);
  }
}

int cmd_analyze(const AnalysisArgs& a, const Shared& s, const std::string& config, std::ostream& out) {
  ensure_dir(s.out_dir);
  Manifest manifest("analyze", config, s.seed);
  const LoadedModel m = load_model_dir(a.model);
  manifest.input(m.spec_path);
  manifest.input(m.weights_path);
  const LabeledDataset train = load_data(a.train, &m.model.spec, "train");
  const LabeledDataset val = load_data(a.val, &m.model.spec, "val");
  manifest.input(a.train);
  manifest.input(a.val);

  const Analysis an = run_analysis(m.model, train, val, a, s, manifest);
  write_analysis(an, s.out_dir, manifest);
  manifest.write(join_path(s.out_dir, "manifest.json"));

  out << "baseline val acc " << fixed(an.profile.baseline_accuracy) << ", " << an.grouping.total_bits()
      << " genome bits over " << an.grouping.layout.segment_count() << " segments\n";
  for (int seg = 0; seg < an.grouping.layout.segment_count(); ++seg) {
    out << "segment " << seg << ": acc at 90% drop " << fixed(an.profile.accuracy[seg].back()) << ", "
        << (an.profile.sensitive[seg] ? "sensitive" : "insensitive") << '\n';
  }
  return kExitOk;
}

struct ModularizeArgs {
  AnalysisArgs analysis;
  std::string test;
  std::string analysis_dir;
  std::string init = "sensitivity";
  bool no_pruning = false;
  bool plan_only = false;
  SearchConfig search;
};

std::string exhaustive_text(int classes, int population) {
  const std::uint64_t n = exhaustive_cm_count(classes, population);
  if (n == std::numeric_limits<std::uint64_t>::max()) return std::to_string(population) + "^" + std::to_string(classes);
  return std::to_string(n);
}

void print_plan(const EvaluationPlan& plan, int classes, int population, std::ostream& out) {
  Table rows{{"step", "classes", "kind", "evaluations", "kept"}};
  for (std::size_t i = 0; i < plan.steps.size(); ++i) {
    const PlanStep& st = plan.steps[i];
    std::string cls;
    for (int c : st.classes) cls += (cls.empty() ? "" : " ") + std::to_string(c);
    rows.push_back({std::to_string(i), cls, st.leaf ? "leaf" : "merge", std::to_string(st.evaluations),
                    std::to_string(st.kept)});
  }
  out << format_aligned(rows);
  out << "CM evaluations per generation: " << plan.total << " (exhaustive: " << exhaustive_text(classes, population)
      << ")\n";
}

Table module_report_rows(const Model& parent, const std::vector<ModuleArtifact>& modules) {
  const double parent_kernels = static_cast<double>(count_kernels(parent.spec));
  const double parent_flops = static_cast<double>(count_flops(parent.spec));
  Table rows{{"model", "kernels", "kernel_reduction", "flops", "flops_reduction"}};
  rows.push_back({"parent", std::to_string(count_kernels(parent.spec)), percent(0.0),
                  std::to_string(count_flops(parent.spec)), percent(0.0)});
  double sum_k = 0.0, sum_f = 0.0;
  for (const auto& m : modules) {
    const double k = static_cast<double>(count_kernels(m.spec));
    const double f = static_cast<double>(count_flops(m.spec));
    sum_k += k;
    sum_f += f;
    rows.push_back({"module_" + std::to_string(m.class_id), std::to_string(count_kernels(m.spec)),
                    percent(1.0 - k / parent_kernels), std::to_string(count_flops(m.spec)),
                    percent(1.0 - f / parent_flops)});
  }
  if (!modules.empty()) {
    const double n = static_cast<double>(modules.size());
    rows.push_back({"module_mean", fixed(sum_k / n, 1), percent(1.0 - sum_k / n / parent_kernels),
                    fixed(sum_f / n, 1), percent(1.0 - sum_f / n / parent_flops)});
  }
  return rows;
}

int cmd_modularize(const ModularizeArgs& a, const Shared& s, const std::string& config, std::ostream& out) {
  SearchConfig cfg = a.search;
  cfg.seed = s.seed;
  cfg.threads = s.threads;
  cfg.init_mode = parse_init_mode(a.init);
  cfg.grouping_mode = parse_grouping_mode(a.analysis.grouping);
  cfg.pruning = !a.no_pruning;
  cfg.validate();

  const LoadedModel m = load_model_dir(a.analysis.model);
  const int classes = m.model.spec.num_classes;

  if (a.plan_only) {
    if (cfg.pruning) {
      print_plan(plan_evaluation(classes, cfg.population, cfg.n_top), classes, cfg.population, out);
    } else {
      out << "CM evaluations per generation: " << exhaustive_text(classes, cfg.population) << " (exhaustive)\n";
    }
    return kExitOk;
  }

  ensure_dir(s.out_dir);
  Manifest manifest("modularize", config, s.seed);
  manifest.input(m.spec_path);
  manifest.input(m.weights_path);
  const LabeledDataset val = load_data(a.analysis.val, &m.model.spec, "val");
  manifest.input(a.analysis.val);
  std::optional<LabeledDataset> test;
  if (!a.test.empty()) {
    test = load_data(a.test, &m.model.spec, "test");
    manifest.input(a.test);
  }

  if (!cfg.pruning) {
    const std::uint64_t count = exhaustive_cm_count(classes, cfg.population);
    if (count > cfg.exhaustive_budget) {
      throw ConfigError("--no-pruning needs " + exhaustive_text(classes, cfg.population) + " CM evaluations per generation, budget is " +
                        std::to_string(cfg.exhaustive_budget));
    }
  }

  Analysis an;
  if (!a.analysis_dir.empty()) {
    const std::string files[] = {"importance.json", "grouping.json", "sensitivity.json"};
    for (const auto& f : files) manifest.input(join_path(a.analysis_dir, f));
    an.importance = importance_from_json(read_text_file(join_path(a.analysis_dir, files[0])));
    an.grouping = grouping_from_json(read_text_file(join_path(a.analysis_dir, files[1])));
    an.profile = sensitivity_from_json(read_text_file(join_path(a.analysis_dir, files[2])));
    if (an.grouping.mode != cfg.grouping_mode) {
      throw ConfigError("cached grouping uses mode '" + to_string(an.grouping.mode) + "', --grouping is '" +
                        a.analysis.grouping + "'");
    }
    if (an.grouping.layer_kernels != conv_channels(m.model.spec) || an.grouping.num_classes() != classes) {
      throw ConfigError("cached analysis in '" + a.analysis_dir + "' does not match the model");
    }
  } else {
    const LabeledDataset train = load_data(a.analysis.train, &m.model.spec, "train");
    manifest.input(a.analysis.train);
    an = run_analysis(m.model, train, val, a.analysis, s, manifest);
  }
  write_analysis(an, s.out_dir, manifest);

  if (cfg.pruning) {
    out << "CM evaluations per generation: " << plan_evaluation(classes, cfg.population, cfg.n_top).total << '\n';
  }

  const SearchInputs inputs{&m.model, &val, &an.grouping, &an.profile};
  const SearchResult result = manifest.stage("search", [&] {
    return run_search(inputs, cfg, [&](int gen, const SearchResult& r) {
      out << "generation " << gen << ": best composed fitness " << fixed(r.composed_history.back()) << '\n';
    });
  });
  for (const auto& w : result.warnings) out << "warning: " << w << '\n';

  const std::uint64_t parent_fp = fingerprint(m.model.weights);
  std::vector<ModuleArtifact> modules;
  manifest.stage("decode", [&] {
    DecodeOptions opts;
    opts.parent_fingerprint = parent_fp;
    for (const Genome& g : result.best) modules.push_back(decode(m.model, an.grouping, g, opts));
    return 0;
  });
  for (const auto& mod : modules) {
    const std::string dir = join_path(s.out_dir, "module_" + std::to_string(mod.class_id));
    save_module(mod, dir);
    for (const char* f : {"spec.txt", "weights.cnsp", "genome.txt"}) manifest.output(join_path(dir, f));
  }

  const std::string history_path = join_path(s.out_dir, "history.csv");
  write_text_file(history_path, format_history_csv(result.history));
  manifest.output(history_path);

  ComposedModel cm{modules};
  const Network parent_net(m.model.spec, m.model.weights);
  std::vector<std::vector<int>> kernel_sets;
  double mean_kernels = 0.0;
  for (const auto& mod : modules) {
    kernel_sets.push_back(mod.retained_kernels);
    mean_kernels += static_cast<double>(mod.retained_kernels.size()) / modules.size();
  }
  const double diff = cm_diff(kernel_sets);
  const LabeledDataset& report_data = test ? *test : val;
  const std::string report_set = test ? "test" : "val";
  const double model_acc = accuracy(parent_net, report_data, s.threads);
  const double cm_acc = cm_accuracy(cm, report_data, s.threads);
  const double total_kernels = static_cast<double>(count_kernels(m.model.spec));

  Table summary{{"model", "data", "model_acc", "cm_acc", "acc_loss", "cm_diff", "model_kernels", "module_kernels",
                 "kernel_retention", "generations", "cm_evaluations"}};
  summary.push_back({m.model.spec.name, report_set, fixed(model_acc), fixed(cm_acc), fixed(model_acc - cm_acc),
                     fixed(diff), std::to_string(count_kernels(m.model.spec)), fixed(mean_kernels, 1),
                     fixed(mean_kernels / total_kernels), std::to_string(result.generations_run),
                     std::to_string(result.cm_evaluations)});
  const Table modules_table = module_report_rows(m.model, modules);

  const std::string report_csv = join_path(s.out_dir, "report.csv");
  const std::string report_txt = join_path(s.out_dir, "report.txt");
  write_text_file(report_csv, format_csv(summary) + "\n" + format_csv(modules_table));
  std::string text = format_aligned(summary) + "\n" + format_aligned(modules_table);
  text += "search fitness on val: acc " + fixed(result.best_composed.acc) + ", diff " +
          fixed(result.best_composed.diff) + ", fitness " + fixed(result.best_composed.fitness) + "\n";
  write_text_file(report_txt, text);
  manifest.output(report_csv);
  manifest.output(report_txt);
  manifest.write(join_path(s.out_dir, "manifest.json"));

  out << text;
  return kExitOk;
}

struct PatchArgs {
  std::string weak;
  std::string module;
  std::string train;
  std::string test;
  int target = -1;
};

int cmd_patch(const PatchArgs& a, const Shared& s, const std::string& config, std::ostream& out) {
  ensure_dir(s.out_dir);
  Manifest manifest("patch", config, s.seed);
  const LoadedModel weak = load_model_dir(a.weak);
  manifest.input(weak.spec_path);
  manifest.input(weak.weights_path);
  const ModuleArtifact module = load_module(a.module);
  manifest.input(join_path(a.module, "weights.cnsp"));
  if (module.class_id != a.target) {
    throw ConfigError("module in '" + a.module + "' was cut for class " + std::to_string(module.class_id) +
                      ", --target-class is " + std::to_string(a.target));
  }
  const LabeledDataset train = load_data(a.train, &weak.model.spec, "train");
  const LabeledDataset test = load_data(a.test, &weak.model.spec, "test");
  manifest.input(a.train);
  manifest.input(a.test);

  const Network weak_net(weak.model.spec, weak.model.weights);
  const Network module_net(module.spec, module.weights);

  out << format_class_metrics_table(
      per_class_metrics(confusion(test.labels, predict_all(weak_net, test, s.threads), test.num_classes)),
      "weak model on test");

  const Calibration cal = manifest.stage("calibrate", [&] {
    return calibrate_module(module_net, a.target, train, s.threads);
  });
  const PatchReport report = manifest.stage("evaluate", [&] {
    return evaluate_patch(weak_net, module_net, cal, test, a.target, s.threads);
  });

  const std::string csv = join_path(s.out_dir, "patch.csv");
  const std::string txt = join_path(s.out_dir, "patch.txt");
  write_text_file(csv, format_patch_csv(report));
  write_text_file(txt, format_patch_table(report));
  manifest.output(csv);
  manifest.output(txt);
  manifest.write(join_path(s.out_dir, "manifest.json"));
  out << format_patch_table(report);
  return kExitOk;
}

struct ReportArgs {
  std::string model;
  std::string modules;
};

int cmd_report(const ReportArgs& a, const Shared& s, std::ostream& out) {
  const LoadedModel m = load_model_dir(a.model);
  std::vector<ModuleArtifact> modules;
  if (!a.modules.empty()) {
    for (const auto& dir : module_dirs(a.modules)) modules.push_back(load_module(dir));
  }
  const Table rows = module_report_rows(m.model, modules);
  out << format_aligned(rows);
  if (!s.out_dir.empty()) {
    ensure_dir(s.out_dir);
    write_text_file(join_path(s.out_dir, "size_report.csv"), format_csv(rows));
    write_text_file(join_path(s.out_dir, "size_report.txt"), format_aligned(rows));
  }
  return kExitOk;
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"cnnsplit: split a trained CNN into per-class modules and patch weak models"};
  app.set_config("--config", "", "key=value config file; flags win");
  app.require_subcommand(1);

  Shared shared;

  SynthArgs synth;
  auto* synth_cmd = app.add_subcommand("synth", "Generate a shape-recognition dataset");
  add_shared(synth_cmd, shared, false);
  synth_cmd->add_option("--classes", synth.task.num_classes)->capture_default_str();
  synth_cmd->add_option("--per-class", synth.task.per_class)->capture_default_str();
  synth_cmd->add_option("--size", synth.task.size)->capture_default_str();
  synth_cmd->add_option("--noise", synth.task.noise)->capture_default_str();
  synth_cmd->add_option("--out", synth.out, "Dataset file (CNDS)")->required();

  TrainArgs train;
  auto* train_cmd = app.add_subcommand("train", "Train a model");
  add_shared(train_cmd, shared, true);
  train_cmd->add_option("--spec", train.spec, "Model spec file");
  train_cmd->add_option("--preset", train.preset, "desk-simcnn|desk-rescnn|simcnn|rescnn");
  train_cmd->add_option("--train", train.train, "Training data (CNDS)")->required();
  train_cmd->add_option("--val", train.val, "Validation data (CNDS)");
  train_cmd->add_option("--epochs", train.cfg.epochs)->capture_default_str();
  train_cmd->add_option("--lr", train.cfg.learning_rate)->capture_default_str();
  train_cmd->add_option("--momentum", train.cfg.momentum)->capture_default_str();
  train_cmd->add_option("--weight-decay", train.cfg.weight_decay)->capture_default_str();
  train_cmd->add_option("--batch", train.cfg.batch_size)->capture_default_str();
  train_cmd->add_option("--dropout", train.cfg.dropout_rate)->capture_default_str();
  train_cmd->add_flag("--no-augment", train.no_augment, "Disable random flips");
  train_cmd->add_option("--weak", train.weak, "Weak-model recipe")
      ->check(CLI::IsMember({"simple", "underfit", "overfit"}));
  train_cmd->add_option("--baseline-history", train.baseline_history, "history.csv of the baseline run");

  EvalArgs eval;
  auto* eval_cmd = app.add_subcommand("eval", "Accuracy and per-class metrics of a model or composed modules");
  add_shared(eval_cmd, shared, false);
  eval_cmd->add_option("--model", eval.model, "Model directory");
  eval_cmd->add_option("--modules", eval.modules, "Directory of module_<n> directories");
  eval_cmd->add_option("--data", eval.data, "Dataset (CNDS)")->required();

  AnalysisArgs analysis;
  auto* analyze_cmd = app.add_subcommand("analyze", "Kernel importance, grouping and layer sensitivity");
  add_shared(analyze_cmd, shared, true);
  const auto add_analysis = [](CLI::App* cmd, AnalysisArgs& a) {
    cmd->add_option("--model", a.model, "Model directory")->required();
    cmd->add_option("--train", a.train, "Training data, for importance")->required();
    cmd->add_option("--val", a.val, "Validation data, for sensitivity and fitness");
    cmd->add_option("--grouping", a.grouping)->check(CLI::IsMember({"importance", "random", "none"}))
        ->capture_default_str();
    cmd->add_option("--threshold", a.threshold, "Sensitivity threshold")->capture_default_str();
    cmd->add_option("--samples", a.samples, "Importance samples per class")->capture_default_str();
  };
  add_analysis(analyze_cmd, analysis);

  ModularizeArgs mod;
  auto* mod_cmd = app.add_subcommand("modularize", "Search per-class modules and write them out");
  add_shared(mod_cmd, shared, false);
  add_analysis(mod_cmd, mod.analysis);
  mod_cmd->get_option("--train")->required(false);
  mod_cmd->add_option("--test", mod.test, "Test data for the report");
  mod_cmd->add_option("--analysis", mod.analysis_dir, "Reuse analyze outputs from this directory");
  mod_cmd->add_option("--init", mod.init)->check(CLI::IsMember({"sensitivity", "random"}))->capture_default_str();
  mod_cmd->add_option("--population", mod.search.population, "Genomes per class")->capture_default_str();
  mod_cmd->add_option("--parents", mod.search.parents, "Parents kept per generation")->capture_default_str();
  mod_cmd->add_option("--mutation-rate", mod.search.mutation_rate, "Per-bit flip probability")->capture_default_str();
  mod_cmd->add_option("--generations", mod.search.generations, "Generation limit")->capture_default_str();
  mod_cmd->add_option("--alpha", mod.search.alpha)->capture_default_str();
  mod_cmd->add_option("--n-top", mod.search.n_top)->capture_default_str();
  mod_cmd->add_option("--patience", mod.search.patience, "Generations without improvement before stopping")
      ->capture_default_str();
  mod_cmd->add_flag("--no-pruning", mod.no_pruning, "Evaluate every full combination");
  mod_cmd->add_option("--budget", mod.search.exhaustive_budget, "Max CM evaluations per generation without pruning")
      ->capture_default_str();
  mod_cmd->add_flag("--plan-only", mod.plan_only, "Print the evaluation schedule and exit");

  PatchArgs patch;
  auto* patch_cmd = app.add_subcommand("patch", "Patch a weak model with a module for one class");
  add_shared(patch_cmd, shared, true);
  patch_cmd->add_option("--weak", patch.weak, "Weak model directory")->required();
  patch_cmd->add_option("--module", patch.module, "Module directory")->required();
  patch_cmd->add_option("--target-class", patch.target, "Class to patch")->required();
  patch_cmd->add_option("--train", patch.train, "Training data, for calibration")->required();
  patch_cmd->add_option("--test", patch.test, "Test data")->required();

  ReportArgs report;
  auto* report_cmd = app.add_subcommand("report", "Kernel and FLOP counts of a model and its modules");
  add_shared(report_cmd, shared, false);
  report_cmd->add_option("--model", report.model, "Parent model directory")->required();
  report_cmd->add_option("--modules", report.modules, "Directory of module_<n> directories");

  std::vector<std::string> reversed(args.rbegin(), args.rend());
  try {
    app.parse(reversed);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kExitOk : kExitConfig;
  }

  std::string config;
  for (const auto* sub : app.get_subcommands()) config = sub->config_to_str(true, false);

  try {
    if (synth_cmd->parsed()) return cmd_synth(synth, shared, out);
    if (train_cmd->parsed()) return cmd_train(train, shared, *train_cmd, config, out);
    if (eval_cmd->parsed()) return cmd_eval(eval, shared, out);
    if (analyze_cmd->parsed()) {
      if (analysis.val.empty()) throw ConfigError("--val is required");
      return cmd_analyze(analysis, shared, config, out);
    }
    if (mod_cmd->parsed()) {
      if (!mod.plan_only) {
        if (mod.analysis.train.empty() && mod.analysis_dir.empty()) throw ConfigError("--train is required");
        if (mod.analysis.val.empty()) throw ConfigError("--val is required");
        if (shared.out_dir.empty()) throw ConfigError("--out-dir is required");
      }
      return cmd_modularize(mod, shared, config, out);
    }
    if (patch_cmd->parsed()) return cmd_patch(patch, shared, config, out);
    if (report_cmd->parsed()) return cmd_report(report, shared, out);
  } catch (const ConfigError& e) {
    err << "error: " << e.what() << '\n';
    return kExitConfig;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return kExitRuntime;
  }
  return kExitConfig;
}

int run(int argc, char** argv) {
  std::vector<std::string> args(argv + 1, argv + argc);
  return run(args, std::cout, std::cerr);
}

}  // namespace cnnsplit::cli
