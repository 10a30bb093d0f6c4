#include "cnnsplit/patcher.hpp"

#include <algorithm>
#include <cstdio>
#include <limits>
#include <sstream>

#include "cnnsplit/error.hpp"
#include "cnnsplit/layers.hpp"
#include "cnnsplit/parallel.hpp"

namespace cnnsplit {

Calibration calibrate_module(const Network& module, int class_id, const LabeledDataset& train, int threads) {
  if (class_id < 0 || class_id >= module.num_classes()) {
    throw ConfigError("calibration class " + std::to_string(class_id) + " outside module's " +
                      std::to_string(module.num_classes()) + " logits");
  }
  const auto idx = train.indices_of(class_id);
  if (idx.empty()) throw ConfigError("no training samples of class " + std::to_string(class_id) + " to calibrate on");
  std::vector<float> logits(idx.size());
  parallel_for(idx.size(), threads, [&](std::size_t i) { logits[i] = module.forward(train.image(idx[i]))[class_id]; });
  const auto [lo, hi] = std::minmax_element(logits.begin(), logits.end());
  return Calibration{*lo, *hi, class_id};
}

double normalize_patch_logit(float logit, const Calibration& cal) {
  if (cal.max == cal.min) return 0.5;
  const double v = (static_cast<double>(logit) - cal.min) / (static_cast<double>(cal.max) - cal.min);
  return std::clamp(v, 0.0, 1.0);
}

PatchedOutput combine_patch(std::span<const float> weak_logits, float module_logit, const Calibration& cal) {
  if (cal.class_id < 0 || static_cast<std::size_t>(cal.class_id) >= weak_logits.size()) {
    throw ShapeError("target class " + std::to_string(cal.class_id) + " outside weak model's " +
                     std::to_string(weak_logits.size()) + " logits");
  }
  PatchedOutput out;
  out.output = softmax(weak_logits);
  out.output[cal.class_id] = normalize_patch_logit(module_logit, cal);
  out.degenerate = cal.max == cal.min;
  out.prediction = argmax(std::span<const double>(out.output));
  return out;
}

PatchedOutput patched_predict(const Network& weak, const Network& module, const Calibration& cal,
                              const Tensor& input) {
  const Tensor w = weak.forward(input);
  const Tensor m = module.forward(input);
  if (w.size() != m.size()) {
    throw ShapeError("weak model emits " + std::to_string(w.size()) + " logits, module emits " +
                     std::to_string(m.size()));
  }
  return combine_patch(w.values(), m[cal.class_id], cal);
}

PatchReport evaluate_patch(const Network& weak, const Network& module, const Calibration& cal,
                           const LabeledDataset& test, int target_class, int threads) {
  if (cal.class_id != target_class) {
    throw ConfigError("calibration is for class " + std::to_string(cal.class_id) + ", target is " +
                      std::to_string(target_class));
  }
  const int n = weak.num_classes();
  if (module.num_classes() != n) {
    throw ShapeError("weak model has " + std::to_string(n) + " classes, module has " +
                     std::to_string(module.num_classes()));
  }
  if (target_class < 0 || target_class >= n) throw ConfigError("target class outside the model's classes");
  const bool has_tc = std::count(test.labels.begin(), test.labels.end(), target_class) > 0;
  const bool has_other = std::any_of(test.labels.begin(), test.labels.end(), [&](int l) { return l != target_class; });
  if (!has_tc || !has_other) {
    throw ConfigError("test set must contain the target class and at least one other class");
  }

  std::vector<int> weak_pred(test.count());
  std::vector<int> patch_pred(test.count());
  std::vector<std::uint8_t> degenerate(test.count(), 0);
  parallel_for(test.count(), threads, [&](std::size_t i) {
    const Tensor img = test.image(i);
    const Tensor w = weak.forward(img);
    const Tensor m = module.forward(img);
    weak_pred[i] = argmax(w.values());
    const PatchedOutput p = combine_patch(w.values(), m[target_class], cal);
    patch_pred[i] = p.prediction;
    degenerate[i] = p.degenerate;
  });

  PatchReport r;
  r.target_class = target_class;
  r.num_classes = n;
  r.calibration = cal;
  const auto cm_weak = confusion(test.labels, weak_pred, n);
  const auto cm_patch = confusion(test.labels, patch_pred, n);
  r.weak = per_class_metrics(cm_weak);
  r.patched = per_class_metrics(cm_patch);
  std::size_t wc = 0, pc = 0, wn = 0, pn = 0;
  for (std::size_t i = 0; i < test.count(); ++i) {
    const int l = test.labels[i];
    wc += weak_pred[i] == l;
    pc += patch_pred[i] == l;
  }
  std::vector<std::size_t> non_tc;
  for (std::size_t i = 0; i < test.count(); ++i) {
    if (test.labels[i] != target_class) non_tc.push_back(i);
  }
  for (std::size_t i : non_tc) {
    const int l = test.labels[i];
    r.non_tc_target_labels += l == target_class;
    wn += weak_pred[i] == l;
    pn += patch_pred[i] == l;
  }
  r.non_tc_samples = non_tc.size();
  r.weak_accuracy = static_cast<double>(wc) / test.count();
  r.patched_accuracy = static_cast<double>(pc) / test.count();
  r.weak_non_tc_accuracy = static_cast<double>(wn) / r.non_tc_samples;
  r.patched_non_tc_accuracy = static_cast<double>(pn) / r.non_tc_samples;
  r.module_kernels = count_kernels(module.spec());
  r.module_flops = count_flops(module.spec());
  r.weak_kernels = count_kernels(weak.spec());
  r.weak_flops = count_flops(weak.spec());
  r.degenerate_outputs = static_cast<std::size_t>(std::count(degenerate.begin(), degenerate.end(), 1));
  r.notes.push_back("normalized module logit is clamped to [0,1]");
  if (r.degenerate_outputs) r.notes.push_back("calibration max == min: module entry fixed at 0.5");
  return r;
}

namespace {

std::string pct(const std::optional<double>& v) {
  if (!v) return "undef";
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.2f", *v * 100.0);
  return buf;
}

std::string num(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.6f", v);
  return buf;
}

std::string delta(const std::optional<double>& a, const std::optional<double>& b) {
  if (!a || !b) return "undef";
  char buf[32];
  std::snprintf(buf, sizeof buf, "%+.2f", (*b - *a) * 100.0);
  return buf;
}

}  // namespace

std::string format_patch_csv(const PatchReport& r) {
  std::ostringstream os;
  os << "class,support,precision_weak,precision_patch,recall_weak,recall_patch,f1_weak,f1_patch\n";
  for (int c = 0; c < r.num_classes; ++c) {
    const auto& w = r.weak[c];
    const auto& p = r.patched[c];
    os << c << ',' << w.support << ',' << pct(w.precision) << ',' << pct(p.precision) << ',' << pct(w.recall) << ','
       << pct(p.recall) << ',' << pct(w.f1) << ',' << pct(p.f1) << '\n';
  }
  os << "#target_class," << r.target_class << '\n';
  os << "#calibration_min," << num(r.calibration.min) << '\n';
  os << "#calibration_max," << num(r.calibration.max) << '\n';
  os << "#non_tc_samples," << r.non_tc_samples << '\n';
  os << "#non_tc_accuracy_weak," << num(r.weak_non_tc_accuracy) << '\n';
  os << "#non_tc_accuracy_patch," << num(r.patched_non_tc_accuracy) << '\n';
  os << "#accuracy_weak," << num(r.weak_accuracy) << '\n';
  os << "#accuracy_patch," << num(r.patched_accuracy) << '\n';
  os << "#module_kernels," << r.module_kernels << '\n';
  os << "#module_flops," << r.module_flops << '\n';
  return os.str();
}

std::string format_patch_table(const PatchReport& r) {
  std::ostringstream os;
  for (const auto& note : r.notes) os << "note: " << note << '\n';
  char line[256];
  std::snprintf(line, sizeof line, "%-8s %8s | %9s %9s | %9s %9s | %9s %9s\n", "class", "support", "P weak", "P patch",
                "R weak", "R patch", "F1 weak", "F1 patch");
  os << line;
  for (int c = 0; c < r.num_classes; ++c) {
    const auto& w = r.weak[c];
    const auto& p = r.patched[c];
    const std::string name = std::to_string(c) + (c == r.target_class ? " (TC)" : "");
    std::snprintf(line, sizeof line, "%-8s %8zu | %9s %9s | %9s %9s | %9s %9s\n", name.c_str(), w.support,
                  pct(w.precision).c_str(), pct(p.precision).c_str(), pct(w.recall).c_str(), pct(p.recall).c_str(),
                  pct(w.f1).c_str(), pct(p.f1).c_str());
    os << line;
  }
  const auto& w = r.weak[r.target_class];
  const auto& p = r.patched[r.target_class];
  os << "TC delta: precision " << delta(w.precision, p.precision) << ", recall " << delta(w.recall, p.recall)
     << ", F1 " << delta(w.f1, p.f1) << '\n';
  std::snprintf(line, sizeof line, "non-TC accuracy (%zu samples): weak %.2f%%, patched %.2f%% (%+.2f)\n",
                r.non_tc_samples, r.weak_non_tc_accuracy * 100.0, r.patched_non_tc_accuracy * 100.0,
                (r.patched_non_tc_accuracy - r.weak_non_tc_accuracy) * 100.0);
  os << line;
  os << "patch module: " << r.module_kernels << " kernels, " << r.module_flops << " FLOPs (weak model: "
     << r.weak_kernels << " kernels, " << r.weak_flops << " FLOPs)\n";
  return os.str();
}

std::string format_class_metrics_table(const std::vector<ClassMetrics>& metrics, const std::string& title) {
  std::ostringstream os;
  os << title << '\n';
  char line[160];
  std::snprintf(line, sizeof line, "%-6s %8s %10s %10s %10s\n", "class", "support", "precision", "recall", "F1");
  os << line;
  for (std::size_t c = 0; c < metrics.size(); ++c) {
    const auto& m = metrics[c];
    std::snprintf(line, sizeof line, "%-6zu %8zu %10s %10s %10s\n", c, m.support, pct(m.precision).c_str(),
                  pct(m.recall).c_str(), pct(m.f1).c_str());
    os << line;
  }
  return os.str();
}

}  // namespace cnnsplit
