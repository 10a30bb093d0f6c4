#include "cnnsplit/metrics.hpp"

#include <string>

#include "cnnsplit/error.hpp"

namespace cnnsplit {

ConfusionMatrix::ConfusionMatrix(int num_classes) : n_(num_classes) {
  if (num_classes <= 0) throw ConfigError("confusion matrix needs at least one class");
  counts_.assign(static_cast<std::size_t>(n_) * n_, 0);
}

void ConfusionMatrix::add(int label, int prediction) {
  if (label < 0 || label >= n_ || prediction < 0 || prediction >= n_) {
    throw ConfigError("confusion entry (" + std::to_string(label) + "," + std::to_string(prediction) +
                      ") outside " + std::to_string(n_) + " classes");
  }
  ++counts_[static_cast<std::size_t>(label) * n_ + prediction];
  ++total_;
}

std::size_t ConfusionMatrix::at(int label, int prediction) const {
  return counts_[static_cast<std::size_t>(label) * n_ + prediction];
}

std::size_t ConfusionMatrix::support(int label) const {
  std::size_t s = 0;
  for (int p = 0; p < n_; ++p) s += at(label, p);
  return s;
}

std::size_t ConfusionMatrix::predicted(int prediction) const {
  std::size_t s = 0;
  for (int l = 0; l < n_; ++l) s += at(l, prediction);
  return s;
}

double harmonic_f1(double precision, double recall) {
  return precision + recall == 0.0 ? 0.0 : 2.0 * precision * recall / (precision + recall);
}

std::vector<ClassMetrics> per_class_metrics(const ConfusionMatrix& cm) {
  std::vector<ClassMetrics> out(cm.num_classes());
  for (int c = 0; c < cm.num_classes(); ++c) {
    ClassMetrics& m = out[c];
    m.support = cm.support(c);
    if (m.support == 0) continue;
    const double tp = static_cast<double>(cm.at(c, c));
    const std::size_t pred = cm.predicted(c);
    m.recall = tp / static_cast<double>(m.support);
    m.precision = pred == 0 ? 0.0 : tp / static_cast<double>(pred);
    m.f1 = harmonic_f1(*m.precision, *m.recall);
  }
  return out;
}

ConfusionMatrix confusion(std::span<const int> labels, std::span<const int> predictions, int num_classes) {
  if (labels.size() != predictions.size()) throw ShapeError("labels and predictions differ in length");
  ConfusionMatrix cm(num_classes);
  for (std::size_t i = 0; i < labels.size(); ++i) cm.add(labels[i], predictions[i]);
  return cm;
}

}  // namespace cnnsplit
