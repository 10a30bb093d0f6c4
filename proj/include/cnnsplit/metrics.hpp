#pragma once

#include <cstddef>
#include <optional>
#include <span>
#include <vector>

namespace cnnsplit {

class ConfusionMatrix {
 public:
  explicit ConfusionMatrix(int num_classes);

  void add(int label, int prediction);
  std::size_t at(int label, int prediction) const;
  int num_classes() const noexcept { return n_; }
  std::size_t support(int label) const;
  std::size_t predicted(int prediction) const;
  std::size_t total() const noexcept { return total_; }

 private:
  int n_;
  std::vector<std::size_t> counts_;
  std::size_t total_ = 0;
};

/// Undefined (nullopt) when the class has no samples. Precision is 0 when a
/// present class is never predicted; F1 is 0 when precision and recall are.
struct ClassMetrics {
  std::optional<double> precision;
  std::optional<double> recall;
  std::optional<double> f1;
  std::size_t support = 0;
};

std::vector<ClassMetrics> per_class_metrics(const ConfusionMatrix& cm);

ConfusionMatrix confusion(std::span<const int> labels, std::span<const int> predictions, int num_classes);

double harmonic_f1(double precision, double recall);

}  // namespace cnnsplit
