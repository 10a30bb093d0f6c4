#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "cnnsplit/dataset.hpp"
#include "cnnsplit/metrics.hpp"
#include "cnnsplit/network.hpp"

namespace cnnsplit {

/// Range of a module's own-class logit over that class's training samples.
struct Calibration {
  float min = 0.0f;
  float max = 0.0f;
  int class_id = 0;
};

Calibration calibrate_module(const Network& module, int class_id, const LabeledDataset& train,
                             int threads = 1);

/// (logit - min) / (max - min) clamped to [0,1]; 0.5 when max == min.
double normalize_patch_logit(float logit, const Calibration& cal);

struct PatchedOutput {
  int prediction = 0;
  std::vector<double> output;  // weak softmax with the target entry replaced
  bool degenerate = false;     // calibration had max == min
};

/// Softmax over the weak logits, then overwrite the target class entry with
/// the normalized module logit; argmax ties go to the lowest index.
PatchedOutput combine_patch(std::span<const float> weak_logits, float module_logit, const Calibration& cal);

PatchedOutput patched_predict(const Network& weak, const Network& module, const Calibration& cal,
                              const Tensor& input);

struct PatchReport {
  int target_class = 0;
  int num_classes = 0;
  Calibration calibration;
  std::vector<ClassMetrics> weak;
  std::vector<ClassMetrics> patched;
  double weak_accuracy = 0.0;
  double patched_accuracy = 0.0;
  double weak_non_tc_accuracy = 0.0;
  double patched_non_tc_accuracy = 0.0;
  std::size_t non_tc_samples = 0;
  std::size_t non_tc_target_labels = 0;  // TC-labelled samples left in the non-TC subset; always 0
  std::int64_t module_kernels = 0;
  std::int64_t module_flops = 0;
  std::int64_t weak_kernels = 0;
  std::int64_t weak_flops = 0;
  std::size_t degenerate_outputs = 0;
  std::vector<std::string> notes;
};

/// Full per-class metrics for the weak and patched models on `test`, plus
/// accuracy on the subset with target-class samples removed.
PatchReport evaluate_patch(const Network& weak, const Network& module, const Calibration& cal,
                           const LabeledDataset& test, int target_class, int threads = 1);

std::string format_patch_csv(const PatchReport& r);
std::string format_patch_table(const PatchReport& r);

/// Per-class metrics of a single model, to help pick the target class.
std::string format_class_metrics_table(const std::vector<ClassMetrics>& metrics, const std::string& title);

}  // namespace cnnsplit
