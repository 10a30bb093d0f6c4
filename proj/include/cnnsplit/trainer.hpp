#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "cnnsplit/dataset.hpp"
#include "cnnsplit/model_spec.hpp"
#include "cnnsplit/weight_store.hpp"

namespace cnnsplit {

struct TrainConfig {
  double learning_rate = 0.02;
  double momentum = 0.9;
  double weight_decay = 5e-4;
  int epochs = 30;
  int batch_size = 32;
  bool augment = true;  // random horizontal flips
  double dropout_rate = 0.25;  // applied to the input of every fc layer
  std::uint64_t seed = 1;

  void validate() const;
};

struct EpochStats {
  int epoch = 0;  // 1-based
  double loss = 0.0;
  double train_accuracy = 0.0;
  double val_accuracy = -1.0;  // -1 when no validation set was given
};

struct TrainResult {
  WeightStore weights;
  std::vector<EpochStats> history;
};

/// He-normal kernels and weights, zero biases.
WeightStore init_weights(const ModelSpec& spec, std::uint64_t seed);

/// Minibatch SGD with momentum on softmax cross-entropy. Single-threaded and
/// deterministic for a given seed. Throws TrainingError on a non-finite loss.
TrainResult sgd_train(const ModelSpec& spec, const WeightStore& initial, const LabeledDataset& train,
                      const TrainConfig& cfg, const LabeledDataset* val = nullptr);

std::string format_history_csv(const std::vector<EpochStats>& history);
std::vector<EpochStats> parse_history_csv(const std::string& text);

/// 1-based epoch with the best validation accuracy (earliest on ties), or
/// the last epoch when no validation column is present.
int best_epoch(const std::vector<EpochStats>& history);

}  // namespace cnnsplit
