#include "cnnsplit/importance.hpp"

#include <algorithm>

#include "cnnsplit/error.hpp"
#include "cnnsplit/parallel.hpp"

namespace cnnsplit {

LayerScores kernel_importance(const Network& net, const LabeledDataset& data, int class_id,
                              int sample_cap) {
  if (sample_cap <= 0) throw ConfigError("importance sample cap must be positive");
  auto idx = data.indices_of(class_id);
  if (idx.empty()) {
    throw ConfigError("no samples of class " + std::to_string(class_id) + " for importance");
  }
  if (idx.size() > static_cast<std::size_t>(sample_cap)) idx.resize(sample_cap);

  const auto& outs = net.shapes().conv_output;
  LayerScores sums(outs.size());
  for (std::size_t l = 0; l < outs.size(); ++l) sums[l].assign(outs[l].c, 0.0);

  std::vector<Tensor> maps;
  for (std::size_t i : idx) {
    maps.clear();
    net.forward(data.image(i), nullptr, &maps);
    for (std::size_t l = 0; l < maps.size(); ++l) {
      const Tensor& m = maps[l];
      const std::size_t plane = static_cast<std::size_t>(m.dim(1)) * m.dim(2);
      for (int ch = 0; ch < m.dim(0); ++ch) {
        double s = 0.0;
        const float* p = m.data() + ch * plane;
        for (std::size_t j = 0; j < plane; ++j) s += p[j];
        sums[l][ch] += s;
      }
    }
  }
  const double m = static_cast<double>(idx.size());
  for (auto& layer : sums) {
    for (double& v : layer) v /= m;
  }
  return sums;
}

ImportanceTable compute_importance(const Network& net, const LabeledDataset& data, int sample_cap,
                                   int threads) {
  ImportanceTable table;
  table.per_class.resize(net.num_classes());
  parallel_for(table.per_class.size(), threads, [&](std::size_t n) {
    table.per_class[n] = kernel_importance(net, data, static_cast<int>(n), sample_cap);
  });
  return table;
}

LayerScores class_agnostic(const ImportanceTable& table) {
  if (table.per_class.empty()) throw ConfigError("importance table has no classes");
  LayerScores mean = table.per_class.front();
  for (auto& layer : mean) std::fill(layer.begin(), layer.end(), 0.0);
  for (const auto& cls : table.per_class) {
    for (std::size_t l = 0; l < mean.size(); ++l) {
      for (std::size_t k = 0; k < mean[l].size(); ++k) mean[l][k] += cls[l][k];
    }
  }
  for (auto& layer : mean) {
    for (double& v : layer) v /= static_cast<double>(table.per_class.size());
  }
  return mean;
}

}  // namespace cnnsplit
