#pragma once

#include <string>

#include "cnnsplit/model_spec.hpp"

namespace cnnsplit {

/// Four-conv sequential net for 1x12x12 inputs (56 kernels).
ModelSpec desk_simcnn(int num_classes);
/// Six convs with two residual pairs for 1x12x12 inputs.
ModelSpec desk_rescnn(int num_classes);
/// VGG-16 style: 13 conv + 3 fc on 3x32x32, 4224 kernels.
ModelSpec simcnn(int num_classes = 10);
/// 12 conv + 1 fc with 3 residual pairs on 3x32x32, 4288 kernels.
ModelSpec rescnn(int num_classes = 10);

/// Shallow variant: the first two conv layers (with a pool that directly
/// follows the second), then flatten and one fc producing the logits.
ModelSpec shallow_variant(const ModelSpec& spec);

/// Looks up a preset by name: desk-simcnn, desk-rescnn, simcnn, rescnn.
ModelSpec preset_by_name(const std::string& name, int num_classes);

}  // namespace cnnsplit
