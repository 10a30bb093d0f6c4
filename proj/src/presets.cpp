#include "cnnsplit/presets.hpp"

#include "cnnsplit/error.hpp"

namespace cnnsplit {

ModelSpec desk_simcnn(int num_classes) {
  ModelSpec s;
  s.name = "desk-simcnn";
  s.num_classes = num_classes;
  s.input = Shape3{1, 12, 12};
  s.layers = {LayerDesc::conv(12, 3, 1, 1), LayerDesc::conv(12, 3, 1, 1), LayerDesc::maxpool(2, 2),
              LayerDesc::conv(16, 3, 1, 1), LayerDesc::conv(16, 3, 1, 1), LayerDesc::maxpool(2, 2),
              LayerDesc::flatten(),         LayerDesc::fc(32),            LayerDesc::fc(num_classes)};
  infer_shapes(s);
  return s;
}

ModelSpec desk_rescnn(int num_classes) {
  ModelSpec s;
  s.name = "desk-rescnn";
  s.num_classes = num_classes;
  s.input = Shape3{1, 12, 12};
  s.layers = {LayerDesc::conv(12, 3, 1, 1), LayerDesc::conv(12, 3, 1, 1), LayerDesc::conv(12, 3, 1, 1),
              LayerDesc::maxpool(2, 2),     LayerDesc::conv(16, 3, 1, 1), LayerDesc::conv(16, 3, 1, 1),
              LayerDesc::conv(16, 3, 1, 1), LayerDesc::maxpool(2, 2),     LayerDesc::flatten(),
              LayerDesc::fc(num_classes)};
  s.residuals = {{0, 2}, {3, 5}};
  infer_shapes(s);
  return s;
}

ModelSpec simcnn(int num_classes) {
  ModelSpec s;
  s.name = "simcnn";
  s.num_classes = num_classes;
  s.input = Shape3{3, 32, 32};
  const int plan[] = {64, 64, 0, 128, 128, 0, 256, 256, 256, 0, 512, 512, 512, 0, 512, 512, 512, 0};
  for (int c : plan) s.layers.push_back(c ? LayerDesc::conv(c, 3, 1, 1) : LayerDesc::maxpool(2, 2));
  s.layers.push_back(LayerDesc::flatten());
  s.layers.push_back(LayerDesc::fc(512));
  s.layers.push_back(LayerDesc::fc(512));
  s.layers.push_back(LayerDesc::fc(num_classes));
  infer_shapes(s);
  return s;
}

ModelSpec rescnn(int num_classes) {
  ModelSpec s;
  s.name = "rescnn";
  s.num_classes = num_classes;
  s.input = Shape3{3, 32, 32};
  const int plan[] = {64, 0, 128, 128, 128, 0, 256, 256, 256, 0, 512, 512, 512, 0, 512, 1024, 0};
  for (int c : plan) s.layers.push_back(c ? LayerDesc::conv(c, 3, 1, 1) : LayerDesc::maxpool(2, 2));
  s.layers.push_back(LayerDesc::flatten());
  s.layers.push_back(LayerDesc::fc(num_classes));
  s.residuals = {{1, 3}, {4, 6}, {7, 9}};
  infer_shapes(s);
  return s;
}

ModelSpec shallow_variant(const ModelSpec& spec) {
  ModelSpec s;
  s.name = spec.name + "-simple";
  s.num_classes = spec.num_classes;
  s.input = spec.input;
  int convs = 0;
  for (std::size_t i = 0; i < spec.layers.size(); ++i) {
    const LayerDesc& l = spec.layers[i];
    if (l.kind == LayerKind::flatten || l.kind == LayerKind::fc) break;
    if (convs == 2 && l.kind != LayerKind::maxpool) break;
    s.layers.push_back(l);
    if (l.kind == LayerKind::conv) ++convs;
    if (convs == 2 && l.kind == LayerKind::maxpool) break;
  }
  for (const ResidualPair& r : spec.residuals) {
    if (r.dest < convs) s.residuals.push_back(r);
  }
  s.layers.push_back(LayerDesc::flatten());
  s.layers.push_back(LayerDesc::fc(spec.num_classes));
  infer_shapes(s);
  return s;
}

ModelSpec preset_by_name(const std::string& name, int num_classes) {
  if (name == "desk-simcnn") return desk_simcnn(num_classes);
  if (name == "desk-rescnn") return desk_rescnn(num_classes);
  if (name == "simcnn") return simcnn(num_classes);
  if (name == "rescnn") return rescnn(num_classes);
  throw ConfigError("unknown preset '" + name + "' (desk-simcnn|desk-rescnn|simcnn|rescnn)");
}

}  // namespace cnnsplit
