#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <random>

#include "cnnsplit/dataset.hpp"
#include "cnnsplit/error.hpp"
#include "cnnsplit/layers.hpp"
#include "cnnsplit/patcher.hpp"
#include "cnnsplit/presets.hpp"
#include "oracle.hpp"

using namespace cnnsplit;

namespace {

LabeledDataset task(int classes, int per_class, std::uint64_t seed) {
  ShapeTaskConfig cfg;
  cfg.num_classes = classes;
  cfg.per_class = per_class;
  cfg.seed = seed;
  return make_shape_dataset(cfg);
}

}  // namespace

TEST_CASE("classification metrics from a hand-made confusion matrix") {
  // labels 0 0 0 1 1 2, predictions 0 0 1 1 1 0
  const std::vector<int> labels{0, 0, 0, 1, 1, 2};
  const std::vector<int> preds{0, 0, 1, 1, 1, 0};
  const ConfusionMatrix cm = confusion(labels, preds, 4);
  CHECK(cm.at(0, 0) == 2);
  CHECK(cm.at(0, 1) == 1);
  CHECK(cm.at(2, 0) == 1);
  const auto m = per_class_metrics(cm);
  CHECK(*m[0].precision == doctest::Approx(2.0 / 3.0));
  CHECK(*m[0].recall == doctest::Approx(2.0 / 3.0));
  CHECK(*m[1].precision == doctest::Approx(2.0 / 3.0));
  CHECK(*m[1].recall == 1.0);
  CHECK(*m[1].f1 == doctest::Approx(0.8));
  CHECK(*m[2].precision == 0.0);
  CHECK(*m[2].recall == 0.0);
  CHECK(*m[2].f1 == 0.0);
  CHECK(!m[3].precision);
  CHECK(!m[3].recall);
  CHECK(!m[3].f1);
  CHECK(m[3].support == 0);
  CHECK(harmonic_f1(0.0, 0.0) == 0.0);
  CHECK(harmonic_f1(0.5, 1.0) == doctest::Approx(2.0 / 3.0));
}

TEST_CASE("metrics agree with a recount on random predictions") {
  std::mt19937_64 rng(1);
  for (int trial = 0; trial < 30; ++trial) {
    const int n = 2 + trial % 5;
    std::vector<int> labels(60), preds(60);
    for (auto& v : labels) v = static_cast<int>(rng() % n);
    for (auto& v : preds) v = static_cast<int>(rng() % n);
    const auto m = per_class_metrics(confusion(labels, preds, n));
    for (int c = 0; c < n; ++c) {
      double tp = 0, fp = 0, fn = 0;
      for (int i = 0; i < 60; ++i) {
        tp += labels[i] == c && preds[i] == c;
        fp += labels[i] != c && preds[i] == c;
        fn += labels[i] == c && preds[i] != c;
      }
      if (tp + fn == 0) {
        CHECK(!m[c].f1);
        continue;
      }
      const double p = tp + fp == 0 ? 0.0 : tp / (tp + fp);
      const double r = tp / (tp + fn);
      CHECK(*m[c].precision == doctest::Approx(p));
      CHECK(*m[c].recall == doctest::Approx(r));
      CHECK(*m[c].f1 == doctest::Approx(p + r == 0 ? 0.0 : 2 * p * r / (p + r)));
      for (double v : {*m[c].precision, *m[c].recall, *m[c].f1}) CHECK((v >= 0.0 && v <= 1.0));
    }
  }
}

TEST_CASE("normalization and clamping") {
  const Calibration cal{1.0f, 3.0f, 0};
  CHECK(normalize_patch_logit(2.0f, cal) == 0.5);
  CHECK(normalize_patch_logit(0.0f, cal) == 0.0);
  CHECK(normalize_patch_logit(7.0f, cal) == 1.0);
  CHECK(normalize_patch_logit(5.0f, Calibration{2.0f, 2.0f, 0}) == 0.5);
}

TEST_CASE("replacement rule") {
  // Weak logits whose softmax is [0.2, 0.5, 0.3].
  const std::vector<float> weak{std::log(0.2f), std::log(0.5f), std::log(0.3f)};
  const Calibration cal{0.0f, 1.0f, 0};
  const PatchedOutput out = combine_patch(weak, 0.9f, cal);
  CHECK(out.output[0] == doctest::Approx(0.9));
  CHECK(out.output[1] == doctest::Approx(0.5));
  CHECK(out.output[2] == doctest::Approx(0.3));
  CHECK(out.prediction == 0);
  CHECK(!out.degenerate);
  CHECK(combine_patch(weak, 0.1f, cal).prediction == 1);
  CHECK(combine_patch(weak, 0.1f, Calibration{1.0f, 1.0f, 0}).degenerate);
  CHECK_THROWS_AS(combine_patch(weak, 0.1f, Calibration{0.0f, 1.0f, 3}), ShapeError);
}

TEST_CASE("a patch value equal to the weak softmax entry changes nothing") {
  std::mt19937_64 rng(2);
  std::normal_distribution<float> n(0.0f, 2.0f);
  for (int trial = 0; trial < 200; ++trial) {
    std::vector<float> weak(5);
    for (auto& v : weak) v = n(rng);
    const int tc = trial % 5;
    const auto p = softmax(weak);
    const Calibration cal{0.0f, 1.0f, tc};
    const PatchedOutput out = combine_patch(weak, static_cast<float>(p[tc]), cal);
    CHECK(out.prediction == argmax(std::span<const float>(weak)));
  }
}

TEST_CASE("calibration spans the module's own-class logits on class samples") {
  const ModelSpec spec = desk_simcnn(3);
  std::mt19937_64 rng(3);
  const Network module(spec, oracle::random_weights(spec, rng));
  const LabeledDataset train = task(3, 8, 1);
  const Calibration cal = calibrate_module(module, 2, train, 3);
  float lo = 1e30f, hi = -1e30f;
  for (std::size_t i = 0; i < train.count(); ++i) {
    if (train.labels[i] != 2) continue;
    const float v = module.forward(train.image(i))[2];
    lo = std::min(lo, v);
    hi = std::max(hi, v);
  }
  CHECK(cal.min == lo);
  CHECK(cal.max == hi);
  CHECK(cal.class_id == 2);

  const std::vector<std::size_t> one{2};
  const Calibration single = calibrate_module(module, 2, train.subset(one), 1);
  CHECK(single.min == single.max);
  const std::vector<int> keep{0, 1};
  CHECK_THROWS_AS(calibrate_module(module, 2, train.restricted_to(keep)), ConfigError);
}

TEST_CASE("evaluate_patch metrics match a direct recount") {
  const ModelSpec spec = desk_simcnn(3);
  std::mt19937_64 rng(4);
  const Network weak(spec, oracle::random_weights(spec, rng));
  const Network module(spec, oracle::random_weights(spec, rng));
  const LabeledDataset train = task(3, 10, 2);
  const LabeledDataset test = task(3, 10, 3);
  const Calibration cal = calibrate_module(module, 1, train);
  const PatchReport r = evaluate_patch(weak, module, cal, test, 1, 4);

  std::vector<int> wp, pp;
  for (std::size_t i = 0; i < test.count(); ++i) {
    const Tensor x = test.image(i);
    const Tensor w = weak.forward(x);
    wp.push_back(argmax(w.values()));
    pp.push_back(patched_predict(weak, module, cal, x).prediction);
  }
  const auto wm = per_class_metrics(confusion(test.labels, wp, 3));
  const auto pm = per_class_metrics(confusion(test.labels, pp, 3));
  std::size_t nt = 0, wn = 0, pn = 0;
  for (std::size_t i = 0; i < test.count(); ++i) {
    if (test.labels[i] == 1) continue;
    ++nt;
    wn += wp[i] == test.labels[i];
    pn += pp[i] == test.labels[i];
  }
  for (int c = 0; c < 3; ++c) {
    CHECK(r.weak[c].f1 == wm[c].f1);
    CHECK(r.patched[c].f1 == pm[c].f1);
    CHECK(r.patched[c].precision == pm[c].precision);
  }
  CHECK(r.non_tc_samples == nt);
  CHECK(r.non_tc_target_labels == 0);
  CHECK(r.weak_non_tc_accuracy == doctest::Approx(static_cast<double>(wn) / nt));
  CHECK(r.patched_non_tc_accuracy == doctest::Approx(static_cast<double>(pn) / nt));
  CHECK(r.module_kernels == 56);

  const std::string csv = format_patch_csv(r);
  CHECK(csv.starts_with("class,support,precision_weak,precision_patch,recall_weak,recall_patch,f1_weak,f1_patch\n"));
  CHECK(format_patch_table(r).find("1 (TC)") != std::string::npos);
  CHECK(format_patch_table(r).find("clamped") != std::string::npos);
}

TEST_CASE("patching a perfect pair yields perfect metrics") {
  // Hand-built 1-conv models: logits are functions of the mean pixel.
  ModelSpec spec;
  spec.name = "tiny";
  spec.num_classes = 2;
  spec.input = {1, 2, 2};
  spec.layers = {LayerDesc::conv(1, 2), LayerDesc::flatten(), LayerDesc::fc(2)};
  WeightStore ws;
  ws.set("conv0.kernels", Tensor({1, 1, 2, 2}, 0.25f));
  ws.set("conv0.bias", Tensor({1}, 0.0f));
  ws.set("fc0.weights", Tensor({2, 1}, {-1.0f, 1.0f}));
  ws.set("fc0.bias", Tensor({2}, {0.5f, -0.5f}));
  const Network net(spec, ws);

  LabeledDataset data;
  data.shape = spec.input;
  data.num_classes = 2;
  for (int i = 0; i < 10; ++i) {
    const float v = i % 2 ? 0.9f : 0.1f;
    for (int k = 0; k < 4; ++k) data.pixels.push_back(v);
    data.labels.push_back(i % 2);
  }
  const Calibration cal = calibrate_module(net, 1, data);
  const PatchReport r = evaluate_patch(net, net, cal, data, 1);
  for (int c = 0; c < 2; ++c) {
    CHECK(*r.patched[c].precision == 1.0);
    CHECK(*r.patched[c].recall == 1.0);
    CHECK(*r.patched[c].f1 == 1.0);
  }

  LabeledDataset only_tc = data;
  for (auto& l : only_tc.labels) l = 1;
  CHECK_THROWS_AS(evaluate_patch(net, net, cal, only_tc, 1), ConfigError);
  CHECK_THROWS_AS(evaluate_patch(net, net, cal, data, 0), ConfigError);
}

TEST_CASE("other module logits never influence the patched prediction") {
  const ModelSpec spec = desk_simcnn(3);
  std::mt19937_64 rng(5);
  const WeightStore mw = oracle::random_weights(spec, rng);
  const Network weak(spec, oracle::random_weights(spec, rng));
  const Network module(spec, mw);
  WeightStore perturbed = mw;
  Tensor fc = perturbed.get("fc1.weights");
  const int d = fc.dims()[1];
  std::normal_distribution<float> n(0.0f, 5.0f);
  for (int row : {0, 2})
    for (int j = 0; j < d; ++j) fc[static_cast<std::size_t>(row) * d + j] = n(rng);
  perturbed.set("fc1.weights", fc);
  const Network other(spec, perturbed);
  const Calibration cal{-1.0f, 2.0f, 1};
  for (int t = 0; t < 30; ++t) {
    const Tensor x = oracle::random_input(spec.input, rng);
    const PatchedOutput a = patched_predict(weak, module, cal, x);
    const PatchedOutput b = patched_predict(weak, other, cal, x);
    CHECK(a.prediction == b.prediction);
    CHECK(a.output == b.output);
  }
}
