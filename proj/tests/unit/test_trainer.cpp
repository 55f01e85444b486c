#include <cmath>

#include "doctest.h"
#include "test_util.hpp"
#include "wonderm/checkpoint.hpp"
#include "wonderm/trainer.hpp"

using namespace wonderm;

namespace {

const EncoderSpec kSmall{4, {1, 1}, 8, 32, 0.5};

DatasetManifest first(const DatasetManifest& m, std::size_t n) {
  std::vector<ImageRecord> r(m.records().begin(), m.records().begin() + static_cast<long>(std::min(n, m.size())));
  return DatasetManifest(m.kind(), m.seed(), std::move(r));
}

std::vector<Eigen::VectorXf> snapshot(const nn::ParamList<Scalar>& ps, bool trainable_only) {
  std::vector<Eigen::VectorXf> v;
  for (auto* p : ps)
    if (!trainable_only || p->trainable) v.push_back(p->value);
  return v;
}

double cls_batch_loss(ClsModel& m, const DatasetManifest& d) {
  std::vector<Image> imgs;
  for (const auto& r : d.records()) imgs.push_back(load_input(r, m.spec().input_side));
  auto y = label_indices(d);
  return nn::cross_entropy(m.forward(images_to_tensor(imgs), nn::Mode::Train), std::span<const int>(y)).value;
}

}  // namespace

TEST_CASE("learning-rate schedule") {
  TrainConfig c;
  CHECK(std::abs(lr_schedule(c, 0) - 0.001) <= 1e-15);
  CHECK(std::abs(lr_schedule(c, 10) - 0.0009) <= 1e-15);
  CHECK(std::abs(lr_schedule(c, 25) - 0.00081) <= 1e-15);
  for (int e = 0; e < 60; ++e) {
    CHECK(lr_schedule(c, e) == lr_schedule(c, (e / 10) * 10));
    if (e % 10 == 0 && e > 0) CHECK(lr_schedule(c, e) / lr_schedule(c, e - 1) == doctest::Approx(0.9).epsilon(1e-14));
  }
  TrainConfig flat;
  flat.decay = 1.0;
  for (int e : {0, 7, 10, 99, 1000}) CHECK(lr_schedule(flat, e) == 0.001);
  CHECK_THROWS_AS(lr_schedule(c, -1), PipelineError);
}

TEST_CASE("train config defaults, validation and serialization") {
  CHECK(TrainConfig::seg().epochs == 100);
  CHECK(TrainConfig::cls().epochs == 50);
  CHECK(TrainConfig::seg().loss == LossKind::BceDice);
  CHECK(TrainConfig::cls().momentum == 0.0);
  TrainConfig c = TrainConfig::cls();
  c.lr0 = 0.05;
  c.momentum = 0.9;
  c.seed = 77;
  CHECK(train_config_from_json(to_json(c), TrainConfig::seg()) == c);
  TrainConfig bad;
  bad.batch_size = 0;
  CHECK_THROWS_AS(bad.validate(), PipelineError);
  CHECK_THROWS_AS(parse_loss("hinge"), PipelineError);
}

TEST_CASE("zero epochs and zero learning rate leave parameters alone") {
  TempDir dir("zero");
  auto data = as_segmentation(first(generate_synthetic({2, 32, 0.0, 1}), 6));
  SegModel m = build_seg(kSmall, 3);
  auto before = snapshot(m.parameters(), false);
  TrainConfig c = TrainConfig::seg();
  c.epochs = 0;
  auto rec = train_seg(m, data, c, dir / "seg.ckpt");
  CHECK(rec.epochs.empty());
  SegModel loaded = load_seg(dir / "seg.ckpt");
  CHECK(snapshot(loaded.parameters(), false) == before);

  c.epochs = 2;
  c.lr0 = 0.0;
  train_seg(m, data, c);
  CHECK(snapshot(m.parameters(), true) == snapshot(build_seg(kSmall, 3).parameters(), true));
}

TEST_CASE("one small step decreases the loss on that example") {
  auto data = first(generate_synthetic({1, 32, 0.0, 2}), 1);
  for (std::uint64_t seed : {1u, 2u, 3u}) {
    ClsModel m = build_cls(kSmall, 7, seed);
    const double before = cls_batch_loss(m, data);
    TrainConfig c = TrainConfig::cls();
    c.epochs = 1;
    c.batch_size = 1;
    c.lr0 = 1e-3;
    train_cls(m, data, DatasetManifest(), c);
    CHECK(cls_batch_loss(m, data) <= before + 1e-7);
  }
}

TEST_CASE("directional derivative along the gradient is positive") {
  Rng rng(4);
  for (int trial = 0; trial < 3; ++trial) {
    nn::ClsModel<double> m(EncoderSpec{2, {1, 1}, 3, 8, 0.5});
    nn::init_parameters(m.parameters(), 20 + static_cast<std::uint64_t>(trial));
    nn::Tensor<double> x(4, 3, 8, 8);
    for (Eigen::Index i = 0; i < x.data.size(); ++i) x.data[i] = rng.normal();
    const std::vector<int> y{0, 3, 5, 6};
    auto loss = [&] { return nn::cross_entropy(m.forward(x, nn::Mode::Train), std::span<const int>(y)); };
    auto params = m.parameters();
    nn::zero_grad(params);
    m.backward(loss().grad);
    const double eps = 1e-6;
    double g2 = 0;
    for (auto* p : params)
      if (p->trainable) {
        g2 += p->grad.squaredNorm();
        p->value += eps * p->grad;
      }
    const double up = loss().value;
    for (auto* p : params)
      if (p->trainable) p->value -= 2 * eps * p->grad;
    const double down = loss().value;
    const double dd = (up - down) / (2 * eps);
    CHECK(dd > 0);
    CHECK(dd == doctest::Approx(g2).epsilon(1e-4));
  }
}

TEST_CASE("segmentation training reduces its loss and records every epoch") {
  auto data = as_segmentation(first(generate_synthetic({2, 32, 0.0, 5}), 8));
  SegModel m = build_seg(kSmall, 1);
  TrainConfig c = TrainConfig::seg();
  c.epochs = 12;
  c.lr0 = 0.05;
  c.momentum = 0.9;
  auto rec = train_seg(m, data, c);
  REQUIRE(rec.epochs.size() == 12);
  CHECK(rec.epochs.back().loss < rec.epochs.front().loss);
  CHECK_FALSE(rec.early_stopped);
  for (int e = 0; e < 12; ++e) CHECK(rec.epochs[e].lr == lr_schedule(c, e));
}

TEST_CASE("classification training is deterministic and overfits a tiny set") {
  TempDir dir("det");
  auto data = materialize(first(generate_synthetic({2, 32, 0.0, 6}), 14), dir / "data");
  TrainConfig c = TrainConfig::cls();
  c.epochs = 40;
  c.lr0 = 0.05;
  c.momentum = 0.9;
  c.seed = 9;
  ClsModel a = build_cls(kSmall, 7, 1), b = build_cls(kSmall, 7, 1);
  auto ra = train_cls(a, data, data, c, dir / "a.ckpt");
  train_cls(b, data, data, c, dir / "b.ckpt");
  CHECK(slurp(dir / "a.ckpt") == slurp(dir / "b.ckpt"));
  REQUIRE(ra.epochs.back().dev_metric);
  CHECK(*ra.epochs.back().dev_metric >= 0.95);
  CHECK(class_metrics(evaluate_cls(a, data)).accuracy >= 0.95);
  write_run_record(dir / "run.json", ra);
  CHECK(slurp(dir / "run.json").find("\"dev_metric\"") != std::string::npos);

  SUBCASE("best-dev selection restores the best epoch") {
    ClsModel m = build_cls(kSmall, 7, 1);
    TrainConfig cb = c;
    cb.best_dev = true;
    auto rec = train_cls(m, data, data, cb);
    double best = 0;
    for (const auto& e : rec.epochs) best = std::max(best, *e.dev_metric);
    CHECK(class_metrics(evaluate_cls(m, data)).balanced_accuracy == best);
  }
}

TEST_CASE("classifiers fine-tuned from one segmentation checkpoint share their start") {
  TempDir dir("shared");
  SegModel seg = build_seg(kSmall, 2);
  save_seg(dir / "seg.ckpt", seg);
  std::vector<ClsModel> models;
  for (int k = 0; k < 4; ++k) {
    SegModel s = load_seg(dir / "seg.ckpt");
    models.push_back(transplant_encoder(s, kSmall, 100 + static_cast<std::uint64_t>(k)));
  }
  for (int k = 1; k < 4; ++k) CHECK(snapshot(models[k].encoder_parameters(), false) == snapshot(models[0].encoder_parameters(), false));
}

TEST_CASE("hair training") {
  SUBCASE("separable strokes") {
    auto data = generate_synthetic({12, 32, 0.5, 8});
    HairNet h = build_hair(32, 1);
    TrainConfig c = TrainConfig::hair();
    c.lr0 = 0.05;
    c.momentum = 0.9;
    c.epochs = 25;
    train_hair(h, data, c);
    CHECK(h.trained());
    auto p = predict_hair(h, data);
    int ok = 0;
    for (Eigen::Index i = 0; i < p.size(); ++i) ok += (p[i] >= 0.5) == data[static_cast<std::size_t>(i)].hairy;
    CHECK(ok >= 0.9 * p.size());
  }
  SUBCASE("single-class data") {
    auto data = generate_synthetic({3, 32, 0.0, 8});
    HairNet h = build_hair(32, 1);
    TrainConfig c = TrainConfig::hair();
    c.lr0 = 0.05;
    c.epochs = 10;
    train_hair(h, data, c);
    CHECK((predict_hair(h, data).array() < 0.5).all());
  }
}

TEST_CASE("training errors") {
  auto data = first(generate_synthetic({1, 32, 0.0, 1}), 4);
  SUBCASE("divergence aborts") {
    ClsModel m = build_cls(kSmall, 7, 1);
    TrainConfig c = TrainConfig::cls();
    c.lr0 = 1e30;
    c.epochs = 5;
    c.batch_size = 2;
    CHECK_THROWS_WITH_AS(train_cls(m, data, DatasetManifest(), c), doctest::Contains("non-finite"), PipelineError);
  }
  SUBCASE("wrong loss for the model") {
    SegModel s = build_seg(kSmall, 1);
    CHECK_THROWS_AS(train_seg(s, as_segmentation(data), TrainConfig::cls()), PipelineError);
  }
  SUBCASE("segmentation needs masks") {
    ImageRecord r = data[0];
    r.mask.reset();
    SegModel s = build_seg(kSmall, 1);
    CHECK_THROWS_AS(train_seg(s, DatasetManifest(ManifestKind::Segmentation, 0, {r}), TrainConfig::seg()), PipelineError);
  }
}
