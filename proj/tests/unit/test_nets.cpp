#include <cmath>

#include "doctest.h"
#include "test_util.hpp"
#include "wonderm/checkpoint.hpp"
#include "wonderm/nets.hpp"
#include "wonderm/trainer.hpp"

using namespace wonderm;

namespace {

Tensor random_input(int n, int side, std::uint64_t seed) {
  Rng rng(seed);
  Tensor t(n, 3, side, side);
  for (Eigen::Index i = 0; i < t.data.size(); ++i) t.data[i] = static_cast<float>(rng.uniform() * 2.0 - 1.0);
  return t;
}

bool same_values(const nn::ParamList<Scalar>& a, const nn::ParamList<Scalar>& b) {
  if (a.size() != b.size()) return false;
  for (std::size_t i = 0; i < a.size(); ++i)
    if (a[i]->name != b[i]->name || a[i]->value != b[i]->value) return false;
  return true;
}

const EncoderSpec kTiny{4, {1, 1}, 8, 16, 0.5};

}  // namespace

TEST_CASE("segmentation output shape and range") {
  SegModel m = build_seg(EncoderSpec::desk(), 3);
  Tensor y = m.predict(random_input(2, 64, 1));
  CHECK(y.n == 2);
  CHECK(y.c == 1);
  CHECK(y.h == 64);
  CHECK(y.w == 64);
  CHECK(y.data.minCoeff() > 0.0f);
  CHECK(y.data.maxCoeff() < 1.0f);

  Tensor z = m.predict(Tensor(1, 3, 64, 64));
  CHECK(z.data.minCoeff() > 0.0f);
  CHECK(z.data.maxCoeff() < 1.0f);
}

TEST_CASE("paper-scale segmentation keeps the 448 px resolution") {
  SegModel m = build_seg(EncoderSpec::paper_scale(), 1);
  CHECK(m.skip_count() == 5);
  Tensor y = m.predict(Tensor(1, 3, 448, 448));
  CHECK(y.h == 448);
  CHECK(y.w == 448);
  CHECK(y.c == 1);
  CHECK(y.data.minCoeff() > 0.0f);
  CHECK(y.data.maxCoeff() < 1.0f);
}

TEST_CASE("paper-scale classifier has about 16 million parameters") {
  ClsModel m = build_cls(EncoderSpec::paper_scale());
  const long n = nn::count_trainable(m.parameters());
  CHECK(std::abs(static_cast<double>(n) - 16e6) / 16e6 < 0.15);
  long sum = 0;
  for (const auto& row : layer_table(m))
    if (row.trainable) sum += row.count;
  CHECK(sum == n);
}

TEST_CASE("classifier rows are probability vectors") {
  ClsModel m = build_cls(EncoderSpec::desk(), 7, 5);
  for (std::uint64_t s = 0; s < 3; ++s) {
    auto p = m.predict(random_input(3, 64, s));
    REQUIRE(p.rows() == 3);
    REQUIRE(p.cols() == 7);
    CHECK(p.minCoeff() >= 0.0f);
    for (Eigen::Index i = 0; i < p.rows(); ++i) CHECK(std::abs(p.row(i).sum() - 1.0f) < 1e-6f);
  }
  auto empty = m.predict(Tensor(0, 3, 64, 64));
  CHECK(empty.rows() == 0);
  CHECK(empty.cols() == 7);
}

TEST_CASE("encoder topology") {
  for (const auto& spec : {EncoderSpec::desk(), EncoderSpec{6, {2, 3, 1, 2}, 12, 32, 0.5}, EncoderSpec::paper_scale()}) {
    SegModel m(spec);
    CHECK(m.skip_count() == static_cast<int>(spec.block_layers.size()) + 1);
    const auto& enc = m.encoder();
    const auto skips = enc.skip_channels();
    CHECK(skips.front() == spec.initial_channels);
    int in = spec.initial_channels;
    for (int b = 0; b < enc.num_blocks(); ++b) {
      CHECK(enc.block(b).in_channels() == in);
      CHECK(enc.block(b).out_channels() == in + spec.growth_rate * spec.block_layers[static_cast<std::size_t>(b)]);
      CHECK(skips[static_cast<std::size_t>(b) + 1] == enc.block(b).out_channels());
      in = static_cast<int>(std::floor(enc.block(b).out_channels() * spec.compression));
    }
  }
}

TEST_CASE("skip maps have the expected resolutions") {
  SegModel m = build_seg(EncoderSpec::desk());
  auto skips = m.encoder().forward(random_input(1, 64, 2), nn::Mode::Eval);
  REQUIRE(skips.size() == 4);
  CHECK(skips[0].h == 64);
  CHECK(skips[1].h == 32);
  CHECK(skips[2].h == 16);
  CHECK(skips[3].h == 8);
}

TEST_CASE("inference is deterministic") {
  SegModel s = build_seg(kTiny, 4);
  ClsModel c = build_cls(kTiny, 7, 4);
  HairNet h = build_hair(16, 4);
  Tensor x = random_input(2, 16, 3);
  CHECK(s.predict(x).data == s.predict(x).data);
  CHECK(c.predict(x) == c.predict(x));
  CHECK(h.predict(x) == h.predict(x));
}

TEST_CASE("hair net output is a probability") {
  HairNet h = build_hair(32, 8);
  auto p = h.predict(random_input(5, 32, 9));
  REQUIRE(p.size() == 5);
  CHECK(p.minCoeff() >= 0.0f);
  CHECK(p.maxCoeff() <= 1.0f);
  CHECK(h.predict(Tensor(0, 3, 32, 32)).size() == 0);
  CHECK_THROWS_AS(HairNet(30), PipelineError);
}

TEST_CASE("invalid encoder specs are rejected") {
  CHECK_THROWS_AS(build_seg({8, {2, 2, 2}, 16, 60, 0.5}), PipelineError);
  CHECK_THROWS_AS(build_cls({8, {2}, 16, 64, 0.5}), PipelineError);
  CHECK_THROWS_AS(build_seg({0, {2, 2}, 16, 64, 0.5}), PipelineError);
  CHECK_THROWS_AS(build_seg({8, {2, 2}, 16, 64, 0.0}), PipelineError);
  SegModel m = build_seg(EncoderSpec::desk());
  CHECK_THROWS_AS(m.forward(random_input(1, 60, 0), nn::Mode::Eval), PipelineError);
}

TEST_CASE("transplant copies the encoder and nothing else") {
  SegModel seg = build_seg(kTiny, 11);
  // perturb the batch-norm statistics so they are not at their defaults
  seg.forward(random_input(4, 16, 5), nn::Mode::Train);
  ClsModel cls = transplant_encoder(seg, kTiny, 12);
  CHECK(same_values(seg.encoder_parameters(), cls.encoder_parameters()));

  ClsModel fresh = build_cls(kTiny, 7, 12);
  CHECK(same_values(fresh.head_parameters(), cls.head_parameters()));
  CHECK_FALSE(same_values(fresh.encoder_parameters(), cls.encoder_parameters()));

  SUBCASE("from an untrained model") {
    SegModel raw = build_seg(kTiny, 13);
    ClsModel c = transplant_encoder(raw, kTiny);
    CHECK(same_values(raw.encoder_parameters(), c.encoder_parameters()));
  }

  SUBCASE("spec mismatch") {
    EncoderSpec other = kTiny;
    other.growth_rate = 6;
    CHECK_THROWS_AS(transplant_encoder(seg, other), PipelineError);
  }

  SUBCASE("one fine-tuning step moves the encoder") {
    auto params = cls.parameters();
    nn::zero_grad(params);
    Tensor logits = cls.forward(random_input(3, 16, 6), nn::Mode::Train);
    std::vector<int> y{0, 3, 5};
    cls.backward(nn::cross_entropy(logits, std::span<const int>(y)).grad);
    Sgd(0.0).step(params, 0.01);
    double diff = 0.0;
    auto a = seg.encoder_parameters(), b = cls.encoder_parameters();
    for (std::size_t i = 0; i < a.size(); ++i) diff += (a[i]->value - b[i]->value).norm();
    CHECK(diff > 0.0);
  }
}

TEST_CASE("checkpoints round trip") {
  TempDir dir("ckpt");
  SegModel seg = build_seg(kTiny, 21);
  seg.forward(random_input(2, 16, 1), nn::Mode::Train);
  save_seg(dir / "seg.ckpt", seg, {{"note", "x"}});
  SegModel seg2 = load_seg(dir / "seg.ckpt");
  CHECK(seg2.spec() == kTiny);
  CHECK(same_values(seg.parameters(), seg2.parameters()));
  CHECK(read_checkpoint_header(dir / "seg.ckpt").metadata["note"] == "x");

  ClsModel cls = build_cls(kTiny, 7, 22);
  save_cls(dir / "cls.ckpt", cls);
  ClsModel cls2 = load_cls(dir / "cls.ckpt");
  CHECK(same_values(cls.parameters(), cls2.parameters()));
  Tensor x = random_input(2, 16, 4);
  CHECK(cls.predict(x) == cls2.predict(x));

  HairNet h = build_hair(16, 23);
  h.set_trained(true);
  save_hair(dir / "hair.ckpt", h);
  HairNet h2 = load_hair(dir / "hair.ckpt");
  CHECK(h2.trained());
  CHECK(h2.input_side() == 16);
  CHECK(same_values(h.parameters(), h2.parameters()));

  SUBCASE("wrong kind") { CHECK_THROWS_AS(load_cls(dir / "seg.ckpt"), PipelineError); }
  SUBCASE("missing file") { CHECK_THROWS_AS(load_seg(dir / "nope.ckpt"), PipelineError); }
  SUBCASE("truncated payload") {
    std::string bytes = slurp(dir / "cls.ckpt");
    spit(dir / "cut.ckpt", bytes.substr(0, bytes.size() - 10));
    CHECK_THROWS_AS(load_cls(dir / "cut.ckpt"), PipelineError);
  }
  SUBCASE("foreign file") {
    spit(dir / "junk.ckpt", "hello\n");
    CHECK_THROWS_AS(load_seg(dir / "junk.ckpt"), PipelineError);
  }
}
