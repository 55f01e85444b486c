#include "doctest.h"
#include "test_util.hpp"
#include "wonderm/checkpoint.hpp"
#include "wonderm/preprocess.hpp"
#include "wonderm/trainer.hpp"

using namespace wonderm;

namespace {

Image random_image(int h, int w, Rng& rng) {
  Image img(h, w, 3);
  for (Eigen::Index i = 0; i < img.array().size(); ++i) img.data()[i] = static_cast<std::uint8_t>(rng.below(256));
  return img;
}

}  // namespace

TEST_CASE("pad_to_square replicates edges and centers the original") {
  SUBCASE("3x5 of distinct values") {
    Raster<int> r(3, 5, 1);
    for (int y = 0; y < 3; ++y)
      for (int x = 0; x < 5; ++x) r(y, x) = 10 * y + x;
    auto p = pad_to_square(r);
    REQUIRE(p.rows() == 5);
    REQUIRE(p.cols() == 5);
    // remainder 2 splits 1 / 1
    for (int x = 0; x < 5; ++x) {
      CHECK(p(0, x) == r(0, x));
      for (int y = 0; y < 3; ++y) CHECK(p(y + 1, x) == r(y, x));
      CHECK(p(4, x) == r(2, x));
    }
  }
  SUBCASE("odd remainder goes to the trailing side") {
    Raster<int> r(2, 5, 1);
    for (int x = 0; x < 5; ++x) {
      r(0, x) = 1;
      r(1, x) = 2;
    }
    auto p = pad_to_square(r);
    // 3 padding rows: 1 on top, 2 at the bottom
    std::vector<int> col;
    for (int y = 0; y < 5; ++y) col.push_back(p(y, 0));
    CHECK(col == std::vector<int>{1, 1, 2, 2, 2});
  }
  SUBCASE("tall input pads columns") {
    Raster<int> r(4, 1, 1);
    for (int y = 0; y < 4; ++y) r(y, 0) = y;
    auto p = pad_to_square(r);
    CHECK(p.cols() == 4);
    for (int y = 0; y < 4; ++y)
      for (int x = 0; x < 4; ++x) CHECK(p(y, x) == y);
  }
  SUBCASE("450x600 gives 600x600 with 75-row bands") {
    Rng rng(1);
    Image img = random_image(450, 600, rng);
    Image p = pad_to_square(img);
    CHECK(p.rows() == 600);
    CHECK(p.cols() == 600);
    for (int x = 0; x < 600; x += 37)
      for (int k = 0; k < 3; ++k) {
        CHECK(p(0, x, k) == img(0, x, k));
        CHECK(p(74, x, k) == img(0, x, k));
        CHECK(p(75, x, k) == img(0, x, k));
        CHECK(p(76, x, k) == img(1, x, k));
        CHECK(p(524, x, k) == img(449, x, k));
        CHECK(p(599, x, k) == img(449, x, k));
      }
    CHECK(resize(p, 448).rows() == 448);
  }
  SUBCASE("idempotent on squares") {
    Rng rng(2);
    Image sq = random_image(9, 9, rng);
    CHECK(pad_to_square(sq) == sq);
    CHECK(pad_to_square(pad_to_square(random_image(3, 8, rng))).rows() == 8);
  }
  CHECK_THROWS_AS(pad_to_square(Image()), PipelineError);
}

TEST_CASE("resize") {
  Rng rng(3);
  SUBCASE("same side is the identity") {
    Image img = random_image(17, 17, rng);
    CHECK(resize(img, 17) == img);
  }
  SUBCASE("constant field stays constant") {
    Image c(4, 4, 3, 77);
    Image r = resize(c, 2);
    CHECK(r.rows() == 2);
    CHECK((r.array() == 77).all());
    CHECK((resize(c, 9).array() == 77).all());
  }
  SUBCASE("600 -> 448 keeps the channel range") {
    Image img = random_image(600, 600, rng);
    Image r = resize(img, 448);
    CHECK(r.rows() == 448);
    CHECK(r.cols() == 448);
    CHECK(r.channels() == 3);
  }
  SUBCASE("2x downsample averages 2x2 blocks") {
    Raster<double> r(4, 4, 1);
    for (int y = 0; y < 4; ++y)
      for (int x = 0; x < 4; ++x) r(y, x) = y * 4 + x;
    auto d = resize(r, 2);
    CHECK(d(0, 0) == doctest::Approx((0 + 1 + 4 + 5) / 4.0));
    CHECK(d(1, 1) == doctest::Approx((10 + 11 + 14 + 15) / 4.0));
  }
  SUBCASE("linear ramps are reproduced when upsampling interior points") {
    Raster<double> r(4, 4, 1);
    for (int y = 0; y < 4; ++y)
      for (int x = 0; x < 4; ++x) r(y, x) = 2.0 * x;
    auto u = resize(r, 8);
    // destination column 3 maps to source x = (3.5)/2 - 0.5 = 1.25
    CHECK(u(4, 3) == doctest::Approx(2.5));
  }
  CHECK_THROWS_AS(resize(Image(3, 4, 3), 2), PipelineError);
  CHECK_THROWS_AS(resize(Image(3, 3, 3), 0), PipelineError);
}

TEST_CASE("resize_mask stays binary") {
  Mask m(10, 10, 1, 0);
  for (int y = 2; y < 8; ++y)
    for (int x = 2; x < 8; ++x) m(y, x) = 1;
  Mask r = resize_mask(m, 5);
  CHECK(((r.array() == 0) || (r.array() == 1)).all());
  CHECK(r(2, 2) == 1);
  CHECK(r(0, 0) == 0);
}

TEST_CASE("hair detection on structureless images") {
  SUBCASE("constant color") {
    Image c(40, 40, 3, 120);
    auto [img, hm] = remove_hair(c);
    CHECK(hm.coverage == 0.0);
    CHECK(img == c);
  }
  SUBCASE("zero blackhat response: a bright line on dark ground") {
    Image c(40, 40, 3, 20);
    for (int x = 0; x < 40; ++x)
      for (int k = 0; k < 3; ++k) c(20, x, k) = 250;
    CHECK((blackhat_response(c, 1) == 0.0).all());
    auto [img, hm] = remove_hair(c);
    CHECK(count_true(hm.mask) == 0);
    CHECK(img == c);
  }
}

TEST_CASE("hair mask coverage invariant and untouched outside the mask") {
  auto m = generate_synthetic({3, 64, 1.0, 5});
  for (const auto& r : m.records()) {
    const Image& src = *r.pixels;
    auto [img, hm] = remove_hair(src);
    CHECK(hm.coverage == doctest::Approx(count_true(hm.mask) / (64.0 * 64.0)).epsilon(1e-15));
    for (int y = 0; y < 64; ++y)
      for (int x = 0; x < 64; ++x)
        if (!hm.mask(y, x))
          for (int k = 0; k < 3; ++k) REQUIRE(img(y, x, k) == src(y, x, k));
  }
}

TEST_CASE("hair mask recovers the generator's strokes") {
  SUBCASE("strokes on plain skin") {
    Rng rng(9);
    Image skin(96, 96, 3);
    Mask truth(96, 96, 1, 0);
    for (int y = 0; y < 96; ++y)
      for (int x = 0; x < 96; ++x) {
        skin(y, x, 0) = static_cast<std::uint8_t>(225 + rng.below(6));
        skin(y, x, 1) = static_cast<std::uint8_t>(185 + rng.below(6));
        skin(y, x, 2) = static_cast<std::uint8_t>(160 + rng.below(6));
      }
    for (int x = 5; x < 90; ++x) {  // one diagonal and one horizontal hair
      const int ys[2] = {x / 2 + 10, 70};
      for (int y : ys) {
        truth(y, x) = 1;
        for (int k = 0; k < 3; ++k) skin(y, x, k) = 25;
      }
    }
    auto hm = detect_hair(skin);
    int hit = 0;
    for (int y = 0; y < 96; ++y)
      for (int x = 0; x < 96; ++x) hit += truth(y, x) && hm.mask(y, x);
    CHECK(hit >= 0.8 * count_true(truth));
    Image cleaned = inpaint(skin, hm.mask);
    for (int x = 5; x < 90; ++x) CHECK(cleaned(70, x, 0) > 150);
  }
  SUBCASE("pooled over a hairy synthetic corpus") {
    auto m = generate_synthetic({8, 64, 1.0, 21});
    long hit = 0, total = 0;
    for (const auto& r : m.records()) {
      auto hm = detect_hair(*r.pixels);
      for (int y = 0; y < 64; ++y)
        for (int x = 0; x < 64; ++x)
          if ((*r.hair_mask)(y, x)) {
            ++total;
            hit += hm.mask(y, x);
          }
    }
    CHECK(static_cast<double>(hit) / static_cast<double>(total) >= 0.8);
  }
}

TEST_CASE("inpainting fills from the border inward") {
  Image img(5, 5, 3, 100);
  Mask m(5, 5, 1, 0);
  for (int y = 1; y < 4; ++y)
    for (int x = 1; x < 4; ++x) {
      m(y, x) = 1;
      for (int k = 0; k < 3; ++k) img(y, x, k) = 0;
    }
  Image out = inpaint(img, m);
  CHECK((out.array() == 100).all());
  // fully masked: nothing known, nothing changes
  Mask all(5, 5, 1, 1);
  CHECK(inpaint(img, all) == img);
}

TEST_CASE("classify_hair") {
  auto data = generate_synthetic({12, 32, 0.5, 4});
  HairNet net = build_hair(32, 1);
  const Image& any = *data[0].pixels;
  CHECK_THROWS_AS(classify_hair(any, net), PipelineError);

  TrainConfig cfg = TrainConfig::hair();
  cfg.lr0 = 0.05;
  cfg.momentum = 0.9;
  cfg.epochs = 25;
  train_hair(net, data, cfg);
  REQUIRE(net.trained());
  int correct = 0;
  for (const auto& r : data.records()) {
    auto v = classify_hair(*r.pixels, net, 0.5, r.id);
    CHECK(v.hairy == (v.score >= 0.5));
    CHECK(v.image_id == r.id);
    CHECK(v.score >= 0.0);
    CHECK(v.score <= 1.0);
    correct += v.hairy == r.hairy;
  }
  CHECK(correct >= 0.9 * static_cast<double>(data.size()));
  CHECK(classify_hair(any, net, 0.0).hairy);
  // threshold sweep: hairy count never increases
  int prev = static_cast<int>(data.size()) + 1;
  for (double t = 0.0; t <= 1.0; t += 0.1) {
    int hairy = 0;
    for (const auto& r : data.records()) hairy += classify_hair(*r.pixels, net, t).hairy;
    CHECK(hairy <= prev);
    prev = hairy;
  }
  // input of a different side is fitted first
  CHECK_NOTHROW(classify_hair(fit_square(any, 48), net));
}

TEST_CASE("preprocess_manifest") {
  TempDir dir("pre");
  auto raw = materialize(generate_synthetic({2, 48, 0.5, 6}), dir / "raw");
  SUBCASE("resize only") {
    PreprocessOptions o;
    o.side = 32;
    auto res = preprocess_manifest(raw, dir / "out", o);
    REQUIRE(res.manifest.size() == raw.size());
    CHECK(res.verdicts.empty());
    for (std::size_t i = 0; i < raw.size(); ++i) {
      const auto& r = res.manifest[i];
      CHECK(r.id == raw[i].id);
      CHECK(r.label == raw[i].label);
      CHECK(r.stage == Stage::Resized);
      Image img = load_pixels(r);
      CHECK(img.rows() == 32);
      CHECK(img == fit_square(load_pixels(raw[i]), 32));
      CHECK(load_mask(r).rows() == 32);
    }
  }
  SUBCASE("forced removal") {
    PreprocessOptions o;
    o.side = 48;
    o.force_hair_removal = true;
    auto res = preprocess_manifest(raw, dir / "out", o);
    for (std::size_t i = 0; i < raw.size(); ++i) {
      CHECK(res.manifest[i].stage == Stage::HairRemoved);
      CHECK(load_pixels(res.manifest[i]) == remove_hair(load_pixels(raw[i])).image);
    }
  }
  SUBCASE("model-gated removal logs one verdict per image") {
    HairNet net = build_hair(32, 3);
    net.set_trained(true);
    save_hair(dir / "hair.ckpt", net);
    PreprocessOptions o;
    o.side = 48;
    o.hair_model = dir / "hair.ckpt";
    o.hair_threshold = 0.0;  // everything is hairy
    auto res = preprocess_manifest(raw, dir / "out", o);
    CHECK(res.verdicts.size() == raw.size());
    for (const auto& r : res.manifest.records()) CHECK(r.stage == Stage::HairRemoved);
    write_verdicts(dir / "verdicts.json", res.verdicts);
    CHECK(slurp(dir / "verdicts.json").find(raw[0].id) != std::string::npos);
  }
}
