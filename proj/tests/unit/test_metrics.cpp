#include <algorithm>
#include <numeric>

#include "doctest.h"
#include "test_util.hpp"
#include "wonderm/image.hpp"
#include "wonderm/metrics.hpp"
#include "wonderm/random.hpp"

using namespace wonderm;

TEST_CASE("confusion tallies (truth, prediction) pairs") {
  SUBCASE("perfect predictor") {
    std::vector<int> t{0, 1, 2, 3, 4, 5, 6, 0, 1, 2};
    auto cm = confusion(std::span<const int>(t), std::span<const int>(t));
    CHECK(cm.counts.trace() == 10);
    CHECK(cm.total() == 10);
    CHECK((cm.counts - CountMatrix(cm.counts.diagonal().asDiagonal())).cwiseAbs().sum() == 0);
    auto m = class_metrics(cm);
    CHECK(m.balanced_accuracy == 1.0);
    CHECK((m.tpr.array() == 1.0).all());
  }
  SUBCASE("MEL,NV vs NV,NV") {
    std::vector<ClassLabel> t{ClassLabel::MEL, ClassLabel::NV}, p{ClassLabel::NV, ClassLabel::NV};
    auto cm = confusion(std::span<const ClassLabel>(t), std::span<const ClassLabel>(p));
    CHECK(cm.counts(0, 1) == 1);
    CHECK(cm.counts(1, 1) == 1);
    CHECK(cm.total() == 2);
  }
  SUBCASE("empty") {
    auto cm = confusion(std::span<const int>(), std::span<const int>());
    CHECK(cm.total() == 0);
    CHECK_THROWS_AS(class_metrics(cm), PipelineError);
  }
  std::vector<int> a{0, 1}, b{0}, bad{0, 9};
  CHECK_THROWS_AS(confusion(std::span<const int>(a), std::span<const int>(b)), PipelineError);
  CHECK_THROWS_AS(confusion(std::span<const int>(a), std::span<const int>(bad)), PipelineError);
}

TEST_CASE("permuting pairs leaves the matrix unchanged") {
  Rng rng(5);
  std::vector<int> t(200), p(200);
  for (int i = 0; i < 200; ++i) {
    t[i] = static_cast<int>(rng.below(7));
    p[i] = static_cast<int>(rng.below(7));
  }
  auto cm = confusion(std::span<const int>(t), std::span<const int>(p));
  CHECK(cm.total() == 200);
  std::vector<std::size_t> order(200);
  std::iota(order.begin(), order.end(), 0);
  rng.shuffle(std::span<std::size_t>(order));
  std::vector<int> t2, p2;
  for (auto i : order) {
    t2.push_back(t[i]);
    p2.push_back(p[i]);
  }
  CHECK(confusion(std::span<const int>(t2), std::span<const int>(p2)) == cm);
}

TEST_CASE("normalize_rows") {
  CountMatrix c = CountMatrix::Zero(7, 7);
  c(0, 0) = 2;
  c(0, 1) = 2;
  c(3, 3) = 5;
  auto n = normalize_rows(ConfusionMatrix(c));
  CHECK(n(0, 0) == 0.5);
  CHECK(n(0, 1) == 0.5);
  CHECK(n(3, 3) == 1.0);
  CHECK(n.row(1).sum() == 0.0);
  CHECK(normalize_rows(n).isApprox(n, 0.0));
  CHECK(normalize_rows(ConfusionMatrix(CountMatrix::Zero(7, 7))).isZero());
  CountMatrix d = CountMatrix::Zero(7, 7);
  d.diagonal() << 3, 1, 0, 4, 1, 1, 2;
  Eigen::MatrixXd id = normalize_rows(ConfusionMatrix(d));
  for (int j = 0; j < 7; ++j) CHECK(id(j, j) == (j == 2 ? 0.0 : 1.0));

  Rng rng(2);
  for (int trial = 0; trial < 20; ++trial) {
    Eigen::MatrixXd m(5, 5);
    for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = rng.below(4) == 0 ? 0.0 : rng.uniform();
    m.row(trial % 5).setZero();
    Eigen::MatrixXd once = normalize_rows(m), twice = normalize_rows(once);
    CHECK((once - twice).cwiseAbs().maxCoeff() < 1e-15);
  }
}

TEST_CASE("class_metrics") {
  SUBCASE("two-class hand example") {
    CountMatrix c(2, 2);
    c << 3, 1, 2, 2;
    auto m = class_metrics(ConfusionMatrix(c));
    CHECK(m.tpr[0] == 0.75);
    CHECK(m.tpr[1] == 0.5);
    CHECK(m.balanced_accuracy == 0.625);
    CHECK(m.accuracy == 5.0 / 8.0);
  }
  SUBCASE("absent class excluded from the mean") {
    CountMatrix c = CountMatrix::Zero(3, 3);
    c(0, 0) = 1;
    c(2, 2) = 1;
    c(2, 0) = 1;
    auto m = class_metrics(ConfusionMatrix(c));
    CHECK(m.balanced_accuracy == doctest::Approx((1.0 + 0.5) / 2));
  }
  SUBCASE("equal class counts make balanced accuracy equal accuracy") {
    Rng rng(8);
    for (int trial = 0; trial < 20; ++trial) {
      CountMatrix c(7, 7);
      for (int r = 0; r < 7; ++r) {
        long left = 30;
        for (int k = 0; k < 6; ++k) {
          c(r, k) = static_cast<long>(rng.below(static_cast<std::uint64_t>(left + 1)));
          left -= c(r, k);
        }
        c(r, 6) = left;
      }
      auto m = class_metrics(ConfusionMatrix(c));
      CHECK(m.balanced_accuracy == doctest::Approx(m.accuracy).epsilon(1e-12));
      CHECK(m.balanced_accuracy >= 0.0);
      CHECK(m.balanced_accuracy <= 1.0);
    }
  }
}

TEST_CASE("confusion reports") {
  TempDir dir("metrics");
  CountMatrix c = CountMatrix::Zero(7, 7);
  c(0, 0) = 3;
  c(1, 0) = 1;
  c(1, 1) = 1;
  ConfusionMatrix cm(c);
  write_confusion_text(dir / "cm.txt", cm, "demo");
  auto text = slurp(dir / "cm.txt");
  CHECK(text.find("VASC") != std::string::npos);
  CHECK(text.find("balanced_accuracy 0.7500") != std::string::npos);
  write_heatmap(dir / "cm.png", cm, 10);
  Image img = read_image(dir / "cm.png");
  CHECK(img.rows() == 7 * 10 + 8 * 2);
  // cell (0,0) is fully saturated, cell (0,1) white
  CHECK(img(2 + 5, 2 + 5, 0) == 8);
  CHECK(img(2 + 5, 2 + 12 + 5, 0) == 255);
}
