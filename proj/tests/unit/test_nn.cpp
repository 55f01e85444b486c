// Finite-difference checks of every layer's backward pass, in double.
#include <functional>

#include "doctest.h"
#include "wonderm/nets.hpp"

using namespace wonderm;
using namespace wonderm::nn;
using T = wonderm::nn::Tensor<double>;

namespace {

T random_tensor(int n, int c, int h, int w, Rng& rng) {
  T t(n, c, h, w);
  for (Eigen::Index i = 0; i < t.data.size(); ++i) t.data[i] = rng.normal();
  return t;
}

// Loss is <probe, forward(x)>; compares analytic input and parameter
// gradients with central differences.
template <typename Fwd, typename Bwd>
void check_gradients(Fwd forward, Bwd backward, ParamList<double> params, T x, Rng& rng, double tol = 1e-5,
                     int max_param_checks = 40) {
  T y = forward(x);
  T probe = random_tensor(y.n, y.c, y.h, y.w, rng);
  zero_grad(params);
  T dx = backward(probe);
  auto loss = [&](const T& in) { return forward(in).data.dot(probe.data); };

  const double eps = 1e-6;
  REQUIRE(dx.same_shape(x));
  for (Eigen::Index i = 0; i < x.data.size(); i += std::max<Eigen::Index>(1, x.data.size() / 60)) {
    T xp = x, xm = x;
    xp.data[i] += eps;
    xm.data[i] -= eps;
    const double num = (loss(xp) - loss(xm)) / (2 * eps);
    CHECK(dx.data[i] == doctest::Approx(num).epsilon(tol).scale(1.0));
  }
  for (Parameter<double>* p : params) {
    if (!p->trainable) continue;
    const Eigen::Index step = std::max<Eigen::Index>(1, p->size() / max_param_checks);
    for (Eigen::Index i = 0; i < p->size(); i += step) {
      const double keep = p->value[i];
      p->value[i] = keep + eps;
      const double lp = loss(x);
      p->value[i] = keep - eps;
      const double lm = loss(x);
      p->value[i] = keep;
      const double num = (lp - lm) / (2 * eps);
      INFO(p->name << "[" << i << "]");
      CHECK(p->grad[i] == doctest::Approx(num).epsilon(tol).scale(1.0));
    }
  }
}

template <typename Layer>
void check_layer(Layer& layer, const T& x, Rng& rng, ParamList<double> params = {}) {
  check_gradients([&](const T& in) { return layer.forward(in, Mode::Train); },
                  [&](const T& g) { return layer.backward(g); }, params, x, rng);
}

}  // namespace

TEST_CASE("conv2d gradients for 3x3, strided and pointwise kernels") {
  Rng rng(1);
  for (auto [k, stride] : {std::pair{3, 1}, std::pair{3, 2}, std::pair{1, 1}}) {
    Conv2d<double> conv("c", 3, 4, k, stride, -1, true);
    ParamList<double> ps;
    conv.collect(ps);
    init_parameters(ps, 5);
    check_layer(conv, random_tensor(2, 3, 6, 6, rng), rng, ps);
  }
}

TEST_CASE("conv2d matches a direct convolution") {
  Rng rng(2);
  Conv2d<double> conv("c", 2, 3, 3, 1, 1, false);
  ParamList<double> ps;
  conv.collect(ps);
  init_parameters(ps, 9);
  T x = random_tensor(1, 2, 5, 4, rng);
  T y = conv.forward(x, Mode::Eval);
  const auto& w = ps[0]->value;
  for (int o = 0; o < 3; ++o)
    for (int yy = 0; yy < 5; ++yy)
      for (int xx = 0; xx < 4; ++xx) {
        double acc = 0;
        for (int c = 0; c < 2; ++c)
          for (int ky = 0; ky < 3; ++ky)
            for (int kx = 0; kx < 3; ++kx) {
              const int iy = yy + ky - 1, ix = xx + kx - 1;
              if (iy < 0 || iy >= 5 || ix < 0 || ix >= 4) continue;
              acc += w[((o * 2 + c) * 3 + ky) * 3 + kx] * x.at(0, c, iy, ix);
            }
        CHECK(y.at(0, o, yy, xx) == doctest::Approx(acc).epsilon(1e-12));
      }
}

TEST_CASE("batch norm gradients in training mode") {
  Rng rng(3);
  BatchNorm2d<double> bn("bn", 3);
  ParamList<double> ps;
  bn.collect(ps);
  ps[0]->value << 1.5, 0.7, -0.4;
  ps[1]->value << 0.1, -0.2, 0.3;
  check_layer(bn, random_tensor(3, 3, 2, 2, rng), rng, ps);
}

TEST_CASE("batch norm eval mode uses running statistics") {
  BatchNorm2d<double> bn("bn", 1);
  ParamList<double> ps;
  bn.collect(ps);
  ps[2]->value << 2.0;
  ps[3]->value << 4.0;
  T x(1, 1, 1, 2);
  x.data << 2.0, 6.0;
  T y = bn.forward(x, Mode::Eval);
  CHECK(y.data[0] == doctest::Approx(0.0));
  CHECK(y.data[1] == doctest::Approx(4.0 / std::sqrt(4.0 + 1e-5)));
}

TEST_CASE("batch norm calibration averages batch statistics") {
  BatchNorm2d<double> bn("bn", 1);
  ParamList<double> ps;
  bn.collect(ps);
  T a(1, 1, 1, 2), b(1, 1, 1, 2);
  a.data << 1.0, 3.0;   // mean 2, unbiased var 2
  b.data << 10.0, 20.0;  // mean 15, unbiased var 50
  bn.forward(b, Mode::Train);
  bn.forward(a, Mode::Calibrate);
  CHECK(ps[2]->value[0] == doctest::Approx(2.0));
  CHECK(ps[3]->value[0] == doctest::Approx(2.0));
  bn.forward(b, Mode::Calibrate);
  CHECK(ps[2]->value[0] == doctest::Approx(8.5));
  CHECK(ps[3]->value[0] == doctest::Approx(26.0));

  // calibration output matches training-mode normalization
  BatchNorm2d<double> ref("bn", 1);
  T yc = bn.forward(a, Mode::Calibrate), yt = ref.forward(a, Mode::Train);
  CHECK((yc.data - yt.data).cwiseAbs().maxCoeff() < 1e-12);

  // a training step restarts the average
  bn.forward(b, Mode::Train);
  bn.forward(a, Mode::Calibrate);
  CHECK(ps[2]->value[0] == doctest::Approx(2.0));
}

TEST_CASE("pooling, relu, upconv, gap and linear gradients") {
  Rng rng(4);
  SUBCASE("relu") {
    ReLU<double> l;
    check_layer(l, random_tensor(2, 2, 3, 3, rng), rng);
  }
  SUBCASE("maxpool") {
    MaxPool2<double> l;
    check_layer(l, random_tensor(2, 2, 4, 4, rng), rng);
  }
  SUBCASE("avgpool") {
    AvgPool2<double> l;
    check_layer(l, random_tensor(2, 2, 4, 6, rng), rng);
  }
  SUBCASE("upconv") {
    UpConv2<double> l("u", 3, 2);
    ParamList<double> ps;
    l.collect(ps);
    init_parameters(ps, 3);
    ps[1]->value << 0.3, -0.1;
    check_layer(l, random_tensor(2, 3, 3, 2, rng), rng, ps);
  }
  SUBCASE("gap") {
    GlobalAvgPool<double> l;
    check_layer(l, random_tensor(2, 3, 3, 3, rng), rng);
  }
  SUBCASE("linear") {
    Linear<double> l("fc", 6, 4);
    ParamList<double> ps;
    l.collect(ps);
    init_parameters(ps, 8);
    check_layer(l, random_tensor(3, 6, 1, 1, rng), rng, ps);
  }
}

TEST_CASE("dense block gradients and channel arithmetic") {
  Rng rng(5);
  DenseBlock<double> block("b", 4, 3, 2);
  CHECK(block.out_channels() == 4 + 3 * 2);
  ParamList<double> ps;
  block.collect(ps);
  init_parameters(ps, 1);
  check_layer(block, random_tensor(2, 4, 4, 4, rng), rng, ps);
}

TEST_CASE("loss gradients") {
  Rng rng(6);
  T logits = random_tensor(3, 1, 3, 3, rng);
  T target(3, 1, 3, 3);
  for (Eigen::Index i = 0; i < target.data.size(); ++i) target.data[i] = rng.uniform() < 0.4 ? 1.0 : 0.0;
  T cls_logits = random_tensor(4, 7, 1, 1, rng);
  const std::vector<int> labels{0, 3, 6, 3};

  using LossFn = std::function<LossResult<double>(const T&)>;
  for (const LossFn& f : {LossFn([&](const T& z) { return bce_with_logits(z, target); }),
                          LossFn([&](const T& z) { return dice_loss(z, target); }),
                          LossFn([&](const T& z) { return bce_dice(z, target); })}) {
    auto r = f(logits);
    for (Eigen::Index i = 0; i < logits.data.size(); ++i) {
      T p = logits, m = logits;
      p.data[i] += 1e-6;
      m.data[i] -= 1e-6;
      CHECK(r.grad.data[i] == doctest::Approx((f(p).value - f(m).value) / 2e-6).epsilon(1e-6).scale(1.0));
    }
  }
  auto r = cross_entropy(cls_logits, std::span<const int>(labels));
  for (Eigen::Index i = 0; i < cls_logits.data.size(); ++i) {
    T p = cls_logits, m = cls_logits;
    p.data[i] += 1e-6;
    m.data[i] -= 1e-6;
    const double num = (cross_entropy(p, std::span<const int>(labels)).value -
                        cross_entropy(m, std::span<const int>(labels)).value) / 2e-6;
    CHECK(r.grad.data[i] == doctest::Approx(num).epsilon(1e-6).scale(1.0));
  }
}

TEST_CASE("whole segmentation and classification models pass gradient checks") {
  Rng rng(7);
  EncoderSpec tiny{2, {1, 1}, 3, 8, 0.5};
  SUBCASE("seg") {
    nn::SegModel<double> m(tiny);
    init_parameters(m.parameters(), 11);
    m.set_input_grad(true);
    check_gradients([&](const T& in) { return m.forward(in, Mode::Train); },
                    [&](const T& g) { return m.backward(g); }, m.parameters(), random_tensor(2, 3, 8, 8, rng), rng,
                    1e-4, 6);
  }
  SUBCASE("cls") {
    nn::ClsModel<double> m(tiny);
    init_parameters(m.parameters(), 12);
    m.set_input_grad(true);
    check_gradients([&](const T& in) { return m.forward(in, Mode::Train); },
                    [&](const T& g) { return m.backward(g); }, m.parameters(), random_tensor(3, 3, 8, 8, rng), rng,
                    1e-4, 6);
  }
  SUBCASE("hair") {
    nn::HairNet<double> m(8, 2);
    init_parameters(m.parameters(), 13);
    m.set_input_grad(true);
    check_gradients([&](const T& in) { return m.forward(in, Mode::Train); },
                    [&](const T& g) { return m.backward(g); }, m.parameters(), random_tensor(3, 3, 8, 8, rng), rng,
                    1e-4, 6);
  }
}

TEST_CASE("concat and split are inverse") {
  Rng rng(8);
  T a = random_tensor(2, 3, 2, 2, rng), b = random_tensor(2, 2, 2, 2, rng);
  auto [a2, b2] = split_channels(concat_channels(a, b), 3);
  CHECK(a2.data == a.data);
  CHECK(b2.data == b.data);
}
