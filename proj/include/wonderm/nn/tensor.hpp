#pragma once

#include <cassert>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "wonderm/labels.hpp"

namespace wonderm::nn {

// Calibrate: normalize with batch statistics and replace the batch-norm
// running statistics by their plain average over the calibration batches
// seen since the last Train step. Nothing is cached for backward.
enum class Mode { Train, Eval, Calibrate };

template <typename S>
using Vec = Eigen::Matrix<S, Eigen::Dynamic, 1>;
template <typename S>
using RowMat = Eigen::Matrix<S, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <typename S>
using PlaneMap = Eigen::Map<RowMat<S>>;
template <typename S>
using ConstPlaneMap = Eigen::Map<const RowMat<S>>;

// Dense NCHW activation tensor.
template <typename S>
struct Tensor {
  int n = 0, c = 0, h = 0, w = 0;
  Vec<S> data;

  Tensor() = default;
  Tensor(int n_, int c_, int h_, int w_) : n(n_), c(c_), h(h_), w(w_), data(Vec<S>::Zero(static_cast<Eigen::Index>(n_) * c_ * h_ * w_)) {}

  static Tensor zeros_like(const Tensor& t) { return Tensor(t.n, t.c, t.h, t.w); }
  // Contents unspecified; for outputs that are written in full.
  static Tensor uninit(int n_, int c_, int h_, int w_) {
    Tensor t;
    t.n = n_, t.c = c_, t.h = h_, t.w = w_;
    t.data.resize(static_cast<Eigen::Index>(n_) * c_ * h_ * w_);
    return t;
  }

  bool empty() const { return data.size() == 0; }
  Eigen::Index plane() const { return static_cast<Eigen::Index>(h) * w; }
  Eigen::Index per_item() const { return c * plane(); }

  // Item i viewed as a (channels x pixels) row-major matrix.
  PlaneMap<S> item(int i) { return PlaneMap<S>(data.data() + i * per_item(), c, plane()); }
  ConstPlaneMap<S> item(int i) const { return ConstPlaneMap<S>(data.data() + i * per_item(), c, plane()); }

  S& at(int i, int ch, int y, int x) { return data[((static_cast<Eigen::Index>(i) * c + ch) * h + y) * w + x]; }
  S at(int i, int ch, int y, int x) const { return data[((static_cast<Eigen::Index>(i) * c + ch) * h + y) * w + x]; }

  bool same_shape(const Tensor& o) const { return n == o.n && c == o.c && h == o.h && w == o.w; }

  template <typename T>
  Tensor<T> cast() const {
    Tensor<T> out(n, c, h, w);
    out.data = data.template cast<T>();
    return out;
  }
};

// Channel-axis concatenation.
template <typename S>
Tensor<S> concat_channels(const Tensor<S>& a, const Tensor<S>& b) {
  assert(a.n == b.n && a.h == b.h && a.w == b.w);
  auto out = Tensor<S>::uninit(a.n, a.c + b.c, a.h, a.w);
  for (int i = 0; i < a.n; ++i) {
    out.item(i).topRows(a.c) = a.item(i);
    out.item(i).bottomRows(b.c) = b.item(i);
  }
  return out;
}

// Inverse of concat_channels for gradients: first `ca` channels, rest.
template <typename S>
std::pair<Tensor<S>, Tensor<S>> split_channels(const Tensor<S>& t, int ca) {
  auto a = Tensor<S>::uninit(t.n, ca, t.h, t.w);
  auto b = Tensor<S>::uninit(t.n, t.c - ca, t.h, t.w);
  for (int i = 0; i < t.n; ++i) {
    a.item(i) = t.item(i).topRows(ca);
    b.item(i) = t.item(i).bottomRows(t.c - ca);
  }
  return {std::move(a), std::move(b)};
}

template <typename S>
void accumulate(Tensor<S>& into, const Tensor<S>& g) {
  if (g.empty()) return;
  if (into.empty()) {
    into = g;
    return;
  }
  if (!into.same_shape(g)) throw PipelineError("gradient shape mismatch");
  into.data += g.data;
}

// Named trainable tensor or persistent buffer (batch-norm running stats).
template <typename S>
struct Parameter {
  std::string name;
  std::vector<int> shape;
  Vec<S> value;
  Vec<S> grad;
  bool trainable = true;
  int fan_in = 0;      // > 0: He-normal init with this fan-in
  double fill = 0.0;   // constant init otherwise

  Parameter() = default;
  Parameter(std::string n, std::vector<int> s, bool train = true, int fan = 0, double f = 0.0)
      : name(std::move(n)), shape(std::move(s)), trainable(train), fan_in(fan), fill(f) {
    Eigen::Index sz = 1;
    for (int d : shape) sz *= d;
    value = Vec<S>::Constant(sz, static_cast<S>(fill));
    grad = Vec<S>::Zero(sz);
  }
  Eigen::Index size() const { return value.size(); }
};

template <typename S>
using ParamList = std::vector<Parameter<S>*>;

template <typename S>
using ConstParamList = std::vector<const Parameter<S>*>;

}  // namespace wonderm::nn
