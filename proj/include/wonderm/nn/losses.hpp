#pragma once

#include <cmath>
#include <span>

#include "wonderm/nn/tensor.hpp"

namespace wonderm::nn {

template <typename S>
struct LossResult {
  S value = S(0);
  Tensor<S> grad;  // d(value)/d(logits)
};

template <typename S>
S sigmoid(S z) {
  return z >= S(0) ? S(1) / (S(1) + std::exp(-z)) : std::exp(z) / (S(1) + std::exp(z));
}

template <typename S>
Tensor<S> sigmoid(const Tensor<S>& logits) {
  Tensor<S> p = logits;
  for (Eigen::Index i = 0; i < p.data.size(); ++i) p.data[i] = sigmoid(p.data[i]);
  return p;
}

// Row-wise softmax over the channel axis of an N x J x 1 x 1 tensor.
template <typename S>
RowMat<S> softmax_rows(const Tensor<S>& logits) {
  RowMat<S> p(logits.n, logits.c);
  for (int i = 0; i < logits.n; ++i) {
    const auto z = logits.item(i).col(0);
    const S m = z.maxCoeff();
    S total = S(0);
    for (int j = 0; j < logits.c; ++j) total += (p(i, j) = std::exp(z[j] - m));
    p.row(i) /= total;
  }
  return p;
}

template <typename S>
LossResult<S> cross_entropy(const Tensor<S>& logits, std::span<const int> labels) {
  if (static_cast<int>(labels.size()) != logits.n) throw PipelineError("cross_entropy: label count mismatch");
  LossResult<S> r;
  r.grad = Tensor<S>::zeros_like(logits);
  if (logits.n == 0) return r;
  const RowMat<S> p = softmax_rows(logits);
  const S inv_n = S(1) / S(logits.n);
  for (int i = 0; i < logits.n; ++i) {
    const int y = labels[static_cast<std::size_t>(i)];
    r.value -= std::log(std::max(p(i, y), std::numeric_limits<S>::min()));
    for (int j = 0; j < logits.c; ++j) r.grad.at(i, j, 0, 0) = (p(i, j) - (j == y ? S(1) : S(0))) * inv_n;
  }
  r.value *= inv_n;
  return r;
}

// Mean binary cross-entropy on logits, elementwise against targets in [0, 1].
template <typename S>
LossResult<S> bce_with_logits(const Tensor<S>& logits, const Tensor<S>& targets) {
  if (!logits.same_shape(targets)) throw PipelineError("bce: target shape mismatch");
  LossResult<S> r;
  r.grad = Tensor<S>::zeros_like(logits);
  const Eigen::Index m = logits.data.size();
  if (m == 0) return r;
  for (Eigen::Index i = 0; i < m; ++i) {
    const S z = logits.data[i], t = targets.data[i];
    r.value += std::max(z, S(0)) - z * t + std::log1p(std::exp(-std::abs(z)));
    r.grad.data[i] = (sigmoid(z) - t) / S(m);
  }
  r.value /= S(m);
  return r;
}

// 1 - mean per-item soft dice, with +1 smoothing in numerator and denominator.
template <typename S>
LossResult<S> dice_loss(const Tensor<S>& logits, const Tensor<S>& targets) {
  if (!logits.same_shape(targets)) throw PipelineError("dice: target shape mismatch");
  LossResult<S> r;
  r.grad = Tensor<S>::zeros_like(logits);
  if (logits.n == 0) return r;
  const Tensor<S> p = sigmoid(logits);
  const Eigen::Index per = logits.per_item();
  S mean_dice = S(0);
  for (int i = 0; i < logits.n; ++i) {
    const auto pi = p.data.segment(i * per, per);
    const auto ti = targets.data.segment(i * per, per);
    const S inter = pi.dot(ti);
    const S denom = pi.sum() + ti.sum() + S(1);
    const S numer = S(2) * inter + S(1);
    mean_dice += numer / denom;
    for (Eigen::Index k = 0; k < per; ++k) {
      const S dd_dp = (S(2) * ti[k] * denom - numer) / (denom * denom);
      r.grad.data[i * per + k] = -dd_dp * pi[k] * (S(1) - pi[k]) / S(logits.n);
    }
  }
  r.value = S(1) - mean_dice / S(logits.n);
  return r;
}

template <typename S>
LossResult<S> bce_dice(const Tensor<S>& logits, const Tensor<S>& targets) {
  LossResult<S> a = bce_with_logits(logits, targets);
  LossResult<S> b = dice_loss(logits, targets);
  a.value += b.value;
  a.grad.data += b.grad.data;
  return a;
}

}  // namespace wonderm::nn
