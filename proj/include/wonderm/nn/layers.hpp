#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <limits>

#include "wonderm/nn/tensor.hpp"

namespace wonderm::nn {

namespace detail {

// Columns of the unrolled patch matrix are capped so large inputs (448 px)
// are processed in row bands instead of one huge im2col buffer.
inline constexpr Eigen::Index kMaxColsElements = Eigen::Index{1} << 22;

// Output columns [lo, hi) read in-bounds input for kernel offset kx.
inline void valid_span(int w, int wo, int stride, int pad, int kx, int& lo, int& hi) {
  lo = 0;
  while (lo < wo && lo * stride - pad + kx < 0) ++lo;
  hi = wo;
  while (hi > lo && (hi - 1) * stride - pad + kx >= w) --hi;
}

template <typename S>
void im2col(const S* in, int channels, int h, int w, int k, int stride, int pad, int wo, int oy0,
            int oy1, S* cols) {
  const Eigen::Index span = static_cast<Eigen::Index>(oy1 - oy0) * wo;
  for (int c = 0; c < channels; ++c)
    for (int ky = 0; ky < k; ++ky)
      for (int kx = 0; kx < k; ++kx) {
        S* row = cols + ((static_cast<Eigen::Index>(c) * k + ky) * k + kx) * span;
        const S* plane = in + static_cast<Eigen::Index>(c) * h * w;
        int lo, hi;
        valid_span(w, wo, stride, pad, kx, lo, hi);
        for (int oy = oy0; oy < oy1; ++oy) {
          const int iy = oy * stride - pad + ky;
          S* dst = row + static_cast<Eigen::Index>(oy - oy0) * wo;
          if (iy < 0 || iy >= h) {
            std::fill(dst, dst + wo, S(0));
            continue;
          }
          const S* src = plane + static_cast<Eigen::Index>(iy) * w - pad + kx;
          std::fill(dst, dst + lo, S(0));
          if (stride == 1) {
            std::copy(src + lo, src + hi, dst + lo);
          } else {
            for (int ox = lo; ox < hi; ++ox) dst[ox] = src[ox * stride];
          }
          std::fill(dst + hi, dst + wo, S(0));
        }
      }
}

template <typename S>
void col2im_add(const S* cols, int channels, int h, int w, int k, int stride, int pad, int wo, int oy0,
                int oy1, S* out) {
  const Eigen::Index span = static_cast<Eigen::Index>(oy1 - oy0) * wo;
  for (int c = 0; c < channels; ++c)
    for (int ky = 0; ky < k; ++ky)
      for (int kx = 0; kx < k; ++kx) {
        const S* row = cols + ((static_cast<Eigen::Index>(c) * k + ky) * k + kx) * span;
        S* plane = out + static_cast<Eigen::Index>(c) * h * w;
        int lo, hi;
        valid_span(w, wo, stride, pad, kx, lo, hi);
        for (int oy = oy0; oy < oy1; ++oy) {
          const int iy = oy * stride - pad + ky;
          if (iy < 0 || iy >= h) continue;
          const S* src = row + static_cast<Eigen::Index>(oy - oy0) * wo;
          S* dst = plane + static_cast<Eigen::Index>(iy) * w - pad + kx;
          if (stride == 1) {
            for (int ox = lo; ox < hi; ++ox) dst[ox] += src[ox];
          } else {
            for (int ox = lo; ox < hi; ++ox) dst[ox * stride] += src[ox];
          }
        }
      }
}

}  // namespace detail

template <typename S>
class Conv2d {
 public:
  Conv2d() = default;
  Conv2d(const std::string& name, int in, int out, int kernel, int stride = 1, int pad = -1, bool bias = false)
      : in_(in), out_(out), k_(kernel), stride_(stride), pad_(pad < 0 ? kernel / 2 : pad),
        weight_(name + ".weight", {out, in, kernel, kernel}, true, in * kernel * kernel) {
    if (bias) bias_ = Parameter<S>(name + ".bias", {out});
  }

  int in_channels() const { return in_; }
  int out_channels() const { return out_; }
  int kernel() const { return k_; }
  // First layers skip the input gradient; backward then returns an empty tensor.
  void set_input_grad(bool on) { input_grad_ = on; }

  Tensor<S> forward(const Tensor<S>& x, Mode mode) {
    check_input(x);
    const int ho = out_size(x.h), wo = out_size(x.w);
    auto y = Tensor<S>::uninit(x.n, out_, ho, wo);
    const ConstPlaneMap<S> wmat(weight_.value.data(), out_, patch());
    cached_cols_.clear();
    if (pointwise()) {
      for (int i = 0; i < x.n; ++i) y.item(i).noalias() = wmat * x.item(i);
    } else {
      const int band = band_rows(wo, ho);
      // Unrolled patches are kept for backward when one band covers the
      // whole output and the batch total stays modest.
      const bool keep = mode == Mode::Train && band == ho &&
                        static_cast<Eigen::Index>(patch()) * ho * wo * x.n <= kMaxCachedElements;
      RowMat<S> cols;
      for (int i = 0; i < x.n; ++i)
        for (int oy0 = 0; oy0 < ho; oy0 += band) {
          const int oy1 = std::min(ho, oy0 + band);
          const Eigen::Index span = static_cast<Eigen::Index>(oy1 - oy0) * wo;
          cols.resize(patch(), span);
          detail::im2col(x.item(i).data(), in_, x.h, x.w, k_, stride_, pad_, wo, oy0, oy1, cols.data());
          y.item(i).middleCols(static_cast<Eigen::Index>(oy0) * wo, span).noalias() = wmat * cols;
          if (keep) cached_cols_.push_back(cols);
        }
    }
    if (bias_.size())
      for (int i = 0; i < x.n; ++i) y.item(i).colwise() += bias_.value;
    if (mode == Mode::Train) input_ = x;
    return y;
  }

  Tensor<S> backward(const Tensor<S>& dy) {
    const Tensor<S>& x = input_;
    const ConstPlaneMap<S> wmat(weight_.value.data(), out_, patch());
    PlaneMap<S> dw(weight_.grad.data(), out_, patch());
    if (bias_.size())
      for (int i = 0; i < dy.n; ++i) bias_.grad += dy.item(i).rowwise().sum();
    if (pointwise()) {
      auto dx = Tensor<S>::uninit(x.n, x.c, x.h, x.w);
      for (int i = 0; i < x.n; ++i) {
        dw.noalias() += dy.item(i) * x.item(i).transpose();
        dx.item(i).noalias() = wmat.transpose() * dy.item(i);
      }
      return dx;
    }
    Tensor<S> dx = input_grad_ ? Tensor<S>::zeros_like(x) : Tensor<S>();
    const int ho = dy.h, wo = dy.w;
    const int band = band_rows(wo, ho);
    const bool cached = static_cast<int>(cached_cols_.size()) == x.n && band == ho;
    RowMat<S> cols, dcols;
    for (int i = 0; i < x.n; ++i)
      for (int oy0 = 0; oy0 < ho; oy0 += band) {
        const int oy1 = std::min(ho, oy0 + band);
        const Eigen::Index span = static_cast<Eigen::Index>(oy1 - oy0) * wo;
        if (!cached) {
          cols.resize(patch(), span);
          detail::im2col(x.item(i).data(), in_, x.h, x.w, k_, stride_, pad_, wo, oy0, oy1, cols.data());
        }
        const RowMat<S>& c = cached ? cached_cols_[static_cast<std::size_t>(i)] : cols;
        const auto g = dy.item(i).middleCols(static_cast<Eigen::Index>(oy0) * wo, span);
        dw.noalias() += g * c.transpose();
        if (!input_grad_) continue;
        dcols.noalias() = wmat.transpose() * g;
        detail::col2im_add(dcols.data(), in_, x.h, x.w, k_, stride_, pad_, wo, oy0, oy1, dx.item(i).data());
      }
    cached_cols_.clear();
    return dx;
  }

  void collect(ParamList<S>& out) {
    out.push_back(&weight_);
    if (bias_.size()) out.push_back(&bias_);
  }

 private:
  int patch() const { return in_ * k_ * k_; }
  bool pointwise() const { return k_ == 1 && stride_ == 1 && pad_ == 0; }
  int out_size(int n) const { return (n + 2 * pad_ - k_) / stride_ + 1; }
  int band_rows(int wo, int ho) const {
    const Eigen::Index per_row = static_cast<Eigen::Index>(patch()) * wo;
    return static_cast<int>(std::clamp<Eigen::Index>(detail::kMaxColsElements / std::max<Eigen::Index>(per_row, 1), 1, ho));
  }
  void check_input(const Tensor<S>& x) const {
    if (x.c != in_)
      throw PipelineError(weight_.name + ": expected " + std::to_string(in_) + " input channels, got " +
                          std::to_string(x.c));
  }

  int in_ = 0, out_ = 0, k_ = 1, stride_ = 1, pad_ = 0;
  bool input_grad_ = true;
  static constexpr Eigen::Index kMaxCachedElements = Eigen::Index{1} << 24;

  Parameter<S> weight_;
  Parameter<S> bias_;
  Tensor<S> input_;
  std::vector<RowMat<S>> cached_cols_;
};

template <typename S>
class BatchNorm2d {
 public:
  BatchNorm2d() = default;
  BatchNorm2d(const std::string& name, int channels, S momentum = S(0.1), S eps = S(1e-5))
      : channels_(channels), momentum_(momentum), eps_(eps),
        gamma_(name + ".gamma", {channels}, true, 0, 1.0),
        beta_(name + ".beta", {channels}),
        running_mean_(name + ".running_mean", {channels}, false),
        running_var_(name + ".running_var", {channels}, false, 0, 1.0) {}

  Tensor<S> forward(const Tensor<S>& x, Mode mode) {
    if (x.c != channels_) throw PipelineError(gamma_.name + ": channel mismatch");
    auto y = Tensor<S>::uninit(x.n, x.c, x.h, x.w);
    const Eigen::Index count = static_cast<Eigen::Index>(x.n) * x.plane();
    Vec<S> mean, inv_std;
    if (mode != Mode::Eval) {
      mean = Vec<S>::Zero(channels_);
      for (int i = 0; i < x.n; ++i) mean += x.item(i).rowwise().sum();
      mean /= S(count);
      Vec<S> var = Vec<S>::Zero(channels_);
      for (int i = 0; i < x.n; ++i) var += (x.item(i).colwise() - mean).array().square().matrix().rowwise().sum();
      var /= S(count);
      inv_std = (var.array() + eps_).rsqrt().matrix();
      const S unbias = count > 1 ? S(count) / S(count - 1) : S(1);
      const S m = mode == Mode::Train ? momentum_ : S(1) / S(++calibrated_);
      if (mode == Mode::Train) calibrated_ = 0;
      running_mean_.value = (S(1) - m) * running_mean_.value + m * mean;
      running_var_.value = (S(1) - m) * running_var_.value + m * unbias * var;
    } else {
      mean = running_mean_.value;
      inv_std = (running_var_.value.array() + eps_).rsqrt().matrix();
    }
    auto xhat = Tensor<S>::uninit(x.n, x.c, x.h, x.w);
    for (int i = 0; i < x.n; ++i) {
      xhat.item(i) = inv_std.asDiagonal() * (x.item(i).colwise() - mean);
      y.item(i) = gamma_.value.asDiagonal() * xhat.item(i);
      y.item(i).colwise() += beta_.value;
    }
    if (mode == Mode::Train) {
      xhat_ = std::move(xhat);
      inv_std_ = std::move(inv_std);
    }
    return y;
  }

  Tensor<S> backward(const Tensor<S>& dy) {
    const Eigen::Index count = static_cast<Eigen::Index>(dy.n) * dy.plane();
    Vec<S> sum_dy = Vec<S>::Zero(channels_), sum_dy_xhat = Vec<S>::Zero(channels_);
    for (int i = 0; i < dy.n; ++i) {
      sum_dy += dy.item(i).rowwise().sum();
      sum_dy_xhat += dy.item(i).cwiseProduct(xhat_.item(i)).rowwise().sum();
    }
    gamma_.grad += sum_dy_xhat;
    beta_.grad += sum_dy;
    auto dx = Tensor<S>::uninit(dy.n, dy.c, dy.h, dy.w);
    const Vec<S> scale = (gamma_.value.array() * inv_std_.array() / S(count)).matrix();
    for (int i = 0; i < dy.n; ++i) {
      RowMat<S> t = S(count) * dy.item(i);
      t.colwise() -= sum_dy;
      t -= sum_dy_xhat.asDiagonal() * xhat_.item(i);
      dx.item(i) = scale.asDiagonal() * t;
    }
    return dx;
  }

  void collect(ParamList<S>& out) {
    out.push_back(&gamma_);
    out.push_back(&beta_);
    out.push_back(&running_mean_);
    out.push_back(&running_var_);
  }

 private:
  int channels_ = 0;
  S momentum_ = S(0.1), eps_ = S(1e-5);
  long calibrated_ = 0;
  Parameter<S> gamma_, beta_, running_mean_, running_var_;
  Tensor<S> xhat_;
  Vec<S> inv_std_;
};

template <typename S>
class ReLU {
 public:
  Tensor<S> forward(const Tensor<S>& x, Mode mode) {
    Tensor<S> y = x;
    y.data = y.data.cwiseMax(S(0));
    if (mode == Mode::Train) input_ = x;
    return y;
  }
  Tensor<S> backward(const Tensor<S>& dy) {
    Tensor<S> dx = dy;
    dx.data = (input_.data.array() > S(0)).select(dy.data, S(0));
    return dx;
  }

 private:
  Tensor<S> input_;
};

// 2x2 max pooling, stride 2. Ties resolve to the first element in scan order.
template <typename S>
class MaxPool2 {
 public:
  Tensor<S> forward(const Tensor<S>& x, Mode mode) {
    if (x.h % 2 || x.w % 2) throw PipelineError("max pool needs even spatial size");
    auto y = Tensor<S>::uninit(x.n, x.c, x.h / 2, x.w / 2);
    std::vector<Eigen::Index> arg(static_cast<std::size_t>(y.data.size()));
    Eigen::Index o = 0;
    for (int i = 0; i < x.n; ++i)
      for (int c = 0; c < x.c; ++c)
        for (int oy = 0; oy < y.h; ++oy)
          for (int ox = 0; ox < y.w; ++ox, ++o) {
            Eigen::Index best = ((static_cast<Eigen::Index>(i) * x.c + c) * x.h + 2 * oy) * x.w + 2 * ox;
            for (int dy = 0; dy < 2; ++dy)
              for (int dx = 0; dx < 2; ++dx) {
                const Eigen::Index idx = ((static_cast<Eigen::Index>(i) * x.c + c) * x.h + 2 * oy + dy) * x.w + 2 * ox + dx;
                if (x.data[idx] > x.data[best]) best = idx;
              }
            y.data[o] = x.data[best];
            arg[static_cast<std::size_t>(o)] = best;
          }
    if (mode == Mode::Train) {
      argmax_ = std::move(arg);
      in_shape_ = {x.n, x.c, x.h, x.w};
    }
    return y;
  }
  Tensor<S> backward(const Tensor<S>& dy) {
    Tensor<S> dx(in_shape_[0], in_shape_[1], in_shape_[2], in_shape_[3]);
    for (Eigen::Index o = 0; o < dy.data.size(); ++o) dx.data[argmax_[static_cast<std::size_t>(o)]] += dy.data[o];
    return dx;
  }

 private:
  std::vector<Eigen::Index> argmax_;
  std::array<int, 4> in_shape_{};
};

template <typename S>
class AvgPool2 {
 public:
  Tensor<S> forward(const Tensor<S>& x, Mode) {
    if (x.h % 2 || x.w % 2) throw PipelineError("avg pool needs even spatial size");
    auto y = Tensor<S>::uninit(x.n, x.c, x.h / 2, x.w / 2);
    for (int i = 0; i < x.n; ++i)
      for (int c = 0; c < x.c; ++c)
        for (int oy = 0; oy < y.h; ++oy)
          for (int ox = 0; ox < y.w; ++ox)
            y.at(i, c, oy, ox) = S(0.25) * (x.at(i, c, 2 * oy, 2 * ox) + x.at(i, c, 2 * oy, 2 * ox + 1) +
                                             x.at(i, c, 2 * oy + 1, 2 * ox) + x.at(i, c, 2 * oy + 1, 2 * ox + 1));
    return y;
  }
  Tensor<S> backward(const Tensor<S>& dy) {
    Tensor<S> dx(dy.n, dy.c, dy.h * 2, dy.w * 2);
    for (int i = 0; i < dy.n; ++i)
      for (int c = 0; c < dy.c; ++c)
        for (int y = 0; y < dx.h; ++y)
          for (int x = 0; x < dx.w; ++x) dx.at(i, c, y, x) = S(0.25) * dy.at(i, c, y / 2, x / 2);
    return dx;
  }
};

// Transposed convolution with kernel 2, stride 2: each input pixel spreads
// into a 2x2 output block.
template <typename S>
class UpConv2 {
 public:
  UpConv2() = default;
  UpConv2(const std::string& name, int in, int out)
      : in_(in), out_(out), weight_(name + ".weight", {in, out, 2, 2}, true, in), bias_(name + ".bias", {out}) {}

  int out_channels() const { return out_; }

  Tensor<S> forward(const Tensor<S>& x, Mode mode) {
    if (x.c != in_) throw PipelineError(weight_.name + ": channel mismatch");
    auto y = Tensor<S>::uninit(x.n, out_, 2 * x.h, 2 * x.w);
    const ConstPlaneMap<S> wmat(weight_.value.data(), in_, out_ * 4);
    RowMat<S> z;
    for (int i = 0; i < x.n; ++i) {
      z.noalias() = wmat.transpose() * x.item(i);
      for (int co = 0; co < out_; ++co)
        for (int q = 0; q < 4; ++q) {
          const int dy = q / 2, dx = q % 2;
          for (int yy = 0; yy < x.h; ++yy)
            for (int xx = 0; xx < x.w; ++xx)
              y.at(i, co, 2 * yy + dy, 2 * xx + dx) = z(co * 4 + q, static_cast<Eigen::Index>(yy) * x.w + xx) + bias_.value[co];
        }
    }
    if (mode == Mode::Train) input_ = x;
    return y;
  }

  Tensor<S> backward(const Tensor<S>& dy) {
    const Tensor<S>& x = input_;
    Tensor<S> dx = Tensor<S>::zeros_like(x);
    const ConstPlaneMap<S> wmat(weight_.value.data(), in_, out_ * 4);
    PlaneMap<S> dw(weight_.grad.data(), in_, out_ * 4);
    RowMat<S> dz(out_ * 4, x.plane());
    for (int i = 0; i < x.n; ++i) {
      for (int co = 0; co < out_; ++co)
        for (int q = 0; q < 4; ++q) {
          const int oy = q / 2, ox = q % 2;
          for (int yy = 0; yy < x.h; ++yy)
            for (int xx = 0; xx < x.w; ++xx)
              dz(co * 4 + q, static_cast<Eigen::Index>(yy) * x.w + xx) = dy.at(i, co, 2 * yy + oy, 2 * xx + ox);
        }
      bias_.grad += dy.item(i).rowwise().sum();
      dw.noalias() += x.item(i) * dz.transpose();
      dx.item(i).noalias() = wmat * dz;
    }
    return dx;
  }

  void collect(ParamList<S>& out) {
    out.push_back(&weight_);
    out.push_back(&bias_);
  }

 private:
  int in_ = 0, out_ = 0;
  Parameter<S> weight_, bias_;
  Tensor<S> input_;
};

template <typename S>
class GlobalAvgPool {
 public:
  Tensor<S> forward(const Tensor<S>& x, Mode mode) {
    Tensor<S> y(x.n, x.c, 1, 1);
    for (int i = 0; i < x.n; ++i) y.item(i) = x.item(i).rowwise().mean();
    if (mode == Mode::Train) {
      h_ = x.h;
      w_ = x.w;
    }
    return y;
  }
  Tensor<S> backward(const Tensor<S>& dy) {
    Tensor<S> dx(dy.n, dy.c, h_, w_);
    const S scale = S(1) / S(h_ * w_);
    for (int i = 0; i < dy.n; ++i) dx.item(i).colwise() = dy.item(i).col(0) * scale;
    return dx;
  }

 private:
  int h_ = 0, w_ = 0;
};

// Fully connected layer over N x C x 1 x 1 tensors.
template <typename S>
class Linear {
 public:
  Linear() = default;
  Linear(const std::string& name, int in, int out)
      : in_(in), out_(out), weight_(name + ".weight", {out, in}, true, in), bias_(name + ".bias", {out}) {}

  Tensor<S> forward(const Tensor<S>& x, Mode mode) {
    if (x.c * x.h * x.w != in_) throw PipelineError(weight_.name + ": input size mismatch");
    Tensor<S> y(x.n, out_, 1, 1);
    const ConstPlaneMap<S> wmat(weight_.value.data(), out_, in_);
    for (int i = 0; i < x.n; ++i)
      y.item(i).col(0).noalias() = wmat * x.data.segment(static_cast<Eigen::Index>(i) * in_, in_) + bias_.value;
    if (mode == Mode::Train) input_ = x;
    return y;
  }

  Tensor<S> backward(const Tensor<S>& dy) {
    const Tensor<S>& x = input_;
    Tensor<S> dx = Tensor<S>::zeros_like(x);
    const ConstPlaneMap<S> wmat(weight_.value.data(), out_, in_);
    PlaneMap<S> dw(weight_.grad.data(), out_, in_);
    for (int i = 0; i < x.n; ++i) {
      const auto g = dy.item(i).col(0);
      dw.noalias() += g * x.data.segment(static_cast<Eigen::Index>(i) * in_, in_).transpose();
      bias_.grad += g;
      dx.data.segment(static_cast<Eigen::Index>(i) * in_, in_).noalias() = wmat.transpose() * g;
    }
    return dx;
  }

  void collect(ParamList<S>& out) {
    out.push_back(&weight_);
    out.push_back(&bias_);
  }

 private:
  int in_ = 0, out_ = 0;
  Parameter<S> weight_, bias_;
  Tensor<S> input_;
};

}  // namespace wonderm::nn
