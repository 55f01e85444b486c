#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "wonderm/image.hpp"
#include "wonderm/nn/layers.hpp"
#include "wonderm/nn/losses.hpp"
#include "wonderm/random.hpp"

namespace wonderm {

struct EncoderSpec {
  int growth_rate = 8;
  std::vector<int> block_layers = {2, 2, 2};
  int initial_channels = 16;
  int input_side = 64;
  double compression = 0.5;

  bool operator==(const EncoderSpec&) const = default;

  void validate() const;
  int downsample_factor() const { return 1 << block_layers.size(); }

  static EncoderSpec desk() { return {}; }
  // DenseNet-121 block layout at the full 448 px input.
  static EncoderSpec paper_scale() { return {32, {6, 12, 24, 16}, 64, 448, 0.5}; }
};

namespace nn {

// He-normal for weights that declare a fan-in; constant fill otherwise.
// Each tensor draws from a stream keyed by its name, so initial values do
// not depend on which other tensors exist.
template <typename S>
void init_parameters(const ParamList<S>& params, std::uint64_t seed) {
  for (Parameter<S>* p : params) {
    if (p->fan_in <= 0) {
      p->value.setConstant(static_cast<S>(p->fill));
      continue;
    }
    std::uint64_t h = 1469598103934665603ULL;
    for (char ch : p->name) h = (h ^ static_cast<unsigned char>(ch)) * 1099511628211ULL;
    Rng rng = Rng::derived(seed, h);
    const double sd = std::sqrt(2.0 / p->fan_in);
    for (Eigen::Index i = 0; i < p->size(); ++i) p->value[i] = static_cast<S>(sd * rng.normal());
  }
}

template <typename S>
void zero_grad(const ParamList<S>& params) {
  for (Parameter<S>* p : params) p->grad.setZero();
}

template <typename S>
long count_trainable(const ParamList<S>& params) {
  long n = 0;
  for (const Parameter<S>* p : params)
    if (p->trainable) n += static_cast<long>(p->size());
  return n;
}

// conv -> batch norm -> relu
template <typename S>
struct ConvUnit {
  Conv2d<S> conv;
  BatchNorm2d<S> bn;
  ReLU<S> relu;

  ConvUnit() = default;
  ConvUnit(const std::string& name, int in, int out, int k = 3)
      : conv(name + ".conv", in, out, k), bn(name + ".bn", out) {}

  Tensor<S> forward(const Tensor<S>& x, Mode m) { return relu.forward(bn.forward(conv.forward(x, m), m), m); }
  Tensor<S> backward(const Tensor<S>& g) { return conv.backward(bn.backward(relu.backward(g))); }
  void collect(ParamList<S>& out) {
    conv.collect(out);
    bn.collect(out);
  }
};

// Pre-activation bottleneck layer: BN-ReLU-1x1 (4k) -> BN-ReLU-3x3 (k).
template <typename S>
struct DenseLayer {
  BatchNorm2d<S> bn1, bn2;
  ReLU<S> relu1, relu2;
  Conv2d<S> conv1, conv2;

  DenseLayer() = default;
  DenseLayer(const std::string& name, int in, int growth)
      : bn1(name + ".bn1", in), bn2(name + ".bn2", 4 * growth),
        conv1(name + ".conv1", in, 4 * growth, 1), conv2(name + ".conv2", 4 * growth, growth, 3) {}

  Tensor<S> forward(const Tensor<S>& x, Mode m) {
    auto t = conv1.forward(relu1.forward(bn1.forward(x, m), m), m);
    return conv2.forward(relu2.forward(bn2.forward(t, m), m), m);
  }
  Tensor<S> backward(const Tensor<S>& g) {
    auto t = bn2.backward(relu2.backward(conv2.backward(g)));
    return bn1.backward(relu1.backward(conv1.backward(t)));
  }
  void collect(ParamList<S>& out) {
    bn1.collect(out);
    conv1.collect(out);
    bn2.collect(out);
    conv2.collect(out);
  }
};

// Each layer sees the concatenation of the block input and every earlier
// layer's output; the block emits the full concatenation.
template <typename S>
class DenseBlock {
 public:
  DenseBlock() = default;
  DenseBlock(const std::string& name, int in, int layers, int growth) : in_(in), growth_(growth) {
    for (int l = 0; l < layers; ++l)
      layers_.emplace_back(name + ".layer" + std::to_string(l + 1), in + l * growth, growth);
  }

  int in_channels() const { return in_; }
  int out_channels() const { return in_ + growth_ * static_cast<int>(layers_.size()); }

  Tensor<S> forward(const Tensor<S>& x, Mode m) {
    Tensor<S> feats = x;
    for (auto& layer : layers_) feats = concat_channels(feats, layer.forward(feats, m));
    return feats;
  }

  Tensor<S> backward(const Tensor<S>& g) {
    Tensor<S> grad = g;
    for (int l = static_cast<int>(layers_.size()) - 1; l >= 0; --l) {
      auto [prev, fresh] = split_channels(grad, in_ + l * growth_);
      prev.data += layers_[static_cast<std::size_t>(l)].backward(fresh).data;
      grad = std::move(prev);
    }
    return grad;
  }

  void collect(ParamList<S>& out) {
    for (auto& l : layers_) l.collect(out);
  }

 private:
  int in_ = 0, growth_ = 0;
  std::vector<DenseLayer<S>> layers_;
};

// BN-ReLU-1x1 compression followed by 2x2 average pooling.
template <typename S>
struct Transition {
  BatchNorm2d<S> bn;
  ReLU<S> relu;
  Conv2d<S> conv;
  AvgPool2<S> pool;

  Transition() = default;
  Transition(const std::string& name, int in, int out) : bn(name + ".bn", in), conv(name + ".conv", in, out, 1) {}

  int out_channels() const { return conv.out_channels(); }
  Tensor<S> forward(const Tensor<S>& x, Mode m) {
    return pool.forward(conv.forward(relu.forward(bn.forward(x, m), m), m), m);
  }
  Tensor<S> backward(const Tensor<S>& g) { return bn.backward(relu.backward(conv.backward(pool.backward(g)))); }
  void collect(ParamList<S>& out) {
    bn.collect(out);
    conv.collect(out);
  }
};

// DenseNet encoder. forward() returns the skip sources: the stem convolution
// output (full resolution) followed by the concatenated output of each dense
// block; the last entry is the deepest feature map.
template <typename S>
class Encoder {
 public:
  Encoder() = default;
  explicit Encoder(const EncoderSpec& spec, const std::string& name = "encoder") : spec_(spec) {
    spec.validate();
    stem_ = ConvUnit<S>(name + ".stem", 3, spec.initial_channels, 3);
    stem_.conv.set_input_grad(false);
    int ch = spec.initial_channels;
    const int nb = static_cast<int>(spec.block_layers.size());
    for (int b = 0; b < nb; ++b) {
      blocks_.emplace_back(name + ".block" + std::to_string(b + 1), ch, spec.block_layers[static_cast<std::size_t>(b)],
                           spec.growth_rate);
      ch = blocks_.back().out_channels();
      if (b + 1 < nb) {
        const int out = std::max(1, static_cast<int>(std::floor(ch * spec.compression)));
        transitions_.emplace_back(name + ".transition" + std::to_string(b + 1), ch, out);
        ch = out;
      }
    }
  }

  const EncoderSpec& spec() const { return spec_; }
  void set_input_grad(bool on) { stem_.conv.set_input_grad(on); }
  int num_blocks() const { return static_cast<int>(blocks_.size()); }
  const DenseBlock<S>& block(int b) const { return blocks_[static_cast<std::size_t>(b)]; }

  std::vector<int> skip_channels() const {
    std::vector<int> out{spec_.initial_channels};
    for (const auto& b : blocks_) out.push_back(b.out_channels());
    return out;
  }
  int out_channels() const { return blocks_.back().out_channels(); }

  std::vector<Tensor<S>> forward(const Tensor<S>& x, Mode m) {
    if (x.c != 3 || x.h % spec_.downsample_factor() || x.w % spec_.downsample_factor())
      throw PipelineError("encoder input must be N x 3 x H x W with H, W divisible by " +
                          std::to_string(spec_.downsample_factor()));
    std::vector<Tensor<S>> skips;
    skips.push_back(stem_.forward(x, m));
    Tensor<S> t = pool_.forward(skips.back(), m);
    for (std::size_t b = 0; b < blocks_.size(); ++b) {
      skips.push_back(blocks_[b].forward(t, m));
      if (b < transitions_.size()) t = transitions_[b].forward(skips.back(), m);
    }
    return skips;
  }

  // Gradients per skip source; empty tensors stand for zero.
  Tensor<S> backward(std::vector<Tensor<S>> dskips) {
    Tensor<S> g = std::move(dskips.back());
    for (int b = num_blocks() - 1; b >= 0; --b) {
      g = blocks_[static_cast<std::size_t>(b)].backward(g);
      g = b > 0 ? transitions_[static_cast<std::size_t>(b - 1)].backward(g) : pool_.backward(g);
      accumulate(g, dskips[static_cast<std::size_t>(b)]);
    }
    return stem_.backward(g);
  }

  void collect(ParamList<S>& out) {
    stem_.collect(out);
    for (std::size_t b = 0; b < blocks_.size(); ++b) {
      blocks_[b].collect(out);
      if (b < transitions_.size()) transitions_[b].collect(out);
    }
  }

 private:
  EncoderSpec spec_;
  ConvUnit<S> stem_;
  MaxPool2<S> pool_;
  std::vector<DenseBlock<S>> blocks_;
  std::vector<Transition<S>> transitions_;
};

// U-net up path. Level L (deepest) consumes the last dense block directly;
// each shallower level upsamples, concatenates its skip source and applies
// two 3x3 conv units.
template <typename S>
class Decoder {
 public:
  Decoder() = default;
  Decoder(const std::vector<int>& skip_channels, const std::string& name = "decoder") {
    const int levels = static_cast<int>(skip_channels.size());
    widths_.resize(static_cast<std::size_t>(levels));
    for (int l = 0; l < levels; ++l) widths_[static_cast<std::size_t>(l)] = std::max(8, skip_channels[static_cast<std::size_t>(l)] / 2);
    units_.resize(static_cast<std::size_t>(levels));
    ups_.resize(static_cast<std::size_t>(levels));
    skip_channels_ = skip_channels;
    for (int l = levels - 1; l >= 0; --l) {
      const std::string lv = name + ".level" + std::to_string(l);
      const auto ul = static_cast<std::size_t>(l);
      int in = skip_channels[ul];
      if (l + 1 < levels) {
        const int below = widths_[ul + 1];
        ups_[ul] = UpConv2<S>(lv + ".up", below, below);
        in += below;
      }
      units_[ul][0] = ConvUnit<S>(lv + ".conv_a", in, widths_[ul]);
      units_[ul][1] = ConvUnit<S>(lv + ".conv_b", widths_[ul], widths_[ul]);
    }
    head_ = Conv2d<S>(name + ".out", widths_[0], 1, 1, 1, 0, true);
  }

  int skip_count() const { return static_cast<int>(skip_channels_.size()); }

  Tensor<S> forward(const std::vector<Tensor<S>>& skips, Mode m) {
    if (static_cast<int>(skips.size()) != skip_count()) throw PipelineError("decoder: wrong number of skip tensors");
    const int levels = skip_count();
    Tensor<S> t = skips.back();
    for (int l = levels - 1; l >= 0; --l) {
      const auto ul = static_cast<std::size_t>(l);
      if (l + 1 < levels) t = concat_channels(ups_[ul].forward(t, m), skips[ul]);
      t = units_[ul][1].forward(units_[ul][0].forward(t, m), m);
    }
    return head_.forward(t, m);
  }

  std::vector<Tensor<S>> backward(const Tensor<S>& dlogits) {
    const int levels = skip_count();
    std::vector<Tensor<S>> dskips(static_cast<std::size_t>(levels));
    Tensor<S> g = head_.backward(dlogits);
    for (int l = 0; l < levels; ++l) {
      const auto ul = static_cast<std::size_t>(l);
      g = units_[ul][0].backward(units_[ul][1].backward(g));
      if (l + 1 < levels) {
        auto [dup, dskip] = split_channels(g, widths_[ul + 1]);
        dskips[ul] = std::move(dskip);
        g = ups_[ul].backward(dup);
      } else {
        dskips[ul] = std::move(g);
      }
    }
    return dskips;
  }

  void collect(ParamList<S>& out) {
    for (int l = skip_count() - 1; l >= 0; --l) {
      const auto ul = static_cast<std::size_t>(l);
      if (l + 1 < skip_count()) ups_[ul].collect(out);
      units_[ul][0].collect(out);
      units_[ul][1].collect(out);
    }
    head_.collect(out);
  }

 private:
  std::vector<int> skip_channels_;
  std::vector<int> widths_;
  std::vector<std::array<ConvUnit<S>, 2>> units_;
  std::vector<UpConv2<S>> ups_;
  Conv2d<S> head_;
};

// Model outputs are logits; probability views apply the sigmoid/softmax.
template <typename S>
class SegModel {
 public:
  SegModel() = default;
  explicit SegModel(const EncoderSpec& spec) : encoder_(spec), decoder_(encoder_.skip_channels()) {}

  const EncoderSpec& spec() const { return encoder_.spec(); }
  Encoder<S>& encoder() { return encoder_; }
  const Encoder<S>& encoder() const { return encoder_; }
  int skip_count() const { return decoder_.skip_count(); }
  void set_input_grad(bool on) { encoder_.set_input_grad(on); }

  Tensor<S> forward(const Tensor<S>& x, Mode m) { return decoder_.forward(encoder_.forward(x, m), m); }
  Tensor<S> backward(const Tensor<S>& dlogits) { return encoder_.backward(decoder_.backward(dlogits)); }
  Tensor<S> predict(const Tensor<S>& x) { return sigmoid(forward(x, Mode::Eval)); }

  ParamList<S> parameters() {
    ParamList<S> out;
    encoder_.collect(out);
    decoder_.collect(out);
    return out;
  }
  ParamList<S> encoder_parameters() {
    ParamList<S> out;
    encoder_.collect(out);
    return out;
  }

 private:
  Encoder<S> encoder_;
  Decoder<S> decoder_;
};

template <typename S>
class ClsModel {
 public:
  ClsModel() = default;
  explicit ClsModel(const EncoderSpec& spec, int n_classes = kNumClasses)
      : encoder_(spec), n_classes_(n_classes),
        head_conv_("head", encoder_.out_channels(), encoder_.out_channels(), 3),
        fc_("head.fc", encoder_.out_channels(), n_classes) {}

  const EncoderSpec& spec() const { return encoder_.spec(); }
  int n_classes() const { return n_classes_; }
  Encoder<S>& encoder() { return encoder_; }
  void set_input_grad(bool on) { encoder_.set_input_grad(on); }

  Tensor<S> forward(const Tensor<S>& x, Mode m) {
    if (x.n == 0) return Tensor<S>(0, n_classes_, 1, 1);
    auto skips = encoder_.forward(x, m);
    n_skips_ = skips.size();
    return fc_.forward(gap_.forward(head_conv_.forward(skips.back(), m), m), m);
  }
  Tensor<S> backward(const Tensor<S>& dlogits) {
    std::vector<Tensor<S>> dskips(n_skips_);
    dskips.back() = head_conv_.backward(gap_.backward(fc_.backward(dlogits)));
    return encoder_.backward(std::move(dskips));
  }
  RowMat<S> predict(const Tensor<S>& x) { return softmax_rows(forward(x, Mode::Eval)); }

  ParamList<S> parameters() {
    ParamList<S> out;
    encoder_.collect(out);
    head_conv_.collect(out);
    fc_.collect(out);
    return out;
  }
  ParamList<S> encoder_parameters() {
    ParamList<S> out;
    encoder_.collect(out);
    return out;
  }
  ParamList<S> head_parameters() {
    ParamList<S> out;
    head_conv_.collect(out);
    fc_.collect(out);
    return out;
  }

 private:
  Encoder<S> encoder_;
  int n_classes_ = kNumClasses;
  ConvUnit<S> head_conv_;
  GlobalAvgPool<S> gap_;
  Linear<S> fc_;
  std::size_t n_skips_ = 0;
};

// Binary hair/no-hair classifier: three conv stages, global pooling, one logit.
template <typename S>
class HairNet {
 public:
  HairNet() : HairNet(64) {}
  explicit HairNet(int input_side, int width = 8)
      : side_(input_side), width_(width), c1_("hair.conv1", 3, width), c2_("hair.conv2", width, 2 * width),
        c3_("hair.conv3", 2 * width, 4 * width), fc_("hair.fc", 4 * width, 1) {
    c1_.conv.set_input_grad(false);
    if (input_side < 4 || input_side % 4) throw PipelineError("hair net input side must be a positive multiple of 4");
  }

  int input_side() const { return side_; }
  int width() const { return width_; }
  bool trained() const { return trained_; }
  void set_trained(bool t) { trained_ = t; }
  void set_input_grad(bool on) { c1_.conv.set_input_grad(on); }

  Tensor<S> forward(const Tensor<S>& x, Mode m) {
    if (x.n == 0) return Tensor<S>(0, 1, 1, 1);
    auto t = p1_.forward(c1_.forward(x, m), m);
    t = p2_.forward(c2_.forward(t, m), m);
    return fc_.forward(gap_.forward(c3_.forward(t, m), m), m);
  }
  Tensor<S> backward(const Tensor<S>& g) {
    auto t = c3_.backward(gap_.backward(fc_.backward(g)));
    t = c2_.backward(p2_.backward(t));
    return c1_.backward(p1_.backward(t));
  }
  // Probability of "hairy" per item.
  Vec<S> predict(const Tensor<S>& x) { return sigmoid(forward(x, Mode::Eval)).data; }

  ParamList<S> parameters() {
    ParamList<S> out;
    c1_.collect(out);
    c2_.collect(out);
    c3_.collect(out);
    fc_.collect(out);
    return out;
  }

 private:
  int side_ = 64, width_ = 8;
  bool trained_ = false;
  ConvUnit<S> c1_, c2_, c3_;
  MaxPool2<S> p1_, p2_;
  GlobalAvgPool<S> gap_;
  Linear<S> fc_;
};

}  // namespace nn

using Scalar = float;
using SegModel = nn::SegModel<Scalar>;
using ClsModel = nn::ClsModel<Scalar>;
using HairNet = nn::HairNet<Scalar>;
using Tensor = nn::Tensor<Scalar>;

SegModel build_seg(const EncoderSpec& spec, std::uint64_t seed = 0);
ClsModel build_cls(const EncoderSpec& spec, int n_classes = kNumClasses, std::uint64_t seed = 0);
HairNet build_hair(int input_side = 64, std::uint64_t seed = 0);

// Copies every encoder tensor (weights and batch-norm statistics) from a
// segmentation model into a freshly initialized classifier.
ClsModel transplant_encoder(SegModel& seg, const EncoderSpec& spec, std::uint64_t head_seed = 0);

// Images to an N x 3 x side x side tensor scaled to [-1, 1]. Inputs must
// already be side x side.
Tensor images_to_tensor(std::span<const Image> images);
Tensor masks_to_tensor(std::span<const Mask> masks);

struct LayerRow {
  std::string name;
  std::vector<int> shape;
  long count;
  bool trainable;
};
template <typename Model>
std::vector<LayerRow> layer_table(Model& model) {
  std::vector<LayerRow> rows;
  for (const auto* p : model.parameters()) rows.push_back({p->name, p->shape, static_cast<long>(p->size()), p->trainable});
  return rows;
}

}  // namespace wonderm
