#include "wonderm/nets.hpp"

#include <map>

namespace wonderm {

void EncoderSpec::validate() const {
  if (growth_rate < 1) throw PipelineError("growth_rate must be >= 1");
  if (block_layers.size() < 2) throw PipelineError("encoder needs at least two dense blocks");
  for (int l : block_layers)
    if (l < 1) throw PipelineError("every dense block needs at least one layer");
  if (initial_channels < 1) throw PipelineError("initial_channels must be >= 1");
  if (!(compression > 0.0 && compression <= 1.0)) throw PipelineError("compression must lie in (0, 1]");
  if (input_side < downsample_factor() || input_side % downsample_factor() != 0)
    throw PipelineError("input_side " + std::to_string(input_side) + " is not divisible by " +
                        std::to_string(downsample_factor()));
}

SegModel build_seg(const EncoderSpec& spec, std::uint64_t seed) {
  SegModel m(spec);
  nn::init_parameters(m.parameters(), seed);
  return m;
}

ClsModel build_cls(const EncoderSpec& spec, int n_classes, std::uint64_t seed) {
  if (n_classes < 2) throw PipelineError("classifier needs at least two classes");
  ClsModel m(spec, n_classes);
  nn::init_parameters(m.parameters(), seed);
  return m;
}

HairNet build_hair(int input_side, std::uint64_t seed) {
  HairNet m(input_side);
  nn::init_parameters(m.parameters(), seed);
  return m;
}

ClsModel transplant_encoder(SegModel& seg, const EncoderSpec& spec, std::uint64_t head_seed) {
  if (!(seg.spec() == spec)) throw PipelineError("transplant: encoder spec differs from the segmentation model's");
  ClsModel cls = build_cls(spec, kNumClasses, head_seed);
  std::map<std::string, const nn::Parameter<Scalar>*> source;
  for (const auto* p : seg.encoder_parameters()) source[p->name] = p;
  auto dest = cls.encoder_parameters();
  if (dest.size() != source.size()) throw PipelineError("transplant: encoder tensor count differs");
  for (auto* p : dest) {
    auto it = source.find(p->name);
    if (it == source.end() || it->second->shape != p->shape)
      throw PipelineError("transplant: no matching source tensor for " + p->name);
    p->value = it->second->value;
  }
  return cls;
}

Tensor images_to_tensor(std::span<const Image> images) {
  if (images.empty()) return Tensor(0, 3, 0, 0);
  const int side = images.front().rows();
  Tensor t(static_cast<int>(images.size()), 3, side, images.front().cols());
  for (std::size_t i = 0; i < images.size(); ++i) {
    const Image& img = images[i];
    if (img.rows() != t.h || img.cols() != t.w || img.channels() != 3)
      throw PipelineError("batch images must share one 3-channel shape");
    for (int c = 0; c < 3; ++c)
      for (int y = 0; y < t.h; ++y)
        for (int x = 0; x < t.w; ++x)
          t.at(static_cast<int>(i), c, y, x) = static_cast<Scalar>(img(y, x, c)) / Scalar(127.5) - Scalar(1);
  }
  return t;
}

Tensor masks_to_tensor(std::span<const Mask> masks) {
  if (masks.empty()) return Tensor(0, 1, 0, 0);
  Tensor t(static_cast<int>(masks.size()), 1, masks.front().rows(), masks.front().cols());
  for (std::size_t i = 0; i < masks.size(); ++i) {
    if (masks[i].rows() != t.h || masks[i].cols() != t.w) throw PipelineError("batch masks must share one shape");
    for (int y = 0; y < t.h; ++y)
      for (int x = 0; x < t.w; ++x) t.at(static_cast<int>(i), 0, y, x) = masks[i](y, x) ? Scalar(1) : Scalar(0);
  }
  return t;
}

}  // namespace wonderm
