#include "wonderm/augment.hpp"

#include <algorithm>

namespace wonderm {

namespace fs = std::filesystem;

std::string TransformId::tag() const {
  std::string t = "_r" + std::to_string(rotation);
  if (flip == Flip::Vertical) t += "_fv";
  if (flip == Flip::Horizontal) t += "_fh";
  return t;
}

TransformId parse_transform_tag(std::string_view tag) {
  for (const auto& t : extended_transforms())
    if (t.tag() == tag) return t;
  throw PipelineError("unknown transform tag: " + std::string(tag));
}

namespace {

std::vector<TransformId> make_set(std::initializer_list<Flip> flips) {
  std::vector<TransformId> v;
  for (Flip f : flips)
    for (int rot : {0, 90, 180, 270}) v.push_back({rot, f});
  return v;
}

}  // namespace

const std::vector<TransformId>& standard_transforms() {
  static const auto v = make_set({Flip::None, Flip::Vertical});
  return v;
}

const std::vector<TransformId>& extended_transforms() {
  static const auto v = make_set({Flip::None, Flip::Vertical, Flip::Horizontal});
  return v;
}

bool uses_extended_set(ClassLabel c) { return c == ClassLabel::DF || c == ClassLabel::VASC; }

const std::vector<TransformId>& transforms_for(ClassLabel c) {
  return uses_extended_set(c) ? extended_transforms() : standard_transforms();
}

std::vector<ImageRecord> expand(const ImageRecord& r) {
  if (!r.label) throw PipelineError("cannot augment unlabeled record " + r.id);
  const auto src = std::make_shared<const Image>(load_pixels(r));
  std::shared_ptr<const Mask> mask;
  if (r.has_mask()) mask = std::make_shared<const Mask>(load_mask(r));

  std::vector<ImageRecord> out;
  for (const TransformId& t : transforms_for(*r.label)) {
    ImageRecord v;
    v.id = r.id + t.tag();
    v.label = r.label;
    v.stage = r.stage;
    v.hairy = r.hairy;
    v.pixels = std::make_shared<const Image>(apply(*src, t));
    if (mask) v.mask = std::make_shared<const Mask>(apply(*mask, t));
    out.push_back(std::move(v));
  }
  return out;
}

DatasetManifest expand_manifest(const DatasetManifest& m, const fs::path& out_dir) {
  std::vector<const ImageRecord*> order;
  for (const auto& r : m.records()) order.push_back(&r);
  std::sort(order.begin(), order.end(), [](auto* a, auto* b) { return a->id < b->id; });

  const fs::path img_dir = fs::absolute(out_dir / "images").lexically_normal();
  fs::create_directories(img_dir);
  std::vector<ImageRecord> out;
  out.reserve(static_cast<std::size_t>(expanded_size(m.class_counts())));
  for (const ImageRecord* r : order)
    for (ImageRecord& v : expand(*r)) {
      v.path = img_dir / (v.id + ".png");
      write_image(v.path, *v.pixels);
      if (v.mask) {
        v.mask_path = img_dir / (v.id + "_segmentation.png");
        write_mask(*v.mask_path, *v.mask);
      }
      v.pixels.reset();
      v.mask.reset();
      out.push_back(std::move(v));
    }
  return DatasetManifest(m.kind(), m.seed(), std::move(out));
}

long expanded_size(const ClassCounts& counts) {
  long n = 0;
  for (ClassLabel c : kAllClasses) n += counts[index_of(c)] * static_cast<long>(transforms_for(c).size());
  return n;
}

}  // namespace wonderm
