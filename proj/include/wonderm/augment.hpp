#pragma once

#include <array>
#include <string>
#include <vector>

#include "wonderm/dataset.hpp"
#include "wonderm/image.hpp"

namespace wonderm {

enum class Flip { None, Vertical, Horizontal };

struct TransformId {
  int rotation = 0;  // degrees counterclockwise: 0, 90, 180 or 270
  Flip flip = Flip::None;

  bool operator==(const TransformId&) const = default;
  std::string tag() const;  // "_r90", "_r180_fv", ...
};

TransformId parse_transform_tag(std::string_view tag);

// Rotations x {none, vertical}, in tag order; the extended set appends
// rotations x {horizontal}. Duplicated reflections are kept on purpose.
const std::vector<TransformId>& standard_transforms();
const std::vector<TransformId>& extended_transforms();
bool uses_extended_set(ClassLabel c);  // DF and VASC
const std::vector<TransformId>& transforms_for(ClassLabel c);

// Vertical flip mirrors top/bottom, horizontal mirrors left/right.
template <typename T>
Raster<T> flip(const Raster<T>& img, Flip f) {
  if (f == Flip::None) return img;
  Raster<T> out(img.rows(), img.cols(), img.channels());
  for (int r = 0; r < img.rows(); ++r)
    for (int c = 0; c < img.cols(); ++c) {
      const int sr = f == Flip::Vertical ? img.rows() - 1 - r : r;
      const int sc = f == Flip::Horizontal ? img.cols() - 1 - c : c;
      for (int ch = 0; ch < img.channels(); ++ch) out(r, c, ch) = img(sr, sc, ch);
    }
  return out;
}

// Counterclockwise quarter turns: out(r, c) = in(c, n-1-r) per turn.
template <typename T>
Raster<T> rotate(const Raster<T>& img, int degrees) {
  if (!img.is_square()) throw PipelineError("rotation needs a square raster");
  const int turns = ((degrees / 90) % 4 + 4) % 4;
  if (degrees % 90 != 0) throw PipelineError("rotation must be a multiple of 90 degrees");
  if (turns == 0) return img;
  const int n = img.rows();
  Raster<T> out(n, n, img.channels());
  for (int r = 0; r < n; ++r)
    for (int c = 0; c < n; ++c) {
      int sr = r, sc = c;
      switch (turns) {
        case 1: sr = c; sc = n - 1 - r; break;
        case 2: sr = n - 1 - r; sc = n - 1 - c; break;
        case 3: sr = n - 1 - c; sc = r; break;
      }
      for (int ch = 0; ch < img.channels(); ++ch) out(r, c, ch) = img(sr, sc, ch);
    }
  return out;
}

// Flip first, then rotate.
template <typename T>
Raster<T> apply(const Raster<T>& img, const TransformId& t) {
  if (!img.is_square()) throw PipelineError("augmentation needs a square raster");
  return rotate(flip(img, t.flip), t.rotation);
}

// In-memory variants of one labeled record; ids get the transform tag.
std::vector<ImageRecord> expand(const ImageRecord& r);

// Expands every record and writes the pixels under out_dir/images. Output is
// ordered by (source id, tag order of the transform set).
DatasetManifest expand_manifest(const DatasetManifest& m, const std::filesystem::path& out_dir);

long expanded_size(const ClassCounts& counts);

}  // namespace wonderm
