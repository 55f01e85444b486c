#pragma once

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "wonderm/dataset.hpp"
#include "wonderm/image.hpp"
#include "wonderm/nets.hpp"

namespace wonderm {

// Centers the raster in a max(H, W) square; the border replicates the
// nearest edge pixel. An odd remainder puts the extra row/column on the
// trailing side.
template <typename T>
Raster<T> pad_to_square(const Raster<T>& img) {
  if (img.empty()) throw PipelineError("pad_to_square: empty raster");
  const int side = std::max(img.rows(), img.cols());
  const int top = (side - img.rows()) / 2, left = (side - img.cols()) / 2;
  Raster<T> out(side, side, img.channels());
  for (int r = 0; r < side; ++r) {
    const int sr = std::clamp(r - top, 0, img.rows() - 1);
    for (int c = 0; c < side; ++c) {
      const int sc = std::clamp(c - left, 0, img.cols() - 1);
      for (int ch = 0; ch < img.channels(); ++ch) out(r, c, ch) = img(sr, sc, ch);
    }
  }
  return out;
}

// Bilinear resampling of a square raster with pixel-center alignment.
// Same-side calls return the input unchanged.
template <typename T>
Raster<T> resize(const Raster<T>& img, int side) {
  if (!img.is_square() || img.empty()) throw PipelineError("resize expects a non-empty square raster");
  if (side < 1) throw PipelineError("resize: side must be >= 1");
  if (side == img.rows()) return img;
  const int n = img.rows();
  const double scale = static_cast<double>(n) / side;
  struct Tap {
    int i0, i1;
    double f;
  };
  std::vector<Tap> taps(static_cast<std::size_t>(side));
  for (int d = 0; d < side; ++d) {
    const double src = std::clamp((d + 0.5) * scale - 0.5, 0.0, static_cast<double>(n - 1));
    const int i0 = static_cast<int>(std::floor(src));
    taps[static_cast<std::size_t>(d)] = {i0, std::min(i0 + 1, n - 1), src - i0};
  }
  Raster<T> out(side, side, img.channels());
  for (int r = 0; r < side; ++r) {
    const Tap& ty = taps[static_cast<std::size_t>(r)];
    for (int c = 0; c < side; ++c) {
      const Tap& tx = taps[static_cast<std::size_t>(c)];
      for (int ch = 0; ch < img.channels(); ++ch) {
        const double top = (1 - tx.f) * img(ty.i0, tx.i0, ch) + tx.f * img(ty.i0, tx.i1, ch);
        const double bot = (1 - tx.f) * img(ty.i1, tx.i0, ch) + tx.f * img(ty.i1, tx.i1, ch);
        const double v = (1 - ty.f) * top + ty.f * bot;
        if constexpr (std::is_integral_v<T>)
          out(r, c, ch) = static_cast<T>(std::lround(v));
        else
          out(r, c, ch) = static_cast<T>(v);
      }
    }
  }
  return out;
}

// Bilinear resample then threshold at 0.5.
Mask resize_mask(const Mask& m, int side);

// Pad then resize to a square of the given side; the common model-input path.
Image fit_square(const Image& img, int side);

struct HairMask {
  Mask mask;
  double coverage = 0.0;
};

struct HairMaskOptions {
  int radius = 0;         // disk radius; 0 picks max(1, round(side / 60))
  double k_sigma = 2.0;   // threshold = mean + k_sigma * stddev of the response
};

int default_hair_radius(int side);

// Luminance blackhat (grayscale closing minus input) with a disk element.
Eigen::ArrayXXd blackhat_response(const Image& img, int radius);

HairMask detect_hair(const Image& img, const HairMaskOptions& opts = {});

// Fills masked pixels from the outside in; each ring takes the mean of its
// already-known 8-neighbors. Pixels outside the mask are never touched.
Image inpaint(const Image& img, const Mask& mask);

struct HairRemoval {
  Image image;
  HairMask mask;
};
HairRemoval remove_hair(const Image& img, const HairMaskOptions& opts = {});

struct HairVerdict {
  std::string image_id;
  bool hairy = false;
  double score = 0.0;
};

HairVerdict classify_hair(const Image& img, HairNet& model, double threshold = 0.5, std::string image_id = {});

struct PreprocessOptions {
  int side = 448;
  std::optional<std::filesystem::path> hair_model;
  bool force_hair_removal = false;
  double hair_threshold = 0.5;
  HairMaskOptions hair;
};

struct PreprocessResult {
  DatasetManifest manifest;
  std::vector<HairVerdict> verdicts;
};

// pad -> resize -> (hair verdict -> removal). Hair removal runs for records
// the hair model flags, or for every record when forced. Without a model
// and without forcing, no removal happens and no verdicts are logged.
PreprocessResult preprocess_manifest(const DatasetManifest& m, const std::filesystem::path& out_dir,
                                     const PreprocessOptions& opts);

void write_verdicts(const std::filesystem::path& file, const std::vector<HairVerdict>& verdicts);

}  // namespace wonderm
