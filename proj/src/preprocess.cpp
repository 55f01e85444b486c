#include "wonderm/preprocess.hpp"

#include <fstream>

#include "wonderm/checkpoint.hpp"

namespace wonderm {

namespace fs = std::filesystem;

Mask resize_mask(const Mask& m, int side) {
  if (side == m.rows() && m.is_square()) return m;
  Raster<float> f(m.rows(), m.cols(), 1);
  f.array() = m.array().cast<float>();
  Raster<float> r = resize(f, side);
  Mask out(side, side, 1);
  out.array() = (r.array() >= 0.5f).cast<std::uint8_t>();
  return out;
}

Image fit_square(const Image& img, int side) { return resize(pad_to_square(img), side); }

int default_hair_radius(int side) { return std::max(1, static_cast<int>(std::lround(side / 60.0))); }

namespace {

using Plane = Eigen::ArrayXXd;

std::vector<std::pair<int, int>> disk_offsets(int radius) {
  std::vector<std::pair<int, int>> d;
  for (int dy = -radius; dy <= radius; ++dy)
    for (int dx = -radius; dx <= radius; ++dx)
      if (dx * dx + dy * dy <= radius * radius) d.emplace_back(dy, dx);
  return d;
}

// Grayscale dilation (take_max) or erosion; out-of-bounds taps are ignored.
Plane morph(const Plane& src, const std::vector<std::pair<int, int>>& offsets, bool take_max) {
  const int h = static_cast<int>(src.rows()), w = static_cast<int>(src.cols());
  Plane out = Plane::Constant(h, w, take_max ? -1e300 : 1e300);
  for (auto [dy, dx] : offsets) {
    const int y0 = std::max(0, -dy), y1 = std::min(h, h - dy);
    const int x0 = std::max(0, -dx), x1 = std::min(w, w - dx);
    if (y1 <= y0 || x1 <= x0) continue;
    auto dst = out.block(y0, x0, y1 - y0, x1 - x0);
    auto tap = src.block(y0 + dy, x0 + dx, y1 - y0, x1 - x0);
    if (take_max)
      dst = dst.max(tap);
    else
      dst = dst.min(tap);
  }
  return out;
}

Plane luminance(const Image& img) {
  Plane y(img.rows(), img.cols());
  for (int r = 0; r < img.rows(); ++r)
    for (int c = 0; c < img.cols(); ++c) y(r, c) = 0.299 * img(r, c, 0) + 0.587 * img(r, c, 1) + 0.114 * img(r, c, 2);
  return y;
}

}  // namespace

Eigen::ArrayXXd blackhat_response(const Image& img, int radius) {
  if (img.channels() != 3) throw PipelineError("hair detection expects a 3-channel raster");
  const auto disk = disk_offsets(radius);
  const Plane y = luminance(img);
  const Plane closed = morph(morph(y, disk, true), disk, false);
  return (closed - y).max(0.0);
}

HairMask detect_hair(const Image& img, const HairMaskOptions& opts) {
  const int radius = opts.radius > 0 ? opts.radius : default_hair_radius(std::max(img.rows(), img.cols()));
  const Plane bh = blackhat_response(img, radius);
  HairMask hm{Mask(img.rows(), img.cols(), 1), 0.0};
  if (bh.size() == 0) return hm;
  const double mean = bh.mean();
  const double sd = std::sqrt((bh - mean).square().mean());
  const double thr = mean + opts.k_sigma * sd;
  for (int r = 0; r < img.rows(); ++r)
    for (int c = 0; c < img.cols(); ++c) hm.mask(r, c) = (bh(r, c) > thr && bh(r, c) > 0.0) ? 1 : 0;
  hm.coverage = static_cast<double>(count_true(hm.mask)) / (static_cast<double>(img.rows()) * img.cols());
  return hm;
}

Image inpaint(const Image& img, const Mask& mask) {
  if (mask.rows() != img.rows() || mask.cols() != img.cols()) throw PipelineError("inpaint: mask shape mismatch");
  Image out = img;
  const int h = img.rows(), w = img.cols(), ch = img.channels();
  Mask known(h, w, 1);
  known.array() = (mask.array() == 0).cast<std::uint8_t>();
  std::vector<std::pair<int, int>> todo;
  for (int r = 0; r < h; ++r)
    for (int c = 0; c < w; ++c)
      if (!known(r, c)) todo.emplace_back(r, c);

  std::vector<double> acc(static_cast<std::size_t>(ch));
  while (!todo.empty()) {
    std::vector<std::pair<int, int>> ring, rest;
    std::vector<std::uint8_t> ring_vals;
    for (auto [r, c] : todo) {
      std::fill(acc.begin(), acc.end(), 0.0);
      int n = 0;
      for (int dy = -1; dy <= 1; ++dy)
        for (int dx = -1; dx <= 1; ++dx) {
          const int y = r + dy, x = c + dx;
          if ((dy == 0 && dx == 0) || y < 0 || y >= h || x < 0 || x >= w || !known(y, x)) continue;
          for (int k = 0; k < ch; ++k) acc[static_cast<std::size_t>(k)] += out(y, x, k);
          ++n;
        }
      if (n == 0) {
        rest.emplace_back(r, c);
        continue;
      }
      ring.emplace_back(r, c);
      for (int k = 0; k < ch; ++k)
        ring_vals.push_back(static_cast<std::uint8_t>(std::lround(acc[static_cast<std::size_t>(k)] / n)));
    }
    if (ring.empty()) break;  // nothing known anywhere: leave as is
    for (std::size_t i = 0; i < ring.size(); ++i) {
      auto [r, c] = ring[i];
      for (int k = 0; k < ch; ++k) out(r, c, k) = ring_vals[i * static_cast<std::size_t>(ch) + static_cast<std::size_t>(k)];
      known(r, c) = 1;
    }
    todo = std::move(rest);
  }
  return out;
}

HairRemoval remove_hair(const Image& img, const HairMaskOptions& opts) {
  HairMask hm = detect_hair(img, opts);
  Image cleaned = hm.coverage > 0 ? inpaint(img, hm.mask) : img;
  return {std::move(cleaned), std::move(hm)};
}

HairVerdict classify_hair(const Image& img, HairNet& model, double threshold, std::string image_id) {
  if (!model.trained()) throw PipelineError("hair classifier has not been trained");
  const Image in = img.is_square() && img.rows() == model.input_side() ? img : fit_square(img, model.input_side());
  const double score = model.predict(images_to_tensor(std::span<const Image>(&in, 1)))[0];
  return {std::move(image_id), score >= threshold, score};
}

PreprocessResult preprocess_manifest(const DatasetManifest& m, const fs::path& out_dir, const PreprocessOptions& opts) {
  if (opts.side < 1) throw PipelineError("preprocess: side must be >= 1");
  std::optional<HairNet> net;
  if (opts.hair_model) net = load_hair(*opts.hair_model);

  const fs::path img_dir = fs::absolute(out_dir / "images").lexically_normal();
  fs::create_directories(img_dir);
  PreprocessResult res;
  std::vector<ImageRecord> out;
  out.reserve(m.size());
  for (const auto& r : m.records()) {
    Image img = fit_square(load_pixels(r), opts.side);
    ImageRecord c = r;
    c.pixels.reset();
    c.mask.reset();
    c.hair_mask.reset();
    c.stage = Stage::Resized;

    bool remove = opts.force_hair_removal;
    if (net) {
      HairVerdict v = classify_hair(img, *net, opts.hair_threshold, r.id);
      remove = remove || v.hairy;
      res.verdicts.push_back(std::move(v));
    }
    if (remove) {
      img = remove_hair(img, opts.hair).image;
      c.stage = Stage::HairRemoved;
    }

    c.path = img_dir / (r.id + ".png");
    write_image(c.path, img);
    if (r.has_mask()) {
      c.mask_path = img_dir / (r.id + "_segmentation.png");
      write_mask(*c.mask_path, resize_mask(pad_to_square(load_mask(r)), opts.side));
    }
    if (r.has_hair_mask()) {
      c.hair_mask_path = img_dir / (r.id + "_hair.png");
      write_mask(*c.hair_mask_path, resize_mask(pad_to_square(load_hair_mask(r)), opts.side));
    }
    out.push_back(std::move(c));
  }
  res.manifest = DatasetManifest(m.kind(), m.seed(), std::move(out));
  return res;
}

void write_verdicts(const fs::path& file, const std::vector<HairVerdict>& verdicts) {
  Json j = Json::array();
  for (const auto& v : verdicts) j.push_back({{"image", v.image_id}, {"hairy", v.hairy}, {"score", v.score}});
  if (file.has_parent_path()) fs::create_directories(file.parent_path());
  std::ofstream(file) << j.dump(1) << '\n';
}

}  // namespace wonderm
