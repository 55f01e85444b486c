#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numeric>

#include "wonderm/dataset.hpp"
#include "wonderm/random.hpp"

namespace wonderm {

namespace {

constexpr double kPi = 3.14159265358979323846;

struct Rgb {
  double r, g, b;
};

// Base colors per family, canonical class order.
constexpr std::array<Rgb, kNumClasses> kLesionColor = {{
    {95, 55, 40},     // MEL: dark brown, blotchy
    {160, 105, 70},   // NV: even medium brown
    {220, 130, 140},  // BCC: pink ring
    {200, 70, 60},    // AKIEC: red speckled square
    {190, 160, 100},  // BKL: tan striped ellipse
    {170, 120, 90},   // DF: light brown disk, white center
    {140, 30, 80},    // VASC: purple lacunae
}};

std::uint8_t clamp8(double v) { return static_cast<std::uint8_t>(std::clamp(std::lround(v), 0L, 255L)); }

struct LesionShape {
  int cls;
  double cx, cy, radius, angle, aspect;
  double phase1, phase2;
  std::vector<std::array<double, 3>> blobs;  // VASC sub-disks (x, y, r)

  // Membership test plus a texture code used for shading.
  bool inside(double x, double y) const {
    const double dx = x - cx, dy = y - cy;
    const double ca = std::cos(angle), sa = std::sin(angle);
    const double u = ca * dx + sa * dy, v = -sa * dx + ca * dy;
    const double rho = std::hypot(dx, dy);
    switch (cls) {
      case 0: {
        const double th = std::atan2(dy, dx);
        const double rr = radius * (1.0 + 0.25 * std::sin(3 * th + phase1) + 0.15 * std::sin(5 * th + phase2));
        return rho <= rr;
      }
      case 1:
        return (u * u) / (radius * radius) + (v * v) / (radius * radius * aspect * aspect) <= 1.0;
      case 2:
        return rho <= radius && rho >= 0.55 * radius;
      case 3:
        return std::abs(u) <= 0.85 * radius && std::abs(v) <= 0.85 * radius;
      case 4:
        return (u * u) / (radius * radius) + (v * v) / (0.3 * radius * radius) <= 1.0;
      case 5:
        return rho <= 0.8 * radius;
      case 6:
        for (const auto& b : blobs)
          if (std::hypot(x - b[0], y - b[1]) <= b[2]) return true;
        return false;
    }
    return false;
  }

  Rgb shade(double x, double y, Rng& rng) const {
    Rgb c = kLesionColor[cls];
    const double dx = x - cx, dy = y - cy;
    switch (cls) {
      case 0:
        if (std::sin(0.9 * x + phase1) * std::cos(0.8 * y + phase2) > 0.55) c = {55, 30, 25};
        break;
      case 3:
        if (rng.uniform() < 0.2) c = {240, 200, 190};
        break;
      case 4: {
        const double ca = std::cos(angle), sa = std::sin(angle);
        const double v = -sa * dx + ca * dy;
        if (static_cast<int>(std::floor(v / 2.0)) % 2 == 0) c = {160, 130, 80};
        break;
      }
      case 5:
        if (std::hypot(dx, dy) <= 0.35 * radius) c = {245, 235, 230};
        break;
      default:
        break;
    }
    return c;
  }
};

LesionShape sample_shape(int cls, int side, Rng& rng) {
  LesionShape s;
  s.cls = cls;
  s.cx = side * (0.5 + rng.uniform(-0.1, 0.1));
  s.cy = side * (0.5 + rng.uniform(-0.1, 0.1));
  s.radius = side * rng.uniform(0.2, 0.28);
  s.angle = rng.uniform(0.0, kPi);
  s.aspect = rng.uniform(0.7, 1.0);
  s.phase1 = rng.uniform(0.0, 2 * kPi);
  s.phase2 = rng.uniform(0.0, 2 * kPi);
  if (cls == 6) {
    const int n = 5 + static_cast<int>(rng.below(3));
    for (int i = 0; i < n; ++i) {
      const double th = rng.uniform(0.0, 2 * kPi);
      const double d = rng.uniform(0.0, 0.65) * s.radius;
      s.blobs.push_back({s.cx + d * std::cos(th), s.cy + d * std::sin(th),
                         s.radius * rng.uniform(0.28, 0.38)});
    }
  }
  return s;
}

// Dark quadratic Bezier strokes. Returns the painted-pixel mask.
Mask draw_strokes(Image& img, Rng& rng) {
  const int side = img.rows();
  Mask stroke(img.rows(), img.cols(), 1);
  const int thickness = std::max(1, static_cast<int>(std::lround(side / 80.0)));
  const int n = 2 + static_cast<int>(rng.below(3));
  for (int s = 0; s < n; ++s) {
    double p[3][2];
    for (auto& q : p) {
      q[0] = rng.uniform(-0.1, 1.1) * side;
      q[1] = rng.uniform(-0.1, 1.1) * side;
    }
    const Rgb color{rng.uniform(10, 35), rng.uniform(8, 25), rng.uniform(5, 20)};
    const int steps = 8 * side;
    for (int k = 0; k <= steps; ++k) {
      const double t = static_cast<double>(k) / steps, a = (1 - t) * (1 - t), b = 2 * (1 - t) * t,
                   c = t * t;
      const int x0 = static_cast<int>(std::floor(a * p[0][0] + b * p[1][0] + c * p[2][0]));
      const int y0 = static_cast<int>(std::floor(a * p[0][1] + b * p[1][1] + c * p[2][1]));
      for (int dy = 0; dy < thickness; ++dy)
        for (int dx = 0; dx < thickness; ++dx) {
          const int x = x0 + dx, y = y0 + dy;
          if (x < 0 || y < 0 || x >= side || y >= side || stroke(y, x)) continue;
          stroke(y, x) = 1;
          img(y, x, 0) = clamp8(color.r);
          img(y, x, 1) = clamp8(color.g);
          img(y, x, 2) = clamp8(color.b);
        }
    }
  }
  return stroke;
}

}  // namespace

DatasetManifest generate_synthetic(const SynthSpec& spec) {
  if (spec.n_per_class < 1) throw PipelineError("n_per_class must be >= 1");
  if (spec.image_size < 32) throw PipelineError("image_size must be >= 32");
  if (!(spec.hair_fraction >= 0.0 && spec.hair_fraction <= 1.0))
    throw PipelineError("hair_fraction must lie in [0, 1]");

  const int side = spec.image_size;
  std::vector<ImageRecord> records;
  records.reserve(static_cast<std::size_t>(spec.n_per_class) * kNumClasses);

  for (int cls = 0; cls < kNumClasses; ++cls) {
    std::vector<int> order(spec.n_per_class);
    std::iota(order.begin(), order.end(), 0);
    Rng pick = Rng::derived(spec.seed, 0x4a11, cls);
    pick.shuffle(std::span<int>(order));
    const long n_hairy = std::lround(spec.hair_fraction * spec.n_per_class);
    std::vector<bool> hairy(spec.n_per_class, false);
    for (long i = 0; i < n_hairy; ++i) hairy[order[i]] = true;

    for (int i = 0; i < spec.n_per_class; ++i) {
      Rng rng = Rng::derived(spec.seed, cls, i);
      const LesionShape shape = sample_shape(cls, side, rng);
      const Rgb skin{228 + rng.uniform(-10, 10), 188 + rng.uniform(-10, 10),
                     165 + rng.uniform(-10, 10)};

      auto img = std::make_shared<Image>(side, side, 3);
      auto mask = std::make_shared<Mask>(side, side, 1);
      for (int y = 0; y < side; ++y)
        for (int x = 0; x < side; ++x) {
          const double px = x + 0.5, py = y + 0.5;
          Rgb c = skin;
          double sigma = 4.0;
          if (shape.inside(px, py)) {
            (*mask)(y, x) = 1;
            c = shape.shade(px, py, rng);
            sigma = 6.0;
          }
          (*img)(y, x, 0) = clamp8(c.r + sigma * rng.normal());
          (*img)(y, x, 1) = clamp8(c.g + sigma * rng.normal());
          (*img)(y, x, 2) = clamp8(c.b + sigma * rng.normal());
        }

      ImageRecord r;
      char id[48];
      std::snprintf(id, sizeof id, "syn_%s_%04d", std::string(code_of(label_from_index(cls))).c_str(), i);
      r.id = id;
      r.label = label_from_index(cls);
      r.mask = mask;
      if (hairy[i]) {
        Rng hair_rng = Rng::derived(spec.seed, cls, i, 0x57);
        r.hair_mask = std::make_shared<Mask>(draw_strokes(*img, hair_rng));
        r.hairy = true;
      }
      r.pixels = img;
      records.push_back(std::move(r));
    }
  }
  std::sort(records.begin(), records.end(),
            [](const ImageRecord& a, const ImageRecord& b) { return a.id < b.id; });
  return DatasetManifest(ManifestKind::Synthetic, spec.seed, std::move(records));
}

}  // namespace wonderm
