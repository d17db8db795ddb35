#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <numbers>
#include <string>
#include <utility>
#include <vector>

#include "ubd/image.hpp"
#include "ubd/random.hpp"
#include "ubd/warp.hpp"

namespace ubd {

enum class Sex { male, female };

inline const char* to_string(Sex s) { return s == Sex::male ? "M" : "F"; }

/// Axis-aligned ellipse in 64-pixel reference units.
struct Ellipse {
  double cx = 0.0;
  double cy = 0.0;
  double rx = 1.0;
  double ry = 1.0;
};

/// Shape changes applied on top of the subject geometry for one sex.
struct SexOffsets {
  double thorax_widen = 0.0;  // added to thorax rx
  double lung_spread = 0.0;   // each lung moves outward by this much
  double apex_shift = 0.0;   // vertical shift of the lungs (negative = higher)
  double heart_shift = 0.0;  // horizontal shift of the heart
};

struct ShapeParams {
  Ellipse thorax{32.0, 32.5, 25.0, 26.0};
  Ellipse left_lung{20.5, 30.0, 8.5, 15.0};
  Ellipse right_lung{43.5, 30.0, 8.5, 15.0};
  Ellipse heart{35.0, 41.0, 7.5, 6.5};
  double rotation_deg = 0.0;
  SexOffsets male{1.5, 0.75, 0.0, 0.75};
  SexOffsets female{-1.0, -0.25, -1.5, -0.5};
};

struct PhantomSpec {
  std::uint64_t seed = 0;
  int size = 64;
  Sex sex = Sex::male;
  ShapeParams shape;
  double noise_level = 0.02;

  /// Subject geometry drawn from `seed`: per-subject jitter of positions,
  /// sizes and a small in-plane rotation.
  static PhantomSpec sample(std::uint64_t seed, Sex sex, int size = 64, double noise_level = 0.02) {
    PhantomSpec spec;
    spec.seed = seed;
    spec.size = size;
    spec.sex = sex;
    spec.noise_level = noise_level;
    Rng rng(derive_seed(seed, {0x5ba9e}));
    ShapeParams& s = spec.shape;
    const double gx = rng.uniform(-1.5, 1.5);
    const double gy = rng.uniform(-1.5, 1.5);
    const double body = rng.uniform(0.94, 1.06);
    for (Ellipse* e : {&s.thorax, &s.left_lung, &s.right_lung, &s.heart}) {
      e->cx = 32.0 + (e->cx - 32.0) * body + gx;
      e->cy = 32.0 + (e->cy - 32.0) * body + gy;
      e->rx *= body;
      e->ry *= body;
    }
    const double lung_x = rng.uniform(0.92, 1.08);
    const double lung_y = rng.uniform(0.92, 1.08);
    for (Ellipse* e : {&s.left_lung, &s.right_lung}) {
      e->rx *= lung_x;
      e->ry *= lung_y;
      e->cy += rng.uniform(-1.0, 1.0);
    }
    s.heart.rx *= rng.uniform(0.9, 1.1);
    s.heart.ry *= rng.uniform(0.9, 1.1);
    s.heart.cx += rng.uniform(-1.5, 1.5);
    s.heart.cy += rng.uniform(-1.0, 1.0);
    s.rotation_deg = rng.uniform(-3.0, 3.0);
    return spec;
  }
};

namespace detail {

struct ResolvedShapes {
  Ellipse thorax, left_lung, right_lung, heart;
};

inline ResolvedShapes resolve(const PhantomSpec& spec) {
  const ShapeParams& p = spec.shape;
  const SexOffsets& o = spec.sex == Sex::male ? p.male : p.female;
  ResolvedShapes r{p.thorax, p.left_lung, p.right_lung, p.heart};
  r.thorax.rx += o.thorax_widen;
  r.left_lung.cx -= o.lung_spread;
  r.right_lung.cx += o.lung_spread;
  for (Ellipse* e : {&r.left_lung, &r.right_lung}) e->cy += o.apex_shift;
  r.heart.cx += o.heart_shift;
  const double k = spec.size / 64.0;
  for (Ellipse* e : {&r.thorax, &r.left_lung, &r.right_lung, &r.heart}) {
    e->cx = (e->cx + 0.5) * k - 0.5;
    e->cy = (e->cy + 0.5) * k - 0.5;
    e->rx *= k;
    e->ry *= k;
  }
  return r;
}

/// Signed distance-like value in pixels (negative inside).
inline double ellipse_distance(const Ellipse& e, double x, double y) {
  const double nx = (x - e.cx) / e.rx;
  const double ny = (y - e.cy) / e.ry;
  return (std::sqrt(nx * nx + ny * ny) - 1.0) * std::min(e.rx, e.ry);
}

inline double soft_inside(const Ellipse& e, double x, double y) {
  return 1.0 / (1.0 + std::exp(ellipse_distance(e, x, y) / 0.6));
}

/// Bounding box check of the ellipse after rotating its frame by `rot` radians
/// about the image center.
inline void require_inside(const Ellipse& e, int size, double rot, const char* name) {
  if (!(e.rx > 0.0) || !(e.ry > 0.0)) throw InputError(std::string("phantom: ") + name + " axes must be positive");
  const double c = 0.5 * (size - 1);
  const double cr = std::cos(rot);
  const double sr = std::sin(rot);
  // Pixel-space center: inverse of the frame rotation used when rendering.
  const double px = cr * (e.cx - c) - sr * (e.cy - c) + c;
  const double py = sr * (e.cx - c) + cr * (e.cy - c) + c;
  const double hx = std::hypot(e.rx * cr, e.ry * sr);
  const double hy = std::hypot(e.rx * sr, e.ry * cr);
  if (px - hx < 0.0 || py - hy < 0.0 || px + hx > size - 1 || py + hy > size - 1)
    throw InputError(std::string("phantom: ") + name + " does not fit inside the image");
}

}  // namespace detail

inline const std::vector<std::string>& phantom_structures() {
  static const std::vector<std::string> names{"lung", "heart"};
  return names;
}

struct Phantom {
  Image image;
  LabelMask mask;
};

/// Chest-like phantom: dark lungs and a bright heart inside a mid-gray thorax,
/// plus Gaussian noise, quantized to 8 bits so it round-trips through files.
inline Phantom generate_phantom(const PhantomSpec& spec) {
  if (spec.size < 16) throw InputError("phantom: size must be >= 16");
  if (!(spec.noise_level >= 0.0)) throw InputError("phantom: noise_level must be >= 0");
  const auto r = detail::resolve(spec);
  const double rot = spec.shape.rotation_deg * std::numbers::pi / 180.0;
  detail::require_inside(r.thorax, spec.size, rot, "thorax");
  detail::require_inside(r.left_lung, spec.size, rot, "left lung");
  detail::require_inside(r.right_lung, spec.size, rot, "right lung");
  detail::require_inside(r.heart, spec.size, rot, "heart");

  const int n = spec.size;
  const double c = grid_center(n);
  const double cr = std::cos(rot);
  const double sr = std::sin(rot);
  Rng noise(derive_seed(spec.seed, {0x4015e}));

  ScalarGrid img(n, n);
  std::vector<LabelMask::Channel> channels(2, LabelMask::Channel(static_cast<std::size_t>(n) * n, 0));
  for (int y = 0; y < n; ++y) {
    for (int x = 0; x < n; ++x) {
      // Shapes live in a frame rotated about the image center.
      const double u = cr * (x - c) + sr * (y - c) + c;
      const double v = -sr * (x - c) + cr * (y - c) + c;
      double val = 0.08 + 0.04 * v / n;
      val += (0.50 + 0.05 * u / n - val) * detail::soft_inside(r.thorax, u, v);
      const double lung = std::max(detail::soft_inside(r.left_lung, u, v), detail::soft_inside(r.right_lung, u, v));
      val += (0.18 - val) * lung;
      val += (0.82 - val) * detail::soft_inside(r.heart, u, v);
      if (spec.noise_level > 0.0) val += spec.noise_level * noise.normal();
      img.at(x, y) = std::round(std::clamp(val, 0.0, 1.0) * 255.0) / 255.0;
      const std::size_t i = static_cast<std::size_t>(y) * n + x;
      channels[0][i] = (detail::ellipse_distance(r.left_lung, u, v) < 0.0 ||
                        detail::ellipse_distance(r.right_lung, u, v) < 0.0)
                           ? 1
                           : 0;
      channels[1][i] = detail::ellipse_distance(r.heart, u, v) < 0.0 ? 1 : 0;
    }
  }
  return {Image::from_clamped(std::move(img)), LabelMask(n, n, phantom_structures(), std::move(channels))};
}

// ---------------------------------------------------------------------------
// Degradation: emulated segmenters of graded quality.

inline constexpr int kDegradationLevels = 12;

struct DegradationLevel {
  int level = kDegradationLevels;
  double erosion_radius = 0.0;    // pixels at 64 px
  double jitter_amplitude = 0.0;  // pixels at 64 px
  double drop_probability = 0.0;

  /// Severity schedule: level 1 is the worst emulated checkpoint, level 12 is
  /// the perfect one.
  static DegradationLevel from_level(int level) {
    if (level < 1 || level > kDegradationLevels) throw InputError("degradation level must be in 1..12");
    const double s = static_cast<double>(kDegradationLevels - level) / (kDegradationLevels - 1);
    return {level, 3.2 * s, level == kDegradationLevels ? 0.0 : 0.8 + 1.2 * s, 0.04 * s * s};
  }
};

/// Exact squared Euclidean distance to the nearest zero pixel (separable
/// lower-envelope transform). Pixels beyond the image border count as zero.
inline std::vector<double> squared_distance_to_background(const LabelMask::Channel& ch, int w, int h) {
  constexpr double far = 1e20;
  std::vector<double> d(ch.size());
  for (std::size_t i = 0; i < ch.size(); ++i) d[i] = ch[i] ? far : 0.0;

  auto pass = [](std::vector<double>& f) {
    constexpr double inf = std::numeric_limits<double>::infinity();
    // f is padded with zeros at both ends (border = background).
    const int n = static_cast<int>(f.size());
    std::vector<double> out(f.size());
    std::vector<int> v(f.size());
    std::vector<double> z(f.size() + 1);
    int k = 0;
    v[0] = 0;
    z[0] = -inf;
    z[1] = inf;
    for (int q = 1; q < n; ++q) {
      double s = ((f[q] + q * q) - (f[v[k]] + v[k] * v[k])) / (2.0 * q - 2.0 * v[k]);
      while (s <= z[k]) {
        --k;
        s = ((f[q] + q * q) - (f[v[k]] + v[k] * v[k])) / (2.0 * q - 2.0 * v[k]);
      }
      ++k;
      v[k] = q;
      z[k] = s;
      z[k + 1] = inf;
    }
    k = 0;
    for (int q = 0; q < n; ++q) {
      while (z[k + 1] < q) ++k;
      out[q] = (q - v[k]) * (q - v[k]) + f[v[k]];
    }
    f = std::move(out);
  };

  std::vector<double> line;
  for (int y = 0; y < h; ++y) {
    line.assign(static_cast<std::size_t>(w) + 2, 0.0);
    for (int x = 0; x < w; ++x) line[x + 1] = d[static_cast<std::size_t>(y) * w + x];
    pass(line);
    for (int x = 0; x < w; ++x) d[static_cast<std::size_t>(y) * w + x] = line[x + 1];
  }
  for (int x = 0; x < w; ++x) {
    line.assign(static_cast<std::size_t>(h) + 2, 0.0);
    for (int y = 0; y < h; ++y) line[y + 1] = d[static_cast<std::size_t>(y) * w + x];
    pass(line);
    for (int y = 0; y < h; ++y) d[static_cast<std::size_t>(y) * w + x] = line[y + 1];
  }
  return d;
}

/// Keeps foreground pixels farther than `radius` from the background.
inline LabelMask::Channel erode_channel(const LabelMask::Channel& ch, int w, int h, double radius) {
  if (radius <= 0.0) return ch;
  const auto d2 = squared_distance_to_background(ch, w, h);
  LabelMask::Channel out(ch.size(), 0);
  for (std::size_t i = 0; i < ch.size(); ++i) out[i] = (ch[i] && d2[i] > radius * radius) ? 1 : 0;
  return out;
}

inline LabelMask erode(const LabelMask& mask, double radius) {
  std::vector<LabelMask::Channel> ch;
  for (std::size_t c = 0; c < mask.structure_count(); ++c)
    ch.push_back(erode_channel(mask.channel(c), mask.width(), mask.height(), radius));
  return LabelMask(mask.width(), mask.height(), mask.structures(), std::move(ch));
}

/// Signed distance to the mask boundary in pixels, positive inside. Boundary
/// pixels sit half a pixel from the edge on either side.
inline std::vector<double> signed_distance(const LabelMask::Channel& ch, int w, int h) {
  LabelMask::Channel inverted(ch.size());
  for (std::size_t i = 0; i < ch.size(); ++i) inverted[i] = ch[i] ? 0 : 1;
  const auto inside = squared_distance_to_background(ch, w, h);
  const auto outside = squared_distance_to_background(inverted, w, h);
  std::vector<double> sd(ch.size());
  for (std::size_t i = 0; i < ch.size(); ++i)
    sd[i] = ch[i] ? std::sqrt(inside[i]) - 0.5 : 0.5 - std::sqrt(outside[i]);
  return sd;
}

/// Corrupts a ground-truth mask: the boundary is pulled inward by
/// `erosion_radius` and perturbed by a smooth random offset of up to
/// `jitter_amplitude`; whole structures are erased with `drop_probability`.
/// Level 12 is the identity.
inline LabelMask degrade(const LabelMask& gt, const DegradationLevel& level, std::uint64_t seed) {
  if (level.level < 1 || level.level > kDegradationLevels) throw InputError("degradation level must be in 1..12");
  if (level.erosion_radius <= 0.0 && level.jitter_amplitude <= 0.0 && level.drop_probability <= 0.0) return gt;
  const int w = gt.width();
  const int h = gt.height();
  const double k = std::max(w, h) / 64.0;
  std::vector<LabelMask::Channel> out;
  for (std::size_t c = 0; c < gt.structure_count(); ++c) {
    Rng rng(derive_seed(seed, {c}));
    const bool drop = rng.uniform() < level.drop_probability;
    const auto sd = signed_distance(gt.channel(c), w, h);
    std::vector<double> offset(sd.size(), 0.0);
    if (level.jitter_amplitude > 0.0) {
      ScalarGrid noise(w, h);
      for (auto& v : noise.values) v = rng.uniform(-1.0, 1.0);
      noise = gaussian_smooth(noise, 3.0 * k);
      double peak = 0.0;
      for (double v : noise.values) peak = std::max(peak, std::abs(v));
      const double scale = peak > 0.0 ? level.jitter_amplitude * k / peak : 0.0;
      for (std::size_t i = 0; i < sd.size(); ++i) offset[i] = noise.values[i] * scale;
    }
    LabelMask::Channel ch(sd.size(), 0);
    if (!drop) {
      const double r = level.erosion_radius * k;
      for (std::size_t i = 0; i < sd.size(); ++i) ch[i] = sd[i] > r + offset[i] ? 1 : 0;
    }
    out.push_back(std::move(ch));
  }
  return LabelMask(w, h, gt.structures(), std::move(out));
}

}  // namespace ubd
