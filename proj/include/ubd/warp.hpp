#pragma once

#include <algorithm>
#include <cmath>
#include <vector>

#include "ubd/image.hpp"

namespace ubd {

/// Bilinear sample with replicate-border clamping.
inline double sample_bilinear(const ScalarGrid& g, double x, double y) {
  x = std::clamp(x, 0.0, static_cast<double>(g.width - 1));
  y = std::clamp(y, 0.0, static_cast<double>(g.height - 1));
  const int x0 = static_cast<int>(std::floor(x));
  const int y0 = static_cast<int>(std::floor(y));
  const int x1 = std::min(x0 + 1, g.width - 1);
  const int y1 = std::min(y0 + 1, g.height - 1);
  const double fx = x - x0;
  const double fy = y - y0;
  const double top = g.at(x0, y0) * (1.0 - fx) + g.at(x1, y0) * fx;
  const double bottom = g.at(x0, y1) * (1.0 - fx) + g.at(x1, y1) * fx;
  return top * (1.0 - fy) + bottom * fy;
}

inline int nearest_index(double v, int size) {
  return std::clamp(static_cast<int>(std::floor(v + 0.5)), 0, size - 1);
}

/// Center of the centered-coordinate frame shared by affine maps.
inline double grid_center(int extent) { return 0.5 * (extent - 1); }

/// Affine sampling location for pixel (x, y).
inline std::pair<double, double> affine_apply(const AffineTransform2D& t, double x, double y, int width,
                                              int height) {
  const double cx = grid_center(width);
  const double cy = grid_center(height);
  const double xc = x - cx;
  const double yc = y - cy;
  const auto& a = t.linear;
  return {a[0] * xc + a[1] * yc + cx + t.translation[0], a[2] * xc + a[3] * yc + cy + t.translation[1]};
}

inline ScalarGrid resample_grid(const ScalarGrid& g, const DisplacementField& field) {
  ScalarGrid out(g.width, g.height);
  for (int y = 0; y < g.height; ++y) {
    for (int x = 0; x < g.width; ++x) {
      const double dx = field.dx_at(x, y);
      const double dy = field.dy_at(x, y);
      // The zero displacement path stays bit-exact.
      out.at(x, y) = (dx == 0.0 && dy == 0.0) ? g.at(x, y) : sample_bilinear(g, x + dx, y + dy);
    }
  }
  return out;
}

inline Image resample_image(const Image& img, const DisplacementField& field) {
  require_same_dims(img, field, "resample_image");
  return Image::from_clamped(resample_grid(img.grid(), field));
}

/// Nearest-neighbour pull-back of every channel.
inline LabelMask warp_mask(const LabelMask& mask, const DisplacementField& field) {
  require_same_dims(mask, field, "warp_mask");
  const int w = mask.width();
  const int h = mask.height();
  std::vector<LabelMask::Channel> channels;
  channels.reserve(mask.structure_count());
  for (std::size_t c = 0; c < mask.structure_count(); ++c) {
    LabelMask::Channel out(mask.size(), 0);
    const auto& in = mask.channel(c);
    for (int y = 0; y < h; ++y) {
      for (int x = 0; x < w; ++x) {
        const int sx = nearest_index(x + field.dx_at(x, y), w);
        const int sy = nearest_index(y + field.dy_at(x, y), h);
        out[static_cast<std::size_t>(y) * w + x] = in[static_cast<std::size_t>(sy) * w + sx];
      }
    }
    channels.push_back(std::move(out));
  }
  return LabelMask(w, h, mask.structures(), std::move(channels));
}

inline DisplacementField affine_to_field(const AffineTransform2D& t, int width, int height) {
  t.validate();
  ScalarGrid dx(width, height);
  ScalarGrid dy(width, height);
  for (int y = 0; y < height; ++y) {
    for (int x = 0; x < width; ++x) {
      const auto [px, py] = affine_apply(t, x, y, width, height);
      dx.at(x, y) = px - x;
      dy.at(x, y) = py - y;
    }
  }
  return DisplacementField(std::move(dx), std::move(dy));
}

/// result(x) = outer(x) + inner(x + outer(x)); resampling through the result
/// equals resampling through `inner` and then through `outer`.
inline DisplacementField compose_fields(const DisplacementField& outer, const DisplacementField& inner) {
  require_same_dims(outer, inner, "compose_fields");
  ScalarGrid dx(outer.width(), outer.height());
  ScalarGrid dy(outer.width(), outer.height());
  for (int y = 0; y < outer.height(); ++y) {
    for (int x = 0; x < outer.width(); ++x) {
      const double ox = outer.dx_at(x, y);
      const double oy = outer.dy_at(x, y);
      if (ox == 0.0 && oy == 0.0) {
        dx.at(x, y) = inner.dx_at(x, y);
        dy.at(x, y) = inner.dy_at(x, y);
      } else {
        dx.at(x, y) = ox + sample_bilinear(inner.dx(), x + ox, y + oy);
        dy.at(x, y) = oy + sample_bilinear(inner.dy(), x + ox, y + oy);
      }
    }
  }
  return DisplacementField(std::move(dx), std::move(dy));
}

/// Normalized sampled Gaussian, radius ceil(3 sigma).
inline std::vector<double> gaussian_kernel(double sigma) {
  const int radius = static_cast<int>(std::ceil(3.0 * sigma));
  std::vector<double> k(static_cast<std::size_t>(2 * radius + 1));
  double sum = 0.0;
  for (int i = -radius; i <= radius; ++i) {
    const double v = std::exp(-0.5 * (i * i) / (sigma * sigma));
    k[static_cast<std::size_t>(i + radius)] = v;
    sum += v;
  }
  for (double& v : k) v /= sum;
  return k;
}

/// Separable Gaussian blur with replicated borders. Output is clamped to the
/// input range so rounding never leaves the convex hull of the inputs.
inline ScalarGrid gaussian_smooth(const ScalarGrid& g, double sigma) {
  if (!(sigma >= 0.0)) throw InputError("gaussian_smooth: sigma must be >= 0");
  if (sigma == 0.0 || g.size() == 0) return g;
  const auto kernel = gaussian_kernel(sigma);
  const int radius = static_cast<int>(kernel.size() / 2);
  ScalarGrid tmp(g.width, g.height);
  for (int y = 0; y < g.height; ++y) {
    for (int x = 0; x < g.width; ++x) {
      double acc = 0.0;
      for (int i = -radius; i <= radius; ++i) acc += kernel[static_cast<std::size_t>(i + radius)] * g.at_clamped(x + i, y);
      tmp.at(x, y) = acc;
    }
  }
  ScalarGrid out(g.width, g.height);
  for (int y = 0; y < g.height; ++y) {
    for (int x = 0; x < g.width; ++x) {
      double acc = 0.0;
      for (int i = -radius; i <= radius; ++i) acc += kernel[static_cast<std::size_t>(i + radius)] * tmp.at_clamped(x, y + i);
      out.at(x, y) = acc;
    }
  }
  const auto [lo, hi] = std::minmax_element(g.values.begin(), g.values.end());
  for (double& v : out.values) v = std::clamp(v, *lo, *hi);
  return out;
}

inline Image gaussian_smooth(const Image& img, double sigma) {
  return Image::from_clamped(gaussian_smooth(img.grid(), sigma));
}

inline DisplacementField gaussian_smooth(const DisplacementField& f, double sigma) {
  if (sigma == 0.0) return f;
  return DisplacementField(gaussian_smooth(f.dx(), sigma), gaussian_smooth(f.dy(), sigma));
}

/// 2x2 box-average downsampling; odd trailing rows/columns are replicated.
inline ScalarGrid downsample2(const ScalarGrid& g) {
  const int w = std::max(1, (g.width + 1) / 2);
  const int h = std::max(1, (g.height + 1) / 2);
  ScalarGrid out(w, h);
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      out.at(x, y) = 0.25 * (g.at_clamped(2 * x, 2 * y) + g.at_clamped(2 * x + 1, 2 * y) +
                             g.at_clamped(2 * x, 2 * y + 1) + g.at_clamped(2 * x + 1, 2 * y + 1));
    }
  }
  return out;
}

/// Upsamples a coarse field to (width, height), doubling displacements.
inline DisplacementField upsample_field(const DisplacementField& coarse, int width, int height) {
  ScalarGrid dx(width, height);
  ScalarGrid dy(width, height);
  for (int y = 0; y < height; ++y) {
    for (int x = 0; x < width; ++x) {
      const double cx = 0.5 * x - 0.25;
      const double cy = 0.5 * y - 0.25;
      dx.at(x, y) = 2.0 * sample_bilinear(coarse.dx(), cx, cy);
      dy.at(x, y) = 2.0 * sample_bilinear(coarse.dy(), cx, cy);
    }
  }
  return DisplacementField(std::move(dx), std::move(dy));
}

/// Central-difference gradient with replicated borders.
inline std::pair<ScalarGrid, ScalarGrid> gradient(const ScalarGrid& g) {
  ScalarGrid gx(g.width, g.height);
  ScalarGrid gy(g.width, g.height);
  for (int y = 0; y < g.height; ++y) {
    for (int x = 0; x < g.width; ++x) {
      gx.at(x, y) = 0.5 * (g.at_clamped(x + 1, y) - g.at_clamped(x - 1, y));
      gy.at(x, y) = 0.5 * (g.at_clamped(x, y + 1) - g.at_clamped(x, y - 1));
    }
  }
  return {std::move(gx), std::move(gy)};
}

}  // namespace ubd
