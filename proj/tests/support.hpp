#pragma once

#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "ubd/image.hpp"
#include "ubd/random.hpp"

namespace ubd::test {

inline LabelMask single_channel(int w, int h, const std::vector<std::pair<int, int>>& on,
                                const std::string& name = "s") {
  LabelMask::Channel ch(static_cast<std::size_t>(w * h), 0);
  for (auto [x, y] : on) ch[static_cast<std::size_t>(y * w + x)] = 1;
  return LabelMask(w, h, {name}, {ch});
}

inline LabelMask rect_mask(int w, int h, int x0, int y0, int x1, int y1, const std::string& name = "s") {
  std::vector<std::pair<int, int>> on;
  for (int y = y0; y < y1; ++y)
    for (int x = x0; x < x1; ++x) on.emplace_back(x, y);
  return single_channel(w, h, on, name);
}

inline LabelMask disk_mask(int w, int h, double cx, double cy, double r, const std::string& name = "s") {
  std::vector<std::pair<int, int>> on;
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x)
      if ((x - cx) * (x - cx) + (y - cy) * (y - cy) <= r * r) on.emplace_back(x, y);
  return single_channel(w, h, on, name);
}

inline LabelMask random_mask(Rng& rng, int w, int h, std::size_t structures, double density) {
  std::vector<std::string> names;
  std::vector<LabelMask::Channel> channels;
  for (std::size_t s = 0; s < structures; ++s) {
    names.push_back("s" + std::to_string(s));
    LabelMask::Channel ch(static_cast<std::size_t>(w * h));
    for (auto& v : ch) v = rng.uniform() < density ? 1 : 0;
    channels.push_back(std::move(ch));
  }
  return LabelMask(w, h, names, channels);
}

inline Image random_image(Rng& rng, int w, int h) {
  std::vector<double> v(static_cast<std::size_t>(w * h));
  for (auto& p : v) p = rng.uniform();
  return Image(w, h, v);
}

inline DisplacementField random_field(Rng& rng, int w, int h, double amplitude) {
  ScalarGrid dx(w, h);
  ScalarGrid dy(w, h);
  for (auto& v : dx.values) v = rng.uniform(-amplitude, amplitude);
  for (auto& v : dy.values) v = rng.uniform(-amplitude, amplitude);
  return DisplacementField(dx, dy);
}

/// Smooth intensity blob centred at (cx, cy).
inline Image blob_image(int w, int h, double cx, double cy, double r) {
  std::vector<double> v(static_cast<std::size_t>(w * h));
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      const double d = std::hypot(x - cx, y - cy);
      v[static_cast<std::size_t>(y * w + x)] = 0.1 + 0.8 / (1.0 + std::exp((d - r) / 1.2));
    }
  return Image(w, h, v);
}

}  // namespace ubd::test

#include "ubd/phantom.hpp"
#include "ubd/warp.hpp"

namespace ubd::test {

/// Smooth Gaussian bump displacement with peak magnitude `peak` px pointing
/// along (0.8, -0.6), centred at (cx, cy).
inline DisplacementField bump_field(int w, int h, double cx, double cy, double sigma, double peak) {
  ScalarGrid bx(w, h);
  ScalarGrid by(w, h);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      const double g = peak * std::exp(-((x - cx) * (x - cx) + (y - cy) * (y - cy)) / (2.0 * sigma * sigma));
      bx.values[bx.index(x, y)] = 0.8 * g;
      by.values[by.index(x, y)] = -0.6 * g;
    }
  return DisplacementField(bx, by);
}

/// Mean endpoint error of `got` against `want` over pixels where any channel
/// of `region` is set.
inline double mean_endpoint_error(const DisplacementField& got, const DisplacementField& want, const LabelMask& region) {
  double sum = 0.0;
  int n = 0;
  for (int y = 0; y < got.height(); ++y)
    for (int x = 0; x < got.width(); ++x) {
      bool fg = false;
      for (std::size_t c = 0; c < region.structure_count(); ++c) fg = fg || region.at(c, x, y);
      if (!fg) continue;
      sum += std::hypot(got.dx_at(x, y) - want.dx_at(x, y), got.dy_at(x, y) - want.dy_at(x, y));
      ++n;
    }
  return n ? sum / n : 0.0;
}

inline Phantom registration_phantom() { return generate_phantom(PhantomSpec::sample(11, Sex::male, 64, 0.02)); }

}  // namespace ubd::test
