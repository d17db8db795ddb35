#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <numbers>
#include <set>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "ubd/error.hpp"

namespace ubd {

inline std::string dims_str(int w, int h) { return std::to_string(w) + "x" + std::to_string(h); }

/// Row-major scalar grid without range restrictions. Used for intermediate
/// quantities (gradients, displacement components, smoothing buffers).
struct ScalarGrid {
  int width = 0;
  int height = 0;
  std::vector<double> values;

  ScalarGrid() = default;
  ScalarGrid(int w, int h, double fill = 0.0)
      : width(w), height(h), values(static_cast<std::size_t>(w) * static_cast<std::size_t>(h), fill) {
    if (w < 0 || h < 0) throw InputError("negative grid dimensions");
  }
  ScalarGrid(int w, int h, std::vector<double> v) : width(w), height(h), values(std::move(v)) {
    if (w < 0 || h < 0) throw InputError("negative grid dimensions");
    if (values.size() != size()) throw InputError("grid buffer length does not match " + dims_str(w, h));
  }

  std::size_t size() const { return static_cast<std::size_t>(width) * static_cast<std::size_t>(height); }
  std::size_t index(int x, int y) const {
    return static_cast<std::size_t>(y) * static_cast<std::size_t>(width) + static_cast<std::size_t>(x);
  }
  double& at(int x, int y) { return values[index(x, y)]; }
  double at(int x, int y) const { return values[index(x, y)]; }
  double at_clamped(int x, int y) const {
    return at(std::clamp(x, 0, width - 1), std::clamp(y, 0, height - 1));
  }
};

/// 2D intensity image with values in [0,1].
class Image {
 public:
  Image() = default;
  Image(int width, int height, std::vector<double> intensities)
      : grid_(width, height, std::move(intensities)) {
    for (double v : grid_.values) {
      if (!std::isfinite(v) || v < 0.0 || v > 1.0) throw InputError("image intensity outside [0,1]");
    }
  }
  static Image filled(int width, int height, double value) {
    return Image(width, height, std::vector<double>(static_cast<std::size_t>(width) * height, value));
  }
  /// Clamps values into [0,1] before validation; for generators that may
  /// overshoot slightly through noise.
  static Image from_clamped(ScalarGrid g) {
    for (double& v : g.values) v = std::isfinite(v) ? std::clamp(v, 0.0, 1.0) : 0.0;
    return Image(g.width, g.height, std::move(g.values));
  }

  int width() const { return grid_.width; }
  int height() const { return grid_.height; }
  std::size_t size() const { return grid_.size(); }
  double at(int x, int y) const { return grid_.at(x, y); }
  std::span<const double> pixels() const { return grid_.values; }
  const ScalarGrid& grid() const { return grid_; }

  friend bool operator==(const Image& a, const Image& b) {
    return a.grid_.width == b.grid_.width && a.grid_.height == b.grid_.height && a.grid_.values == b.grid_.values;
  }

 private:
  ScalarGrid grid_;
};

/// Multi-structure binary mask. Channels are independent and may overlap.
class LabelMask {
 public:
  using Channel = std::vector<std::uint8_t>;

  LabelMask() = default;
  LabelMask(int width, int height, std::vector<std::string> structures, std::vector<Channel> channels)
      : width_(width), height_(height), structures_(std::move(structures)), channels_(std::move(channels)) {
    if (width < 0 || height < 0) throw InputError("negative mask dimensions");
    if (structures_.size() != channels_.size()) throw InputError("structure count does not match channel count");
    std::set<std::string> seen;
    for (const auto& s : structures_) {
      if (s.empty()) throw InputError("empty structure name");
      if (!seen.insert(s).second) throw InputError("duplicate structure name '" + s + "'");
    }
    const std::size_t n = static_cast<std::size_t>(width) * static_cast<std::size_t>(height);
    for (std::size_t c = 0; c < channels_.size(); ++c) {
      if (channels_[c].size() != n) throw InputError("channel '" + structures_[c] + "' has wrong length");
      for (auto v : channels_[c]) {
        if (v > 1) throw InputError("channel '" + structures_[c] + "' is not binary");
      }
    }
  }
  static LabelMask empty(int width, int height, std::vector<std::string> structures) {
    std::vector<Channel> ch(structures.size(), Channel(static_cast<std::size_t>(width) * height, 0));
    return LabelMask(width, height, std::move(structures), std::move(ch));
  }

  int width() const { return width_; }
  int height() const { return height_; }
  std::size_t size() const { return static_cast<std::size_t>(width_) * static_cast<std::size_t>(height_); }
  std::size_t structure_count() const { return structures_.size(); }
  const std::vector<std::string>& structures() const { return structures_; }
  const Channel& channel(std::size_t i) const { return channels_.at(i); }
  std::uint8_t at(std::size_t channel, int x, int y) const {
    return channels_[channel][static_cast<std::size_t>(y) * width_ + x];
  }
  std::size_t count(std::size_t channel) const {
    std::size_t n = 0;
    for (auto v : channels_.at(channel)) n += v;
    return n;
  }

  friend bool operator==(const LabelMask& a, const LabelMask& b) {
    return a.width_ == b.width_ && a.height_ == b.height_ && a.structures_ == b.structures_ &&
           a.channels_ == b.channels_;
  }

 private:
  int width_ = 0;
  int height_ = 0;
  std::vector<std::string> structures_;
  std::vector<Channel> channels_;
};

/// Orientation-preserving 2D affine map in image-center-origin pixel
/// coordinates: p = A (x - c) + c + t.
struct AffineTransform2D {
  std::array<double, 4> linear{1.0, 0.0, 0.0, 1.0};  // row-major a00 a01 a10 a11
  std::array<double, 2> translation{0.0, 0.0};

  static AffineTransform2D identity() { return {}; }
  static AffineTransform2D translate(double tx, double ty) {
    AffineTransform2D t;
    t.translation = {tx, ty};
    return t;
  }
  static AffineTransform2D rotation_degrees(double deg, double tx = 0.0, double ty = 0.0) {
    const double r = deg * std::numbers::pi / 180.0;
    AffineTransform2D t;
    t.linear = {std::cos(r), -std::sin(r), std::sin(r), std::cos(r)};
    t.translation = {tx, ty};
    return t;
  }

  double determinant() const { return linear[0] * linear[3] - linear[1] * linear[2]; }
  bool is_valid() const {
    for (double v : linear) {
      if (!std::isfinite(v)) return false;
    }
    for (double v : translation) {
      if (!std::isfinite(v)) return false;
    }
    return determinant() > 0.0;
  }
  void validate() const {
    if (!is_valid()) throw InputError("affine transform is non-finite or not orientation-preserving");
  }
  /// Rotation angle of the linear part in degrees.
  double rotation_degrees_estimate() const { return std::atan2(linear[2], linear[0]) * 180.0 / std::numbers::pi; }
};

/// Dense per-pixel displacement (pull-back: output(x) = input(x + d(x))).
class DisplacementField {
 public:
  DisplacementField() = default;
  DisplacementField(int width, int height) : dx_(width, height, 0.0), dy_(width, height, 0.0) {}
  DisplacementField(ScalarGrid dx, ScalarGrid dy) : dx_(std::move(dx)), dy_(std::move(dy)) {
    if (dx_.width != dy_.width || dx_.height != dy_.height) throw InputError("field component dimensions differ");
    for (std::size_t i = 0; i < dx_.size(); ++i) {
      if (!std::isfinite(dx_.values[i]) || !std::isfinite(dy_.values[i]))
        throw ComputationError("displacement field contains non-finite values");
    }
  }
  static DisplacementField uniform(int width, int height, double dx, double dy) {
    return DisplacementField(ScalarGrid(width, height, dx), ScalarGrid(width, height, dy));
  }

  int width() const { return dx_.width; }
  int height() const { return dx_.height; }
  std::size_t size() const { return dx_.size(); }
  const ScalarGrid& dx() const { return dx_; }
  const ScalarGrid& dy() const { return dy_; }
  double dx_at(int x, int y) const { return dx_.at(x, y); }
  double dy_at(int x, int y) const { return dy_.at(x, y); }

  double max_magnitude() const {
    double m = 0.0;
    for (std::size_t i = 0; i < size(); ++i) m = std::max(m, std::hypot(dx_.values[i], dy_.values[i]));
    return m;
  }
  bool is_zero() const {
    for (std::size_t i = 0; i < size(); ++i) {
      if (dx_.values[i] != 0.0 || dy_.values[i] != 0.0) return false;
    }
    return true;
  }

  friend bool operator==(const DisplacementField& a, const DisplacementField& b) {
    return a.dx_.width == b.dx_.width && a.dx_.height == b.dx_.height && a.dx_.values == b.dx_.values &&
           a.dy_.values == b.dy_.values;
  }

 private:
  ScalarGrid dx_;
  ScalarGrid dy_;
};

template <typename A, typename B>
void require_same_dims(const A& a, const B& b, const char* what) {
  if (a.width() != b.width() || a.height() != b.height()) {
    throw InputError(std::string(what) + ": dimension mismatch " + dims_str(a.width(), a.height()) + " vs " +
                     dims_str(b.width(), b.height()));
  }
}

}  // namespace ubd
