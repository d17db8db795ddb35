#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <functional>
#include <limits>
#include <string>
#include <vector>

#include "ubd/image.hpp"
#include "ubd/warp.hpp"

namespace ubd {

struct RegistrationConfig {
  int pyramid_levels = 3;
  int affine_iters_per_level = 100;
  double affine_step = 0.5;  // initial step, in pixels of induced motion
  int demons_iters_per_level = 50;
  double demons_sigma_fluid = 1.0;
  double demons_sigma_diffusion = 1.5;
  double demons_max_step = 1.25;
  double convergence_tol = 1e-5;

  void validate() const {
    if (pyramid_levels < 1 || affine_iters_per_level < 1 || demons_iters_per_level < 1)
      throw InputError("registration config: iteration and level counts must be >= 1");
    if (!(demons_sigma_fluid >= 0.0) || !(demons_sigma_diffusion >= 0.0))
      throw InputError("registration config: sigmas must be >= 0");
    if (!(demons_max_step > 0.0)) throw InputError("registration config: demons_max_step must be > 0");
    if (!(convergence_tol > 0.0)) throw InputError("registration config: convergence_tol must be > 0");
    if (!(affine_step > 0.0)) throw InputError("registration config: affine_step must be > 0");
  }
};

struct IterationCounts {
  int affine = 0;
  int deformable = 0;
};

struct RegistrationResult {
  AffineTransform2D affine;
  DisplacementField field;  // total atlas->reference pull-back field
  double final_ssd = 0.0;
  IterationCounts iterations_used;
};

/// Numerical failure inside a solver stage; carries where it happened.
class RegistrationError : public ComputationError {
 public:
  RegistrationError(std::string stage, int level, const std::string& what)
      : ComputationError(stage + " registration failed at pyramid level " + std::to_string(level) + ": " + what),
        stage_(std::move(stage)),
        level_(level) {}
  const std::string& stage() const { return stage_; }
  int level() const { return level_; }

 private:
  std::string stage_;
  int level_;
};

/// Observes each demons iteration: (pyramid level, iteration, largest update
/// magnitude applied to the field).
using DemonsObserver = std::function<void(int level, int iteration, double max_update)>;

inline double ssd(const ScalarGrid& a, const ScalarGrid& b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.values.size(); ++i) {
    const double d = a.values[i] - b.values[i];
    s += d * d;
  }
  return s;
}

inline double ssd(const Image& a, const Image& b) {
  require_same_dims(a, b, "ssd");
  return ssd(a.grid(), b.grid());
}

namespace detail {

/// Image pyramid, index 0 = full resolution.
inline std::vector<ScalarGrid> build_pyramid(const ScalarGrid& g, int levels) {
  std::vector<ScalarGrid> p{g};
  for (int l = 1; l < levels; ++l) {
    if (p.back().width < 8 || p.back().height < 8) break;
    p.push_back(downsample2(p.back()));
  }
  return p;
}

inline AffineTransform2D scale_translation(AffineTransform2D t, double factor) {
  t.translation[0] *= factor;
  t.translation[1] *= factor;
  return t;
}

/// SSD of the affinely resampled moving grid against fixed, optionally with
/// the gradient with respect to (a00, a01, a10, a11, tx, ty).
inline double affine_cost(const ScalarGrid& moving, const ScalarGrid& mgx, const ScalarGrid& mgy,
                          const ScalarGrid& fixed, const AffineTransform2D& t, std::array<double, 6>* grad) {
  const double cx = grid_center(fixed.width);
  const double cy = grid_center(fixed.height);
  const auto& a = t.linear;
  double cost = 0.0;
  std::array<double, 6> g{};
  for (int y = 0; y < fixed.height; ++y) {
    const double yc = y - cy;
    for (int x = 0; x < fixed.width; ++x) {
      const double xc = x - cx;
      const double px = a[0] * xc + a[1] * yc + cx + t.translation[0];
      const double py = a[2] * xc + a[3] * yc + cy + t.translation[1];
      const double r = sample_bilinear(moving, px, py) - fixed.at(x, y);
      cost += r * r;
      if (grad) {
        const double gx = sample_bilinear(mgx, px, py);
        const double gy = sample_bilinear(mgy, px, py);
        g[0] += 2.0 * r * gx * xc;
        g[1] += 2.0 * r * gx * yc;
        g[2] += 2.0 * r * gy * xc;
        g[3] += 2.0 * r * gy * yc;
        g[4] += 2.0 * r * gx;
        g[5] += 2.0 * r * gy;
      }
    }
  }
  if (grad) *grad = g;
  return cost;
}

/// Relative SSD improvement over the trailing window has stalled.
inline bool stalled(const std::vector<double>& history, double tol, std::size_t window = 5) {
  if (history.empty()) return false;
  if (history.back() == 0.0) return true;
  if (history.size() <= window) return false;
  const double before = history[history.size() - 1 - window];
  if (before <= 0.0) return true;
  return (before - history.back()) / before < tol;
}

/// Per-level affine descent: normalized gradient steps in a scaled parameter
/// space (1 unit ~ 1 px of motion at the image edge) with step halving on
/// rejection. Returns the best iterate seen.
inline AffineTransform2D descend_affine_level(const ScalarGrid& moving, const ScalarGrid& fixed,
                                              AffineTransform2D start, const RegistrationConfig& cfg, int level,
                                              int& iterations) {
  const auto [mgx, mgy] = gradient(moving);
  const double radius = 0.5 * std::max(fixed.width, fixed.height);
  AffineTransform2D current = start;
  double current_cost = affine_cost(moving, mgx, mgy, fixed, current, nullptr);
  double step = cfg.affine_step;
  std::vector<double> history{current_cost};
  for (int it = 0; it < cfg.affine_iters_per_level; ++it) {
    if (stalled(history, cfg.convergence_tol) || step < 1e-4) break;
    std::array<double, 6> g{};
    affine_cost(moving, mgx, mgy, fixed, current, &g);
    for (double v : g) {
      if (!std::isfinite(v)) throw RegistrationError("affine", level, "non-finite gradient");
    }
    // Gradient in scaled coordinates q_lin = a * radius, q_t = t.
    std::array<double, 6> gs{};
    for (int i = 0; i < 4; ++i) gs[i] = g[i] / radius;
    gs[4] = g[4];
    gs[5] = g[5];
    double norm = 0.0;
    for (double v : gs) norm += v * v;
    norm = std::sqrt(norm);
    ++iterations;
    if (norm == 0.0) break;
    AffineTransform2D trial = current;
    for (int i = 0; i < 4; ++i) trial.linear[i] -= step * gs[i] / norm / radius;
    trial.translation[0] -= step * gs[4] / norm;
    trial.translation[1] -= step * gs[5] / norm;
    const double trial_cost =
        trial.is_valid() ? affine_cost(moving, mgx, mgy, fixed, trial, nullptr) : current_cost + 1.0;
    if (!std::isfinite(trial_cost)) throw RegistrationError("affine", level, "non-finite cost");
    if (trial_cost < current_cost) {
      current = trial;
      current_cost = trial_cost;
      step *= 1.2;
    } else {
      step *= 0.5;
    }
    history.push_back(current_cost);
  }
  return current;
}

/// Total pull-back displacement for a deformable refinement `v` applied before
/// the affine map: x -> x + v(x) -> A(x + v(x)).
inline DisplacementField compose_with_affine(const DisplacementField& v, const AffineTransform2D& t) {
  const int w = v.width();
  const int h = v.height();
  ScalarGrid dx(w, h);
  ScalarGrid dy(w, h);
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      const auto [px, py] = affine_apply(t, x + v.dx_at(x, y), y + v.dy_at(x, y), w, h);
      dx.at(x, y) = px - x;
      dy.at(x, y) = py - y;
    }
  }
  return DisplacementField(std::move(dx), std::move(dy));
}

}  // namespace detail

/// Gradient-descent affine alignment of `moving` onto `fixed` minimizing SSD
/// over a coarse-to-fine pyramid. Never returns a transform worse than the
/// identity.
inline AffineTransform2D register_affine(const Image& moving, const Image& fixed, const RegistrationConfig& cfg,
                                         int* iterations_used = nullptr) {
  require_same_dims(moving, fixed, "register_affine");
  cfg.validate();
  const auto mp = detail::build_pyramid(moving.grid(), cfg.pyramid_levels);
  const auto fp = detail::build_pyramid(fixed.grid(), cfg.pyramid_levels);
  const int top = static_cast<int>(mp.size()) - 1;
  AffineTransform2D t = AffineTransform2D::identity();
  int iterations = 0;
  for (int level = top; level >= 0; --level) {
    const double scale = std::ldexp(1.0, -level);
    AffineTransform2D lt = detail::scale_translation(t, scale);
    lt = detail::descend_affine_level(mp[static_cast<std::size_t>(level)], fp[static_cast<std::size_t>(level)], lt,
                                      cfg, level, iterations);
    t = detail::scale_translation(lt, 1.0 / scale);
  }
  if (iterations_used) *iterations_used = iterations;
  const auto [gx, gy] = gradient(moving.grid());
  const double identity_cost = ssd(moving, fixed);
  const double final_cost = detail::affine_cost(moving.grid(), gx, gy, fixed.grid(), t, nullptr);
  if (!(final_cost <= identity_cost)) return AffineTransform2D::identity();
  return t;
}

/// Demons refinement starting from `init`. The returned field is the affine
/// field composed with the deformable refinement.
inline RegistrationResult register_deformable(const Image& moving, const Image& fixed, const AffineTransform2D& init,
                                              const RegistrationConfig& cfg,
                                              const DemonsObserver& observer = nullptr) {
  require_same_dims(moving, fixed, "register_deformable");
  cfg.validate();
  init.validate();
  const auto mp = detail::build_pyramid(moving.grid(), cfg.pyramid_levels);
  const auto fp = detail::build_pyramid(fixed.grid(), cfg.pyramid_levels);
  const int top = static_cast<int>(mp.size()) - 1;

  const DisplacementField affine_only = affine_to_field(init, fixed.width(), fixed.height());
  const double affine_ssd = ssd(resample_grid(moving.grid(), affine_only), fixed.grid());

  DisplacementField v;
  DisplacementField best_v;
  double best_ssd = 0.0;
  int iterations = 0;
  for (int level = top; level >= 0; --level) {
    const ScalarGrid& m = mp[static_cast<std::size_t>(level)];
    const ScalarGrid& f = fp[static_cast<std::size_t>(level)];
    const AffineTransform2D lt = detail::scale_translation(init, std::ldexp(1.0, -level));
    v = level == top ? DisplacementField(f.width, f.height) : upsample_field(v, f.width, f.height);
    const auto [fgx, fgy] = gradient(f);

    best_v = v;
    best_ssd = std::numeric_limits<double>::infinity();
    std::vector<double> history;
    for (int it = 0; it <= cfg.demons_iters_per_level; ++it) {
      const DisplacementField total = detail::compose_with_affine(v, lt);
      const ScalarGrid warped = resample_grid(m, total);
      const double cost = ssd(warped, f);
      if (!std::isfinite(cost)) throw RegistrationError("deformable", level, "non-finite cost");
      if (cost < best_ssd) {
        best_ssd = cost;
        best_v = v;
      }
      history.push_back(cost);
      if (it == cfg.demons_iters_per_level || detail::stalled(history, cfg.convergence_tol)) break;

      ScalarGrid ux(f.width, f.height);
      ScalarGrid uy(f.width, f.height);
      for (std::size_t i = 0; i < f.values.size(); ++i) {
        const double diff = warped.values[i] - f.values[i];
        const double gx = fgx.values[i];
        const double gy = fgy.values[i];
        const double denom = gx * gx + gy * gy + diff * diff;
        if (denom < 1e-12) continue;
        // Moving the sample point against the fixed gradient lowers the residual.
        double sx = -diff * gx / denom;
        double sy = -diff * gy / denom;
        const double mag = std::hypot(sx, sy);
        if (mag > cfg.demons_max_step) {
          sx *= cfg.demons_max_step / mag;
          sy *= cfg.demons_max_step / mag;
        }
        if (!std::isfinite(sx) || !std::isfinite(sy)) throw RegistrationError("deformable", level, "non-finite update");
        ux.values[i] = sx;
        uy.values[i] = sy;
      }
      ux = gaussian_smooth(ux, cfg.demons_sigma_fluid);
      uy = gaussian_smooth(uy, cfg.demons_sigma_fluid);
      double max_update = 0.0;
      for (std::size_t i = 0; i < ux.values.size(); ++i)
        max_update = std::max(max_update, std::hypot(ux.values[i], uy.values[i]));
      if (observer) observer(level, it, max_update);

      ScalarGrid vx = v.dx();
      ScalarGrid vy = v.dy();
      for (std::size_t i = 0; i < vx.values.size(); ++i) {
        vx.values[i] += ux.values[i];
        vy.values[i] += uy.values[i];
      }
      v = DisplacementField(gaussian_smooth(vx, cfg.demons_sigma_diffusion),
                            gaussian_smooth(vy, cfg.demons_sigma_diffusion));
      ++iterations;
    }
    v = best_v;
  }

  RegistrationResult result;
  result.affine = init;
  result.iterations_used.deformable = iterations;
  if (best_ssd <= affine_ssd) {
    result.field = detail::compose_with_affine(v, init);
    result.final_ssd = best_ssd;
  } else {
    result.field = affine_only;
    result.final_ssd = affine_ssd;
  }
  return result;
}

/// Affine then deformable alignment of the moving (atlas) image onto fixed.
inline RegistrationResult register_images(const Image& moving, const Image& fixed, const RegistrationConfig& cfg) {
  int affine_iters = 0;
  const AffineTransform2D affine = register_affine(moving, fixed, cfg, &affine_iters);
  RegistrationResult result = register_deformable(moving, fixed, affine, cfg);
  result.iterations_used.affine = affine_iters;
  return result;
}

}  // namespace ubd
