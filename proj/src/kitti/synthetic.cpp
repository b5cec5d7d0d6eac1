#include <cmath>

#include "svga/kitti.hpp"
#include "svga/rng.hpp"

namespace svga {
namespace {

bool inside_box_bev(const Box7& b, double x, double y, double margin) {
  const double c = std::cos(b.theta), s = std::sin(b.theta);
  const double dx = x - b.x, dy = y - b.y;
  const double lx = c * dx + s * dy;
  const double ly = -s * dx + c * dy;
  return std::abs(lx) <= b.l / 2.0 + margin && std::abs(ly) <= b.w / 2.0 + margin;
}

// Uniform over the five visible faces (no bottom), area-weighted, in the
// box's local frame with origin at the center.
std::array<double, 3> sample_surface_local(const Box7& b, Rng& rng) {
  const double top = b.l * b.w;
  const double side_l = b.l * b.h;  // the two faces at y = +-w/2
  const double side_w = b.w * b.h;  // the two faces at x = +-l/2
  const double total = top + 2 * side_l + 2 * side_w;
  double u = rng.uniform() * total;
  const double a = (rng.uniform() - 0.5), c = (rng.uniform() - 0.5);
  if (u < top) return {a * b.l, c * b.w, b.h / 2.0};
  u -= top;
  if (u < 2 * side_l) {
    const double sign = u < side_l ? 1.0 : -1.0;
    return {a * b.l, sign * b.w / 2.0, c * b.h};
  }
  u -= 2 * side_l;
  const double sign = u < side_w ? 1.0 : -1.0;
  return {sign * b.l / 2.0, a * b.w, c * b.h};
}

}  // namespace

Scene generate_synthetic(const SynthConfig& cfg, std::uint64_t seed, const std::string& id) {
  if (cfg.n_boxes < 0 || cfg.n_clutter < 0 || cfg.points_per_box <= 0)
    throw ConfigError("synthetic: counts must be nonnegative and points_per_box positive");
  if (cfg.noise < 0) throw ConfigError("synthetic: noise bound must be nonnegative");
  Rng rng(seed);
  Scene scene;
  scene.id = id;

  for (int i = 0; i < cfg.n_boxes; ++i) {
    Box7 b;
    b.l = rng.uniform(cfg.l_min, cfg.l_max);
    b.w = rng.uniform(cfg.w_min, cfg.w_max);
    b.h = rng.uniform(cfg.h_min, cfg.h_max);
    b.theta = normalize_angle(rng.uniform(cfg.theta_min, cfg.theta_max));
    b.z = cfg.ground_z + b.h / 2.0;
    // Keep boxes clear of each other so labels stay unambiguous.
    bool placed = false;
    for (int attempt = 0; attempt < 200 && !placed; ++attempt) {
      b.x = rng.uniform(cfg.center_x_min, cfg.center_x_max);
      b.y = rng.uniform(cfg.center_y_min, cfg.center_y_max);
      placed = true;
      for (const auto& other : scene.labels)
        if (iou_bev(b, other.box) > 0.0) placed = false;
    }
    if (!placed) break;
    LabeledBox lb;
    lb.box = b;
    lb.cls = cfg.cls;
    lb.difficulty = Difficulty::Unknown;
    scene.labels.push_back(lb);
  }

  for (const auto& lb : scene.labels) {
    const Box7& b = lb.box;
    const double c = std::cos(b.theta), s = std::sin(b.theta);
    for (int i = 0; i < cfg.points_per_box; ++i) {
      const auto local = sample_surface_local(b, rng);
      Point p;
      p.x = b.x + c * local[0] - s * local[1] + rng.uniform(-cfg.noise, cfg.noise);
      p.y = b.y + s * local[0] + c * local[1] + rng.uniform(-cfg.noise, cfg.noise);
      p.z = b.z + local[2] + rng.uniform(-cfg.noise, cfg.noise);
      p.intensity = rng.uniform();
      scene.points.push_back(p);
    }
  }

  for (int i = 0; i < cfg.n_clutter; ++i) {
    Point p;
    bool clear = false;
    for (int attempt = 0; attempt < 100 && !clear; ++attempt) {
      p.x = rng.uniform(cfg.clutter_x_min, cfg.clutter_x_max);
      p.y = rng.uniform(cfg.clutter_y_min, cfg.clutter_y_max);
      clear = true;
      for (const auto& lb : scene.labels)
        if (inside_box_bev(lb.box, p.x, p.y, 2.0 * cfg.noise)) clear = false;
    }
    if (!clear) continue;
    p.z = cfg.ground_z + rng.uniform() * cfg.clutter_height;
    p.intensity = rng.uniform();
    scene.points.push_back(p);
  }
  return scene;
}

}  // namespace svga
