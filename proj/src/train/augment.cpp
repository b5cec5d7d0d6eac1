#include "svga/augment.hpp"

#include <cmath>

#include "svga/rng.hpp"

namespace svga {

Scene augment_with(const Scene& scene, double phi, double scale_factor, bool flip) {
  if (!(scale_factor > 0)) throw InvalidArgumentError("augment: scale must be positive");
  const double c = std::cos(phi), s = std::sin(phi);
  Scene out;
  out.id = scene.id;
  out.points.reserve(scene.points.size());
  for (const Point& p : scene.points) {
    Point q;
    const double y = flip ? -p.y : p.y;
    q.x = scale_factor * (c * p.x - s * y);
    q.y = scale_factor * (s * p.x + c * y);
    q.z = scale_factor * p.z;
    q.intensity = p.intensity;
    out.points.push_back(q);
  }
  out.labels.reserve(scene.labels.size());
  for (const LabeledBox& lb : scene.labels) {
    LabeledBox o = lb;
    const double y = flip ? -lb.box.y : lb.box.y;
    const double theta = flip ? -lb.box.theta : lb.box.theta;
    o.box.x = scale_factor * (c * lb.box.x - s * y);
    o.box.y = scale_factor * (s * lb.box.x + c * y);
    o.box.z = scale_factor * lb.box.z;
    o.box.l = scale_factor * lb.box.l;
    o.box.w = scale_factor * lb.box.w;
    o.box.h = scale_factor * lb.box.h;
    o.box.theta = normalize_angle(theta + phi);
    out.labels.push_back(o);
  }
  return out;
}

Scene augment(const Scene& scene, std::uint64_t seed) {
  Rng rng(seed);
  const double phi = rng.uniform(-M_PI / 4.0, M_PI / 4.0);
  const double s = rng.uniform(0.95, 1.05);
  const bool flip = rng.bernoulli(0.5);
  return augment_with(scene, phi, s, flip);
}

}  // namespace svga
