#pragma once

#include <cstdint>

#include "svga/kitti.hpp"

namespace svga {

// Global rotation about z, uniform scaling about the origin, and an optional
// mirror across the x axis, applied jointly to points and label boxes.
Scene augment_with(const Scene& scene, double phi, double scale_factor, bool flip);

// Draws rotation U(-pi/4, pi/4), scale U(0.95, 1.05) and a fair flip coin.
Scene augment(const Scene& scene, std::uint64_t seed);

}  // namespace svga
