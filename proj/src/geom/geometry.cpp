#include "svga/geometry.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace svga {
namespace {

double dist2(const Point& a, const Point& b) {
  const double dx = a.x - b.x, dy = a.y - b.y, dz = a.z - b.z;
  return dx * dx + dy * dy + dz * dz;
}

std::uint64_t cell_key(std::int64_t ix, std::int64_t iy, std::int64_t iz) {
  constexpr std::int64_t off = 1 << 20;
  return (static_cast<std::uint64_t>(ix + off) << 42) | (static_cast<std::uint64_t>(iy + off) << 21) |
         static_cast<std::uint64_t>(iz + off);
}

std::int64_t cell_coord(double v, double cell) {
  return static_cast<std::int64_t>(std::floor(v / cell));
}

}  // namespace

std::vector<int> farthest_point_sample(const std::vector<Point>& points, int n, int seed_index) {
  const int total = static_cast<int>(points.size());
  if (n < 1) throw InvalidArgumentError("fps: sample count must be at least 1");
  if (n > total)
    throw InvalidArgumentError("fps: cannot draw " + std::to_string(n) + " samples from " +
                               std::to_string(total) + " points");
  if (seed_index < 0 || seed_index >= total)
    throw InvalidArgumentError("fps: seed index " + std::to_string(seed_index) + " out of range");
  std::vector<int> picks;
  picks.reserve(static_cast<std::size_t>(n));
  std::vector<double> min_d2(points.size(), std::numeric_limits<double>::infinity());
  int cur = seed_index;
  picks.push_back(cur);
  for (int step = 1; step < n; ++step) {
    int best = -1;
    double best_d = 0.0;
    for (int i = 0; i < total; ++i) {
      double& m = min_d2[static_cast<std::size_t>(i)];
      m = std::min(m, dist2(points[static_cast<std::size_t>(i)], points[static_cast<std::size_t>(cur)]));
      // m = 0 marks picked points and exact duplicates of picks.
      if (m > best_d) {
        best_d = m;
        best = i;
      }
    }
    if (best < 0) {
      // All remaining points coincide with picks; fall back to lowest unpicked index.
      std::vector<char> picked(points.size(), 0);
      for (int p : picks) picked[static_cast<std::size_t>(p)] = 1;
      for (int i = 0; i < total && best < 0; ++i)
        if (!picked[static_cast<std::size_t>(i)]) best = i;
    }
    picks.push_back(best);
    cur = best;
  }
  return picks;
}

HashGrid::HashGrid(const std::vector<Point>& points, double cell) : points_(points), cell_(cell) {
  if (cell <= 0) throw InvalidArgumentError("hash grid: cell size must be positive");
  for (int i = 0; i < static_cast<int>(points.size()); ++i) {
    const auto& p = points[static_cast<std::size_t>(i)];
    cells_[cell_key(cell_coord(p.x, cell_), cell_coord(p.y, cell_), cell_coord(p.z, cell_))]
        .push_back(i);
  }
}

std::vector<int> HashGrid::query_ball(int center_index, double r) const {
  if (center_index < 0 || center_index >= static_cast<int>(points_.size()))
    throw InvalidArgumentError("ball query: center index out of range");
  if (r <= 0) throw InvalidArgumentError("ball query: radius must be positive");
  const auto& c = points_[static_cast<std::size_t>(center_index)];
  const double r2 = r * r;
  const std::int64_t cx = cell_coord(c.x, cell_), cy = cell_coord(c.y, cell_),
                     cz = cell_coord(c.z, cell_);
  std::vector<int> out;
  for (std::int64_t ix = cx - 1; ix <= cx + 1; ++ix)
    for (std::int64_t iy = cy - 1; iy <= cy + 1; ++iy)
      for (std::int64_t iz = cz - 1; iz <= cz + 1; ++iz) {
        const auto it = cells_.find(cell_key(ix, iy, iz));
        if (it == cells_.end()) continue;
        for (int i : it->second)
          if (dist2(points_[static_cast<std::size_t>(i)], c) < r2) out.push_back(i);
      }
  std::sort(out.begin(), out.end());
  return out;
}

std::vector<int> ball_query(const std::vector<Point>& points, int center_index, double r) {
  return HashGrid(points, r).query_ball(center_index, r);
}

std::vector<SphericalVoxel> build_voxels(const std::vector<Point>& points, int n, double r,
                                         int cap, int seed_index) {
  const std::vector<int> seeds = farthest_point_sample(points, n, seed_index);
  const HashGrid grid(points, r);
  std::vector<SphericalVoxel> voxels;
  voxels.reserve(seeds.size());
  for (int seed : seeds) {
    SphericalVoxel v;
    v.center_point_index = seed;
    v.member_indices = grid.query_ball(seed, r);
    if (cap > 0 && static_cast<int>(v.member_indices.size()) > cap) {
      std::vector<int> rest;
      rest.reserve(v.member_indices.size() - 1);
      for (int m : v.member_indices)
        if (m != seed) rest.push_back(m);
      const std::size_t keep = static_cast<std::size_t>(cap) - 1;
      std::vector<int> sub;
      sub.reserve(static_cast<std::size_t>(cap));
      sub.push_back(seed);
      for (std::size_t i = 0; i < keep; ++i) sub.push_back(rest[i * rest.size() / keep]);
      std::sort(sub.begin(), sub.end());
      v.member_indices = std::move(sub);
    }
    double sx = 0, sy = 0, sz = 0;
    for (int m : v.member_indices) {
      sx += points[static_cast<std::size_t>(m)].x;
      sy += points[static_cast<std::size_t>(m)].y;
      sz += points[static_cast<std::size_t>(m)].z;
    }
    const double inv = 1.0 / static_cast<double>(v.member_indices.size());
    v.centroid = {sx * inv, sy * inv, sz * inv};
    voxels.push_back(std::move(v));
  }
  return voxels;
}

KnnGraph build_knn_graph(const std::vector<std::array<double, 3>>& centers, int k) {
  const int n = static_cast<int>(centers.size());
  if (k < 1) throw InvalidArgumentError("knn graph: k must be at least 1");
  if (k >= n)
    throw InvalidArgumentError("knn graph: k = " + std::to_string(k) + " needs more than " +
                               std::to_string(n) + " nodes");
  KnnGraph g;
  g.k = k;
  g.neighbors.resize(static_cast<std::size_t>(n));
  std::vector<std::pair<double, int>> cand;
  for (int i = 0; i < n; ++i) {
    cand.clear();
    cand.reserve(static_cast<std::size_t>(n) - 1);
    for (int j = 0; j < n; ++j) {
      if (j == i) continue;
      const double dx = centers[static_cast<std::size_t>(i)][0] - centers[static_cast<std::size_t>(j)][0];
      const double dy = centers[static_cast<std::size_t>(i)][1] - centers[static_cast<std::size_t>(j)][1];
      const double dz = centers[static_cast<std::size_t>(i)][2] - centers[static_cast<std::size_t>(j)][2];
      cand.emplace_back(dx * dx + dy * dy + dz * dz, j);
    }
    std::partial_sort(cand.begin(), cand.begin() + k, cand.end());
    auto& nb = g.neighbors[static_cast<std::size_t>(i)];
    nb.reserve(static_cast<std::size_t>(k));
    for (int l = 0; l < k; ++l) nb.push_back(cand[static_cast<std::size_t>(l)].second);
  }
  return g;
}

}  // namespace svga
