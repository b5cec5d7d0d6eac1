#pragma once

#include <array>
#include <cstdint>
#include <unordered_map>
#include <vector>

#include "svga/kitti.hpp"

namespace svga {

// Point set within strict radius r of an FPS-chosen seed point.
struct SphericalVoxel {
  int center_point_index = 0;
  std::vector<int> member_indices;  // ascending, always containing the seed
  std::array<double, 3> centroid{0, 0, 0};
};

// Greedy max-min subset: the first pick is seed_index, each later pick
// maximizes the distance to its nearest already-picked point, ties broken by
// lowest index. Output order is the visit order.
std::vector<int> farthest_point_sample(const std::vector<Point>& points, int n, int seed_index = 0);

// Uniform grid over the cloud with the query radius as cell size; exact
// results are guaranteed by scanning the 27 surrounding cells.
class HashGrid {
 public:
  HashGrid(const std::vector<Point>& points, double cell);

  // Indices with Euclidean distance < r from the given point, ascending.
  // Exact only for r <= the grid cell size.
  std::vector<int> query_ball(int center_index, double r) const;

 private:
  const std::vector<Point>& points_;
  double cell_;
  std::unordered_map<std::uint64_t, std::vector<int>> cells_;
};

std::vector<int> ball_query(const std::vector<Point>& points, int center_index, double r);

// Composition: FPS seeds, per-seed ball query, per-voxel cap with
// deterministic stride subsampling (the seed always survives), centroids over
// the surviving members. cap <= 0 disables the cap.
std::vector<SphericalVoxel> build_voxels(const std::vector<Point>& points, int n, double r,
                                         int cap = 64, int seed_index = 0);

struct KnnGraph {
  int k = 0;
  std::vector<std::vector<int>> neighbors;  // per node, ascending distance, ties by lower index
};

KnnGraph build_knn_graph(const std::vector<std::array<double, 3>>& centers, int k);

}  // namespace svga
