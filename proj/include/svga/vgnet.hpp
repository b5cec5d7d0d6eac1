#pragma once

#include <vector>

#include "svga/config.hpp"
#include "svga/geometry.hpp"
#include "svga/kitti.hpp"
#include "svga/layers.hpp"
#include "svga/ops.hpp"

namespace svga {

// Voxel graph network: per-point features inside each spherical voxel pass
// through stacked complete-graph attention layers, gated per layer by a
// global KNN graph over voxel centroids; pooled voxel vectors are reduced
// and scattered onto a BEV grid.
class VgNet {
 public:
  VgNet(const TrainConfig& cfg, ParamRegistry& reg, Rng& rng);

  struct Forward {
    Tensor pooled;                   // [N x d_final]
    Tensor bev;                      // [bev_channels x grid_h x grid_w]
    std::vector<int> cell_of_voxel;  // flat BEV cell per voxel, -1 off-grid
    int dropped_voxels = 0;
    int gate_guard_hits = 0;
  };
  Forward forward(const std::vector<Point>& points,
                  const std::vector<SphericalVoxel>& voxels) const;

  // Per-point rows for one voxel: offsets to the seed point plus intensity,
  // or raw coordinates behind the flag.
  Tensor voxel_input(const std::vector<Point>& points, const SphericalVoxel& v) const;

  Tensor point_features(const Tensor& rows) const;  // [t x 4] -> [t x d0]

  // Row j holds softmax weights over the dot products with the other rows.
  static Tensor attention_weights(const Tensor& f);

  // beta_i must hold one element: f'_j = beta * f_j + sum_k alpha_jk f_k,
  // then the layer's 2-layer MLP.
  Tensor attention_layer(const Tensor& f, const Tensor& beta_i, int layer) const;

  Tensor initial_global(const std::vector<SphericalVoxel>& voxels) const;

  struct Gate {
    Tensor aggregated;  // [N x d]
    Tensor beta;        // [N x 1], every entry 1 when gating is off
    int guard_hits = 0;
  };
  Gate global_gate(const Tensor& g, const KnnGraph& graph, int layer) const;

  // Next layer's global rows: the layer's MLP over the aggregated rows.
  Tensor global_update(const Tensor& aggregated, int layer) const;

  int d_final() const { return local_mlps_.back().out_features(); }
  int n_layers() const { return static_cast<int>(local_mlps_.size()); }
  bool gated() const { return gate_mode_ != "off"; }

 private:
  int cell_of(double x, double y) const;

  std::string gate_mode_;
  bool relative_coords_;
  int knn_k_;
  double knn_eps_ = 1e-8;
  int grid_h_, grid_w_;
  double grid_x_min_, grid_y_min_, resolution_;

  Mlp point_mlp_;
  Mlp centroid_mlp_;
  std::vector<Mlp> local_mlps_;
  std::vector<Mlp> global_mlps_;  // one per layer except the last
  std::vector<Linear> gate_linears_;
  Linear bev_reduce_;
};

}  // namespace svga
