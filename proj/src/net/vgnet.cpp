#include "svga/vgnet.hpp"

#include <cmath>
#include <string>

namespace svga {

VgNet::VgNet(const TrainConfig& cfg, ParamRegistry& reg, Rng& rng)
    : gate_mode_(cfg.global_gate),
      relative_coords_(cfg.relative_coords),
      knn_k_(cfg.knn_k),
      grid_h_(cfg.grid_h()),
      grid_w_(cfg.grid_w()),
      grid_x_min_(cfg.grid_x_min),
      grid_y_min_(cfg.grid_y_min),
      resolution_(cfg.grid_resolution) {
  point_mlp_ = Mlp(reg, "vgnet.point_mlp", 4, cfg.point_mlp, true, rng);
  const int d0 = point_mlp_.out_features();
  if (gated()) centroid_mlp_ = Mlp(reg, "vgnet.centroid_mlp", 3, cfg.point_mlp, true, rng);
  int d = d0;
  for (int m = 0; m < cfg.n_layers; ++m) {
    const std::vector<int> widths{cfg.attn_mlp[m][0], cfg.attn_mlp[m][1]};
    local_mlps_.emplace_back(reg, "vgnet.local" + std::to_string(m), d, widths, true, rng);
    if (gated()) {
      gate_linears_.emplace_back(reg, "vgnet.gate" + std::to_string(m), d, 1, rng);
      if (m + 1 < cfg.n_layers)
        global_mlps_.emplace_back(reg, "vgnet.global" + std::to_string(m), d, widths, true, rng);
    }
    d = widths[1];
  }
  bev_reduce_ = Linear(reg, "vgnet.bev_reduce", d, cfg.bev_channels, rng);
}

Tensor VgNet::voxel_input(const std::vector<Point>& points, const SphericalVoxel& v) const {
  const int t = static_cast<int>(v.member_indices.size());
  if (t < 1) throw InvalidArgumentError("vgnet: voxel has no members");
  const Point& seed = points.at(static_cast<std::size_t>(v.center_point_index));
  std::vector<double> rows(static_cast<std::size_t>(t) * 4);
  for (int j = 0; j < t; ++j) {
    const Point& p = points.at(static_cast<std::size_t>(v.member_indices[j]));
    const std::size_t o = static_cast<std::size_t>(j) * 4;
    if (relative_coords_) {
      rows[o + 0] = p.x - seed.x;
      rows[o + 1] = p.y - seed.y;
      rows[o + 2] = p.z - seed.z;
    } else {
      rows[o + 0] = p.x;
      rows[o + 1] = p.y;
      rows[o + 2] = p.z;
    }
    rows[o + 3] = p.intensity;
  }
  return Tensor::from({t, 4}, rows);
}

Tensor VgNet::point_features(const Tensor& rows) const { return point_mlp_.forward(rows); }

Tensor VgNet::attention_weights(const Tensor& f) {
  return masked_row_softmax(matmul_nt(f, f));
}

Tensor VgNet::attention_layer(const Tensor& f, const Tensor& beta_i, int layer) const {
  const Tensor alpha = attention_weights(f);
  const Tensor agg = add(mul_by_scalar_tensor(f, beta_i), matmul(alpha, f));
  return local_mlps_.at(static_cast<std::size_t>(layer)).forward(agg);
}

Tensor VgNet::initial_global(const std::vector<SphericalVoxel>& voxels) const {
  if (!gated()) throw StateError("vgnet: no global branch when gating is off");
  std::vector<double> rows;
  rows.reserve(voxels.size() * 3);
  for (const auto& v : voxels) {
    rows.push_back(v.centroid[0]);
    rows.push_back(v.centroid[1]);
    rows.push_back(v.centroid[2]);
  }
  return centroid_mlp_.forward(Tensor::from({static_cast<int>(voxels.size()), 3}, rows));
}

VgNet::Gate VgNet::global_gate(const Tensor& g, const KnnGraph& graph, int layer) const {
  Gate out;
  if (!gated()) {
    const int n = g.dim(0);
    out.aggregated = g;
    out.beta = Tensor::full({n, 1}, 1.0);
    return out;
  }
  out.aggregated = knn_dot_aggregate(g, graph.neighbors, knn_eps_, &out.guard_hits);
  const Linear& lin = gate_linears_.at(static_cast<std::size_t>(layer));
  if (gate_mode_ == "per_layer") {
    const Tensor mean = stack_rows({col_mean(out.aggregated)});
    const Tensor one = sigmoid(lin.forward(mean));
    std::vector<Tensor> rows(static_cast<std::size_t>(g.dim(0)), one);
    out.beta = stack_rows(rows);
  } else {
    out.beta = sigmoid(lin.forward(out.aggregated));
  }
  return out;
}

Tensor VgNet::global_update(const Tensor& aggregated, int layer) const {
  return global_mlps_.at(static_cast<std::size_t>(layer)).forward(aggregated);
}

int VgNet::cell_of(double x, double y) const {
  const int col = static_cast<int>(std::floor((x - grid_x_min_) / resolution_));
  const int row = static_cast<int>(std::floor((y - grid_y_min_) / resolution_));
  if (row < 0 || row >= grid_h_ || col < 0 || col >= grid_w_) return -1;
  return row * grid_w_ + col;
}

VgNet::Forward VgNet::forward(const std::vector<Point>& points,
                              const std::vector<SphericalVoxel>& voxels) const {
  const int n = static_cast<int>(voxels.size());
  if (n == 0) throw InvalidArgumentError("vgnet: no voxels");
  if (gated() && knn_k_ >= n)
    throw InvalidArgumentError("vgnet: need more than knn_k = " + std::to_string(knn_k_) +
                               " voxels, got " + std::to_string(n));

  Forward out;
  std::vector<Tensor> feats;
  feats.reserve(static_cast<std::size_t>(n));
  for (const auto& v : voxels) feats.push_back(point_features(voxel_input(points, v)));

  KnnGraph graph;
  Tensor global;
  if (gated()) {
    std::vector<std::array<double, 3>> centroids;
    centroids.reserve(voxels.size());
    for (const auto& v : voxels) centroids.push_back(v.centroid);
    graph = build_knn_graph(centroids, knn_k_);
    global = initial_global(voxels);
  }

  const int layers = n_layers();
  for (int m = 0; m < layers; ++m) {
    Gate gate = global_gate(gated() ? global : Tensor::zeros({n, 1}), graph, m);
    out.gate_guard_hits += gate.guard_hits;
    for (int i = 0; i < n; ++i)
      feats[static_cast<std::size_t>(i)] =
          attention_layer(feats[static_cast<std::size_t>(i)], select_rows(gate.beta, {i}), m);
    if (gated() && m + 1 < layers) global = global_update(gate.aggregated, m);
  }

  std::vector<Tensor> pooled_rows;
  pooled_rows.reserve(static_cast<std::size_t>(n));
  for (const auto& f : feats) pooled_rows.push_back(col_max(f));
  out.pooled = stack_rows(pooled_rows);

  out.cell_of_voxel.resize(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i)
    out.cell_of_voxel[static_cast<std::size_t>(i)] =
        cell_of(voxels[static_cast<std::size_t>(i)].centroid[0],
                voxels[static_cast<std::size_t>(i)].centroid[1]);

  const Tensor reduced = bev_reduce_.forward(out.pooled);
  out.bev = scatter_max_bev(reduced, out.cell_of_voxel, grid_h_, grid_w_, &out.dropped_voxels);
  return out;
}

}  // namespace svga
