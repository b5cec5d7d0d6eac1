#pragma once

#include <vector>

#include "svga/tensor.hpp"

namespace svga {

// Elementwise, same shape.
Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor scale(const Tensor& a, double c);

// x: [m x n], bias: [n]; adds bias to every row.
Tensor add_bias(const Tensor& x, const Tensor& bias);

// a: [m x k], b: [k x n] -> [m x n]
Tensor matmul(const Tensor& a, const Tensor& b);
// a: [m x k], b: [n x k] -> [m x n] (a times b transposed)
Tensor matmul_nt(const Tensor& a, const Tensor& b);

Tensor relu(const Tensor& x);
Tensor sigmoid(const Tensor& x);

// Softmax along `axis`; max-subtracted for overflow safety.
Tensor softmax(const Tensor& x, int axis);

// scores: [t x t]. Row j is a softmax over entries k != j; the diagonal of
// the result is zero. A 1x1 input yields a zero matrix (no neighbors).
Tensor masked_row_softmax(const Tensor& scores);

Tensor sum_all(const Tensor& x);
Tensor mean_all(const Tensor& x);

// x: [t x d] -> [d], columnwise max (gradient routed to the arg max).
Tensor col_max(const Tensor& x);
// x: [t x d] -> [d], columnwise mean.
Tensor col_mean(const Tensor& x);

// s must hold exactly one element; broadcasts over x.
Tensor mul_by_scalar_tensor(const Tensor& x, const Tensor& s);

// xs: each [C_i x H x W] with common H, W -> [sum(C_i) x H x W]
Tensor concat_channels(const std::vector<Tensor>& xs);

// rows: n tensors of identical numel d (any shape) -> [n x d]
Tensor stack_rows(const std::vector<Tensor>& rows);

// x: [n x d]; idx values in [0, n) with repeats allowed -> [|idx| x d]
Tensor select_rows(const Tensor& x, const std::vector<int>& idx);

// Row-major flat gather; repeats allowed -> [|idx|]
Tensor select_flat(const Tensor& x, const std::vector<std::size_t>& idx);

// x: [C_in x H x W], w: [C_out x C_in x k x k], b: [C_out]
Tensor conv2d(const Tensor& x, const Tensor& w, const Tensor& b, int stride, int pad);

// Nearest-neighbor doubling: [C x H x W] -> [C x 2H x 2W]
Tensor upsample2x(const Tensor& x);

// Per-channel standardization with affine transform. The training form
// computes batch statistics over H*W (biased variance) and reports them;
// the eval form standardizes with the provided statistics.
Tensor batchnorm2d_train(const Tensor& x, const Tensor& gamma, const Tensor& beta, double eps,
                         std::vector<double>* batch_mean, std::vector<double>* batch_var);
Tensor batchnorm2d_eval(const Tensor& x, const Tensor& gamma, const Tensor& beta,
                        const std::vector<double>& mean, const std::vector<double>& var,
                        double eps);

// g: [N x d]; neighbors: per node, indices into g (no self loops).
// Per node i: dot products with its neighbors are normalized by their sum
// (uniform fallback when |sum| < eps) and the neighbor rows are combined
// with those weights. guard_hits counts fallback rows; weights_out and
// guarded_out expose the per-node weights and fallback flags.
Tensor knn_dot_aggregate(const Tensor& g, const std::vector<std::vector<int>>& neighbors,
                         double eps, int* guard_hits = nullptr,
                         std::vector<std::vector<double>>* weights_out = nullptr,
                         std::vector<char>* guarded_out = nullptr);

// feats: [N x C]; cell_of_row: flat H*W cell per row, -1 to drop.
// Occupied cells take the elementwise max over their rows; empty cells are 0.
Tensor scatter_max_bev(const Tensor& feats, const std::vector<int>& cell_of_row, int grid_h,
                       int grid_w, int* dropped = nullptr);

// Numerically stable binary cross entropy against constant targets, summed.
Tensor bce_with_logits_sum(const Tensor& logits, const std::vector<double>& targets);

// Smooth L1 (delta = 1) of pred - target, summed over all elements.
Tensor smooth_l1_sum(const Tensor& pred, const std::vector<double>& target);

}  // namespace svga
