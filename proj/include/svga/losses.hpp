#pragma once

#include <vector>

#include "svga/boxes.hpp"
#include "svga/ops.hpp"
#include "svga/sdr.hpp"

namespace svga {

struct LossBreakdown {
  Tensor cls_loss;  // scalar
  Tensor reg_loss;  // scalar, already divided by the positive count
  Tensor total;     // cls + 2 * reg
  int n_pos = 0;
  int n_neg = 0;
};

// Weighted binary cross entropy: 1.5 * mean over positives against target 1
// plus 1 * mean over negatives against target 0. An empty group contributes 0.
Tensor classification_loss(const Tensor& pos_logits, const Tensor& neg_logits);

// Smooth L1 summed over the 7 residual components of every positive anchor,
// divided by the positive count. n_pos = 0 yields a constant 0.
Tensor regression_loss(const Tensor& pred_residuals, const std::vector<double>& target_residuals,
                       int n_pos);

// Gathers positive/negative logits and positive residual predictions from the
// head maps per the anchor assignment and assembles the total loss.
LossBreakdown compute_loss(const SdrHead::Output& head, const AnchorGrid& grid,
                           const AnchorAssignment& assign, const std::vector<LabeledBox>& gts);

}  // namespace svga
