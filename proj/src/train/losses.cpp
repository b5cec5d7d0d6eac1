#include "svga/losses.hpp"

namespace svga {

namespace {
constexpr double kPosWeight = 1.5;
constexpr double kNegWeight = 1.0;
constexpr double kClsWeight = 1.0;
constexpr double kRegWeight = 2.0;
}  // namespace

Tensor classification_loss(const Tensor& pos_logits, const Tensor& neg_logits) {
  Tensor loss = Tensor::scalar(0.0);
  const int n_pos = static_cast<int>(pos_logits.numel());
  const int n_neg = static_cast<int>(neg_logits.numel());
  if (n_pos > 0) {
    const std::vector<double> ones(static_cast<std::size_t>(n_pos), 1.0);
    loss = add(loss, scale(bce_with_logits_sum(pos_logits, ones), kPosWeight / n_pos));
  }
  if (n_neg > 0) {
    const std::vector<double> zeros(static_cast<std::size_t>(n_neg), 0.0);
    loss = add(loss, scale(bce_with_logits_sum(neg_logits, zeros), kNegWeight / n_neg));
  }
  return loss;
}

Tensor regression_loss(const Tensor& pred_residuals, const std::vector<double>& target_residuals,
                       int n_pos) {
  if (n_pos == 0) return Tensor::scalar(0.0);
  if (pred_residuals.numel() != target_residuals.size() ||
      pred_residuals.numel() != static_cast<std::size_t>(n_pos) * 7)
    throw ShapeError("regression_loss: " + std::to_string(pred_residuals.numel()) +
                     " predictions, " + std::to_string(target_residuals.size()) + " targets, " +
                     std::to_string(n_pos) + " positives");
  return scale(smooth_l1_sum(pred_residuals, target_residuals), 1.0 / n_pos);
}

LossBreakdown compute_loss(const SdrHead::Output& head, const AnchorGrid& grid,
                           const AnchorAssignment& assign, const std::vector<LabeledBox>& gts) {
  const int a_per_cell = grid.anchors_per_cell();
  const int h1 = grid.h1, w1 = grid.w1;
  if (head.cls.ndim() != 3 || head.cls.dim(0) != a_per_cell || head.cls.dim(1) != h1 ||
      head.cls.dim(2) != w1)
    throw ShapeError("compute_loss: class map " + shape_str(head.cls.shape()) +
                     " does not fit the anchor grid");
  if (head.reg.ndim() != 3 || head.reg.dim(0) != 7 * a_per_cell || head.reg.dim(1) != h1 ||
      head.reg.dim(2) != w1)
    throw ShapeError("compute_loss: regression map " + shape_str(head.reg.shape()) +
                     " does not fit the anchor grid");
  if (assign.gt_of_anchor.size() != grid.size())
    throw ShapeError("compute_loss: assignment covers " +
                     std::to_string(assign.gt_of_anchor.size()) + " anchors, grid has " +
                     std::to_string(grid.size()));

  const std::size_t plane = static_cast<std::size_t>(h1) * w1;
  std::vector<std::size_t> pos_idx, neg_idx, reg_idx;
  std::vector<double> reg_target;
  for (std::size_t a = 0; a < assign.gt_of_anchor.size(); ++a) {
    const int g = assign.gt_of_anchor[a];
    if (g == AnchorAssignment::kIgnore) continue;
    const int s = static_cast<int>(a) % a_per_cell;
    const std::size_t cell = a / static_cast<std::size_t>(a_per_cell);
    const std::size_t cls_flat = static_cast<std::size_t>(s) * plane + cell;
    if (g == AnchorAssignment::kNegative) {
      neg_idx.push_back(cls_flat);
      continue;
    }
    pos_idx.push_back(cls_flat);
    const Residual7 r = encode_residual(gts.at(static_cast<std::size_t>(g)).box, grid.boxes[a]);
    const double comps[7] = {r.dx, r.dy, r.dz, r.dw, r.dl, r.dh, r.dtheta};
    for (int c = 0; c < 7; ++c) {
      reg_idx.push_back(static_cast<std::size_t>(7 * s + c) * plane + cell);
      reg_target.push_back(comps[c]);
    }
  }

  LossBreakdown out;
  out.n_pos = static_cast<int>(pos_idx.size());
  out.n_neg = static_cast<int>(neg_idx.size());
  out.cls_loss =
      classification_loss(select_flat(head.cls, pos_idx), select_flat(head.cls, neg_idx));
  out.reg_loss = regression_loss(select_flat(head.reg, reg_idx), reg_target, out.n_pos);
  out.total = add(scale(out.cls_loss, kClsWeight), scale(out.reg_loss, kRegWeight));
  return out;
}

}  // namespace svga
