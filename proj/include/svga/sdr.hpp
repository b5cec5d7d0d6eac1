#pragma once

#include <vector>

#include "svga/config.hpp"
#include "svga/layers.hpp"

namespace svga {

// Sparse-to-dense regression head over the BEV grid: three stride-2 blocks,
// cross-scale concatenation, parallel branches back to half resolution, and
// an element-wise sparse/dense merge before the detection maps.
//
// Variants: "sdr" is the full wiring, "sr" removes the cross-scale
// concatenation, "dr" removes the element-wise addition.
class SdrHead {
 public:
  SdrHead(const TrainConfig& cfg, ParamRegistry& reg, Rng& rng);

  struct Blocks {
    Tensor b1, b2, b3;  // 1/2, 1/4, 1/8 input resolution
  };
  struct Branches {
    Tensor f1, f2, f3;  // common half resolution, equal channels
  };
  struct Output {
    Tensor cls;  // [A x H1 x W1] logits
    Tensor reg;  // [7A x H1 x W1]
  };

  Blocks blocks_forward(const Tensor& x, bool training);
  Branches cross_scale_fuse(const Blocks& b, bool training);
  Tensor sparse_dense_merge(const Blocks& b, const Branches& f, bool training);
  Output detection_heads(const Tensor& fused) const;
  Output forward(const Tensor& bev, bool training);

  int anchors_per_cell() const { return anchors_; }

 private:
  std::string variant_;
  int anchors_;
  std::vector<std::vector<ConvBnRelu>> blocks_;
  std::vector<std::vector<ConvBnRelu>> branches_;
  std::vector<Conv2dLayer> aligns_;  // 1x1, bias-free so zero maps stay zero
  ConvBnRelu final_;
  Conv2dLayer cls_head_, reg_head_;
};

}  // namespace svga
