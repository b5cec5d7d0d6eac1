#include "svga/sdr.hpp"

#include <string>

namespace svga {

SdrHead::SdrHead(const TrainConfig& cfg, ParamRegistry& reg, Rng& rng)
    : variant_(cfg.head_variant), anchors_(static_cast<int>(cfg.anchor_specs().size())) {
  const int c0 = cfg.bev_channels;
  const auto& bc = cfg.sdr_block_channels;
  const int nb = cfg.sdr_convs_per_block;
  const int branch = cfg.sdr_branch_channels;

  int in = c0;
  for (int i = 0; i < 3; ++i) {
    std::vector<ConvBnRelu> block;
    for (int j = 0; j < nb; ++j) {
      const std::string name = "sdr.block" + std::to_string(i) + ".conv" + std::to_string(j);
      block.emplace_back(reg, name, j == 0 ? in : bc[i], bc[i], 3, j == 0 ? 2 : 1, 1, rng);
    }
    blocks_.push_back(std::move(block));
    in = bc[i];
  }

  const bool concat = variant_ != "sr";
  const int branch_in[3] = {concat ? bc[0] + bc[1] : bc[0], concat ? bc[1] + bc[2] : bc[1], bc[2]};
  for (int i = 0; i < 3; ++i) {
    std::vector<ConvBnRelu> convs;
    const std::string prefix = "sdr.branch" + std::to_string(i);
    convs.emplace_back(reg, prefix + ".conv0", branch_in[i], branch, 3, 1, 1, rng);
    convs.emplace_back(reg, prefix + ".conv1", branch, branch, 3, 1, 1, rng);
    branches_.push_back(std::move(convs));
  }

  if (variant_ != "dr")
    for (int i = 0; i < 3; ++i)
      aligns_.emplace_back(reg, "sdr.align" + std::to_string(i), bc[i], branch, 1, 1, 0,
                           /*has_bias=*/false, rng);

  final_ = ConvBnRelu(reg, "sdr.final", 3 * branch, cfg.sdr_fused_channels, 3, 1, 1, rng);
  cls_head_ = Conv2dLayer(reg, "sdr.cls", cfg.sdr_fused_channels, anchors_, 1, 1, 0, true, rng);
  reg_head_ = Conv2dLayer(reg, "sdr.reg", cfg.sdr_fused_channels, 7 * anchors_, 1, 1, 0, true, rng);
}

SdrHead::Blocks SdrHead::blocks_forward(const Tensor& x, bool training) {
  if (x.ndim() != 3) throw ShapeError("sdr: expected [C x H x W] input, got " + shape_str(x.shape()));
  if (x.dim(1) % 8 != 0 || x.dim(2) % 8 != 0)
    throw ShapeError("sdr: input " + shape_str(x.shape()) + " is not divisible by 8");
  Blocks b;
  Tensor t = x;
  Tensor* outs[3] = {&b.b1, &b.b2, &b.b3};
  for (int i = 0; i < 3; ++i) {
    for (auto& conv : blocks_[static_cast<std::size_t>(i)]) t = conv.forward(t, training);
    *outs[i] = t;
  }
  return b;
}

SdrHead::Branches SdrHead::cross_scale_fuse(const Blocks& b, bool training) {
  const bool concat = variant_ != "sr";
  Branches f;
  Tensor in1 = concat ? concat_channels({b.b1, upsample2x(b.b2)}) : b.b1;
  Tensor in2 = concat ? concat_channels({b.b2, upsample2x(b.b3)}) : b.b2;
  Tensor t = in1;
  for (auto& conv : branches_[0]) t = conv.forward(t, training);
  f.f1 = t;
  t = in2;
  for (auto& conv : branches_[1]) t = conv.forward(t, training);
  f.f2 = upsample2x(t);
  t = b.b3;
  for (auto& conv : branches_[2]) t = conv.forward(t, training);
  f.f3 = upsample2x(upsample2x(t));
  return f;
}

Tensor SdrHead::sparse_dense_merge(const Blocks& b, const Branches& f, bool training) {
  Tensor f1 = f.f1, f2 = f.f2, f3 = f.f3;
  if (variant_ != "dr") {
    f1 = add(f1, aligns_[0].forward(b.b1));
    f2 = add(f2, aligns_[1].forward(upsample2x(b.b2)));
    f3 = add(f3, aligns_[2].forward(upsample2x(upsample2x(b.b3))));
  }
  return final_.forward(concat_channels({f1, f2, f3}), training);
}

SdrHead::Output SdrHead::detection_heads(const Tensor& fused) const {
  Output out;
  out.cls = cls_head_.forward(fused);
  out.reg = reg_head_.forward(fused);
  return out;
}

SdrHead::Output SdrHead::forward(const Tensor& bev, bool training) {
  Blocks b = blocks_forward(bev, training);
  Branches f = cross_scale_fuse(b, training);
  return detection_heads(sparse_dense_merge(b, f, training));
}

}  // namespace svga
