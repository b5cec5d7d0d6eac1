#include <doctest.h>

#include <cmath>
#include <numeric>
#include <vector>

#include "svga/config.hpp"
#include "svga/error.hpp"
#include "svga/ops.hpp"
#include "svga/rng.hpp"
#include "svga/sdr.hpp"
#include "testutil.hpp"

using namespace svga;

namespace {

TrainConfig tiny_cfg(const std::string& variant) {
  TrainConfig c = config_defaults("car");
  c.bev_channels = 2;
  c.sdr_block_channels = {2, 2, 2};
  c.sdr_convs_per_block = 1;
  c.sdr_branch_channels = 2;
  c.sdr_fused_channels = 2;
  c.grid_x_min = 0.0;
  c.grid_x_max = 3.2;
  c.grid_y_min = -1.6;
  c.grid_y_max = 1.6;
  c.grid_resolution = 0.4;
  c.head_variant = variant;
  return c;
}

void copy_shared_params(const ParamRegistry& src, ParamRegistry& dst) {
  for (const auto& t : src.saved_tensors()) {
    if (!dst.contains(t.name())) continue;
    auto out = dst.find(t.name()).mutable_values();
    auto in = t.values();
    std::copy(in.begin(), in.end(), out.begin());
  }
}

}  // namespace

TEST_SUITE("sdr_head") {

TEST_CASE("block and head shapes follow the stride contract") {
  TrainConfig cfg = desk_preset();
  ParamRegistry reg;
  Rng rng(3);
  SdrHead head(cfg, reg, rng);
  CHECK(head.anchors_per_cell() == 2);

  Rng drng(9);
  Tensor x = random_tensor(drng, {16, 80, 80});
  auto blocks = head.blocks_forward(x, false);
  CHECK(blocks.b1.shape() == Shape{16, 40, 40});
  CHECK(blocks.b2.shape() == Shape{32, 20, 20});
  CHECK(blocks.b3.shape() == Shape{64, 10, 10});

  auto branches = head.cross_scale_fuse(blocks, false);
  CHECK(branches.f1.shape() == Shape{32, 40, 40});
  CHECK(branches.f2.shape() == Shape{32, 40, 40});
  CHECK(branches.f3.shape() == Shape{32, 40, 40});

  Tensor fused = head.sparse_dense_merge(blocks, branches, false);
  CHECK(fused.shape() == Shape{32, 40, 40});

  auto out = head.detection_heads(fused);
  CHECK(out.cls.shape() == Shape{2, 40, 40});
  CHECK(out.reg.shape() == Shape{14, 40, 40});
}

TEST_CASE("four anchor layouts widen the pedestrian-cyclist heads") {
  TrainConfig cfg = tiny_cfg("sdr");
  cfg.class_set = "pedcyc";
  ParamRegistry reg;
  Rng rng(3);
  SdrHead head(cfg, reg, rng);
  CHECK(head.anchors_per_cell() == 4);
  Rng drng(5);
  auto out = head.forward(random_tensor(drng, {2, 8, 8}), false);
  CHECK(out.cls.shape() == Shape{4, 4, 4});
  CHECK(out.reg.shape() == Shape{28, 4, 4});
}

TEST_CASE("bad inputs are rejected") {
  TrainConfig cfg = tiny_cfg("sdr");
  ParamRegistry reg;
  Rng rng(3);
  SdrHead head(cfg, reg, rng);
  Rng drng(1);
  CHECK_THROWS_AS(head.forward(random_tensor(drng, {2, 8}), false), ShapeError);
  CHECK_THROWS_AS(head.forward(random_tensor(drng, {2, 20, 20}), false), ShapeError);
  CHECK_THROWS_AS(head.forward(random_tensor(drng, {3, 8, 8}), false), ShapeError);
}

TEST_CASE("variants construct distinct wirings over one input") {
  Rng drng(21);
  Tensor x = random_tensor(drng, {2, 8, 8});
  std::vector<Tensor> outs;
  for (const char* variant : {"sdr", "dr", "sr"}) {
    ParamRegistry reg;
    Rng rng(77);
    SdrHead head(tiny_cfg(variant), reg, rng);
    auto out = head.forward(x, false);
    CHECK(out.cls.shape() == Shape{2, 4, 4});
    CHECK(out.reg.shape() == Shape{14, 4, 4});
    outs.push_back(out.cls);
  }
  auto a = outs[0].values(), b = outs[1].values(), c = outs[2].values();
  double dab = 0, dac = 0, dbc = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    dab = std::max(dab, std::abs(a[i] - b[i]));
    dac = std::max(dac, std::abs(a[i] - c[i]));
    dbc = std::max(dbc, std::abs(b[i] - c[i]));
  }
  CHECK(dab > 1e-9);
  CHECK(dac > 1e-9);
  CHECK(dbc > 1e-9);
}

TEST_CASE("zeroed skip projections reduce the full variant to the plain one") {
  ParamRegistry reg_full, reg_plain;
  Rng rng_a(13), rng_b(99);
  SdrHead full(tiny_cfg("sdr"), reg_full, rng_a);
  SdrHead plain(tiny_cfg("dr"), reg_plain, rng_b);

  for (auto t : reg_full.saved_tensors())
    if (t.name().rfind("sdr.align", 0) == 0) {
      auto v = t.mutable_values();
      std::fill(v.begin(), v.end(), 0.0);
    }
  copy_shared_params(reg_full, reg_plain);

  Rng drng(31);
  Tensor x = random_tensor(drng, {2, 16, 16});
  auto a = full.forward(x, false);
  auto b = plain.forward(x, false);
  auto ac = a.cls.values(), bc = b.cls.values();
  auto ar = a.reg.values(), br = b.reg.values();
  REQUIRE(ac.size() == bc.size());
  for (std::size_t i = 0; i < ac.size(); ++i) CHECK(ac[i] == doctest::Approx(bc[i]).epsilon(1e-12));
  for (std::size_t i = 0; i < ar.size(); ++i) CHECK(ar[i] == doctest::Approx(br[i]).epsilon(1e-12));
}

TEST_CASE("head biases start at zero so logits begin centered") {
  ParamRegistry reg;
  Rng rng(3);
  SdrHead head(tiny_cfg("sdr"), reg, rng);
  for (double v : reg.find("sdr.cls.bias").values()) CHECK(v == 0.0);
  for (double v : reg.find("sdr.reg.bias").values()) CHECK(v == 0.0);
}

TEST_CASE("forward gradients agree with finite differences") {
  TrainConfig cfg = tiny_cfg("sdr");
  ParamRegistry reg;
  Rng rng(41);
  SdrHead head(cfg, reg, rng);

  Rng drng(55);
  Tensor x = random_tensor(drng, {2, 8, 8}, -1.0, 1.0, true);
  Rng probe_rng(71);
  std::vector<double> cc, cr;
  auto build = [&]() {
    auto out = head.forward(x, true);
    if (cc.empty()) {
      for (std::size_t i = 0; i < out.cls.numel(); ++i) cc.push_back(probe_rng.uniform(-1, 1));
      for (std::size_t i = 0; i < out.reg.numel(); ++i) cr.push_back(probe_rng.uniform(-1, 1));
    }
    std::vector<std::size_t> all_c(out.cls.numel()), all_r(out.reg.numel());
    std::iota(all_c.begin(), all_c.end(), 0);
    std::iota(all_r.begin(), all_r.end(), 0);
    Tensor lc = sum_all(mul(select_flat(out.cls, all_c), Tensor::from({static_cast<int>(cc.size())}, cc)));
    Tensor lr = sum_all(mul(select_flat(out.reg, all_r), Tensor::from({static_cast<int>(cr.size())}, cr)));
    return add(lc, lr);
  };
  std::vector<Tensor> probed = {x};
  for (const auto& p : reg.params()) probed.push_back(p);
  CHECK(max_grad_error(probed, build, 1e-5) < 2e-5);
}

}  // TEST_SUITE
