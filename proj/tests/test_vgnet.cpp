#include <doctest.h>

#include <algorithm>
#include <array>
#include <cmath>
#include <numeric>
#include <vector>

#include "svga/config.hpp"
#include "svga/error.hpp"
#include "svga/geometry.hpp"
#include "svga/kitti.hpp"
#include "svga/rng.hpp"
#include "svga/vgnet.hpp"
#include "testutil.hpp"

using namespace svga;

namespace {

TrainConfig small_cfg() {
  TrainConfig c = config_defaults("car");
  c.n_points = 24;
  c.radius = 1.2;
  c.point_cap = 6;
  c.n_layers = 2;
  c.knn_k = 2;
  c.point_mlp = {8, 8};
  c.attn_mlp = {{8, 8}, {8, 12}};
  c.bev_channels = 4;
  c.grid_x_min = 0.0;
  c.grid_x_max = 8.0;
  c.grid_y_min = -4.0;
  c.grid_y_max = 4.0;
  c.grid_resolution = 0.5;
  return c;
}

std::vector<Point> grid_cloud(Rng& rng, int n) {
  std::vector<Point> pts;
  pts.reserve(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) {
    Point p;
    p.x = rng.uniform(0.5, 7.5);
    p.y = rng.uniform(-3.5, 3.5);
    p.z = rng.uniform(-0.5, 0.5);
    p.intensity = rng.uniform();
    pts.push_back(p);
  }
  return pts;
}

// Plain-loop re-derivation of one attention layer from the registry weights.
std::vector<double> attention_by_hand(const std::vector<double>& f, int t, int d, double beta,
                                      const ParamRegistry& reg, const std::string& prefix,
                                      const std::vector<int>& widths) {
  std::vector<double> agg(static_cast<std::size_t>(t) * d, 0.0);
  for (int j = 0; j < t; ++j) {
    std::vector<double> w(static_cast<std::size_t>(t), 0.0);
    double mx = -1e300;
    for (int k = 0; k < t; ++k) {
      if (k == j) continue;
      double dot = 0;
      for (int c = 0; c < d; ++c)
        dot += f[static_cast<std::size_t>(j) * d + c] * f[static_cast<std::size_t>(k) * d + c];
      w[static_cast<std::size_t>(k)] = dot;
      mx = std::max(mx, dot);
    }
    double z = 0;
    for (int k = 0; k < t; ++k)
      if (k != j) z += std::exp(w[static_cast<std::size_t>(k)] - mx);
    for (int c = 0; c < d; ++c) {
      double acc = beta * f[static_cast<std::size_t>(j) * d + c];
      if (t > 1)
        for (int k = 0; k < t; ++k)
          if (k != j)
            acc += std::exp(w[static_cast<std::size_t>(k)] - mx) / z *
                   f[static_cast<std::size_t>(k) * d + c];
      agg[static_cast<std::size_t>(j) * d + c] = acc;
    }
  }
  std::vector<double> h = agg;
  int cur = d;
  for (std::size_t li = 0; li < widths.size(); ++li) {
    const auto wv = reg.find(prefix + ".l" + std::to_string(li) + ".weight").values();
    const auto bv = reg.find(prefix + ".l" + std::to_string(li) + ".bias").values();
    const int out = widths[li];
    std::vector<double> nxt(static_cast<std::size_t>(t) * out, 0.0);
    for (int j = 0; j < t; ++j)
      for (int o = 0; o < out; ++o) {
        double acc = bv[static_cast<std::size_t>(o)];
        for (int c = 0; c < cur; ++c)
          acc += h[static_cast<std::size_t>(j) * cur + c] *
                 wv[static_cast<std::size_t>(o) * cur + c];
        nxt[static_cast<std::size_t>(j) * out + o] = std::max(0.0, acc);
      }
    h = std::move(nxt);
    cur = out;
  }
  return h;
}

}  // namespace

TEST_SUITE("voxel_graph") {

TEST_CASE("voxel input rows are seed offsets plus intensity") {
  TrainConfig cfg = small_cfg();
  ParamRegistry reg;
  Rng rng(5);
  VgNet net(cfg, reg, rng);

  std::vector<Point> pts(3);
  pts[0] = {1.0, 2.0, 3.0, 0.25};
  pts[1] = {4.0, 4.5, 5.0, 0.5};
  pts[2] = {2.0, 2.5, 3.5, 0.75};
  SphericalVoxel v;
  v.center_point_index = 2;
  v.member_indices = {0, 2};

  Tensor rows = net.voxel_input(pts, v);
  REQUIRE(rows.shape() == Shape{2, 4});
  auto rv = rows.values();
  CHECK(rv[0] == doctest::Approx(-1.0));
  CHECK(rv[1] == doctest::Approx(-0.5));
  CHECK(rv[2] == doctest::Approx(-0.5));
  CHECK(rv[3] == doctest::Approx(0.25));
  CHECK(rv[4] == doctest::Approx(0.0));
  CHECK(rv[5] == doctest::Approx(0.0));
  CHECK(rv[6] == doctest::Approx(0.0));
  CHECK(rv[7] == doctest::Approx(0.75));

  SUBCASE("raw coordinates behind the flag") {
    TrainConfig raw = cfg;
    raw.relative_coords = false;
    ParamRegistry reg2;
    Rng rng2(5);
    VgNet net2(raw, reg2, rng2);
    auto rv2 = net2.voxel_input(pts, v).values();
    CHECK(rv2[0] == doctest::Approx(1.0));
    CHECK(rv2[1] == doctest::Approx(2.0));
    CHECK(rv2[2] == doctest::Approx(3.0));
    CHECK(rv2[4] == doctest::Approx(2.0));
  }

  SUBCASE("empty voxel is rejected") {
    SphericalVoxel bad;
    CHECK_THROWS_AS(net.voxel_input(pts, bad), InvalidArgumentError);
  }
}

TEST_CASE("attention weights form a masked row-stochastic matrix") {
  Rng rng(11);
  Tensor f = random_tensor(rng, {5, 8});
  Tensor alpha = VgNet::attention_weights(f);
  REQUIRE(alpha.shape() == Shape{5, 5});
  auto av = alpha.values();
  for (int j = 0; j < 5; ++j) {
    CHECK(av[static_cast<std::size_t>(j) * 5 + j] == 0.0);
    double s = 0;
    for (int k = 0; k < 5; ++k) s += av[static_cast<std::size_t>(j) * 5 + k];
    CHECK(std::abs(s - 1.0) < 1e-9);
  }
  Tensor single = VgNet::attention_weights(random_tensor(rng, {1, 8}));
  CHECK(single.values()[0] == 0.0);
}

TEST_CASE("attention layer matches a plain-loop re-derivation") {
  TrainConfig cfg = small_cfg();
  ParamRegistry reg;
  Rng rng(23);
  VgNet net(cfg, reg, rng);

  for (int t : {1, 2, 5}) {
    Tensor f = random_tensor(rng, {t, 8});
    const double beta = 0.7;
    Tensor out = net.attention_layer(f, Tensor::full({1}, beta), 0);
    REQUIRE(out.shape() == Shape{t, 8});
    const auto fv = f.values();
    const auto want = attention_by_hand(std::vector<double>(fv.begin(), fv.end()), t, 8, beta,
                                        reg, "vgnet.local0", {8, 8});
    auto got = out.values();
    for (std::size_t i = 0; i < want.size(); ++i) CHECK(rel_err(got[i], want[i]) < 1e-12);
  }
}

TEST_CASE("swapping the two rows of a pair swaps the layer output rows") {
  TrainConfig cfg = small_cfg();
  ParamRegistry reg;
  Rng rng(31);
  VgNet net(cfg, reg, rng);
  Tensor f = random_tensor(rng, {2, 8});
  auto fv = f.values();
  std::vector<double> sw(fv.begin() + 8, fv.end());
  sw.insert(sw.end(), fv.begin(), fv.begin() + 8);
  Tensor beta = Tensor::full({1}, 1.0);
  auto a = net.attention_layer(f, beta, 1).values();
  auto b = net.attention_layer(Tensor::from({2, 8}, sw), beta, 1).values();
  const int d = static_cast<int>(a.size()) / 2;
  for (int c = 0; c < d; ++c) {
    CHECK(a[static_cast<std::size_t>(c)] == doctest::Approx(b[static_cast<std::size_t>(d + c)]));
    CHECK(a[static_cast<std::size_t>(d + c)] == doctest::Approx(b[static_cast<std::size_t>(c)]));
  }
}

TEST_CASE("gate modes") {
  TrainConfig cfg = small_cfg();
  Rng prng(41);
  Tensor g = random_tensor(prng, {4, 8});
  std::vector<std::array<double, 3>> cents = {{0, 0, 0}, {1, 0, 0}, {0, 1, 0}, {1, 1, 0}};
  KnnGraph graph = build_knn_graph(cents, 2);

  SUBCASE("off yields unit beta and passes the rows through") {
    cfg.global_gate = "off";
    ParamRegistry reg;
    Rng rng(7);
    VgNet net(cfg, reg, rng);
    auto gate = net.global_gate(g, graph, 0);
    REQUIRE(gate.beta.shape() == Shape{4, 1});
    for (double b : gate.beta.values()) CHECK(b == 1.0);
    auto av = gate.aggregated.values();
    auto gv = g.values();
    for (std::size_t i = 0; i < gv.size(); ++i) CHECK(av[i] == gv[i]);
    CHECK(gate.guard_hits == 0);
    CHECK_THROWS_AS(net.initial_global({}), StateError);
  }

  SUBCASE("per-voxel betas vary and agree with the shared aggregation") {
    ParamRegistry reg;
    Rng rng(7);
    VgNet net(cfg, reg, rng);
    auto gate = net.global_gate(g, graph, 0);
    REQUIRE(gate.beta.shape() == Shape{4, 1});
    for (double b : gate.beta.values()) {
      CHECK(b > 0.0);
      CHECK(b < 1.0);
    }
    Tensor direct = knn_dot_aggregate(g, graph.neighbors, 1e-8);
    auto av = gate.aggregated.values();
    auto dv = direct.values();
    REQUIRE(av.size() == dv.size());
    for (std::size_t i = 0; i < dv.size(); ++i) CHECK(av[i] == dv[i]);
  }

  SUBCASE("per-layer beta is one shared value") {
    cfg.global_gate = "per_layer";
    ParamRegistry reg;
    Rng rng(7);
    VgNet net(cfg, reg, rng);
    auto gate = net.global_gate(g, graph, 1);
    REQUIRE(gate.beta.shape() == Shape{4, 1});
    auto bv = gate.beta.values();
    for (std::size_t i = 1; i < bv.size(); ++i) CHECK(bv[i] == bv[0]);
  }
}

TEST_CASE("initial global embeds voxel centroids") {
  TrainConfig cfg = small_cfg();
  ParamRegistry reg;
  Rng rng(3);
  VgNet net(cfg, reg, rng);
  std::vector<SphericalVoxel> voxels(3);
  voxels[0].centroid = {1, 2, 0};
  voxels[1].centroid = {3, -1, 0.5};
  voxels[2].centroid = {5, 0, -0.5};
  Tensor g = net.initial_global(voxels);
  CHECK(g.shape() == Shape{3, 8});
  auto a = g.values();
  auto b = net.initial_global(voxels).values();
  for (std::size_t i = 0; i < a.size(); ++i) CHECK(a[i] == b[i]);
}

TEST_CASE("forward produces pooled rows and a BEV map with known placement") {
  TrainConfig cfg = small_cfg();
  ParamRegistry reg;
  Rng rng(17);
  VgNet net(cfg, reg, rng);

  Rng cloud_rng(99);
  std::vector<Point> pts = grid_cloud(cloud_rng, 40);
  auto voxels = build_voxels(pts, 10, cfg.radius, cfg.point_cap, 0);
  auto fwd = net.forward(pts, voxels);

  const int n = static_cast<int>(voxels.size());
  REQUIRE(fwd.pooled.shape() == Shape{n, 12});
  REQUIRE(fwd.bev.shape() == Shape{4, 16, 16});
  REQUIRE(static_cast<int>(fwd.cell_of_voxel.size()) == n);
  int off_grid = 0;
  for (int i = 0; i < n; ++i) {
    const auto& c = voxels[static_cast<std::size_t>(i)].centroid;
    const int col = static_cast<int>(std::floor((c[0] - cfg.grid_x_min) / cfg.grid_resolution));
    const int row = static_cast<int>(std::floor((c[1] - cfg.grid_y_min) / cfg.grid_resolution));
    const int want = (row < 0 || row >= 16 || col < 0 || col >= 16) ? -1 : row * 16 + col;
    CHECK(fwd.cell_of_voxel[static_cast<std::size_t>(i)] == want);
    if (want == -1) ++off_grid;
  }
  CHECK(fwd.dropped_voxels == off_grid);
}

TEST_CASE("forward rejects degenerate inputs") {
  TrainConfig cfg = small_cfg();
  ParamRegistry reg;
  Rng rng(19);
  VgNet net(cfg, reg, rng);
  Rng cloud_rng(5);
  std::vector<Point> pts = grid_cloud(cloud_rng, 12);
  CHECK_THROWS_AS(net.forward(pts, {}), InvalidArgumentError);
  auto voxels = build_voxels(pts, 2, cfg.radius, cfg.point_cap, 0);
  CHECK_THROWS_AS(net.forward(pts, voxels), InvalidArgumentError);

  SUBCASE("a single voxel is fine without the global branch") {
    TrainConfig off = small_cfg();
    off.global_gate = "off";
    ParamRegistry reg2;
    Rng rng2(19);
    VgNet net2(off, reg2, rng2);
    auto one = build_voxels(pts, 1, off.radius, off.point_cap, 0);
    auto fwd = net2.forward(pts, one);
    CHECK(fwd.pooled.dim(0) == 1);
  }
}

TEST_CASE("voxel order and member order do not change the result") {
  TrainConfig cfg = small_cfg();
  ParamRegistry reg;
  Rng rng(29);
  VgNet net(cfg, reg, rng);

  Rng cloud_rng(123);
  std::vector<Point> pts = grid_cloud(cloud_rng, 48);
  auto voxels = build_voxels(pts, 12, cfg.radius, cfg.point_cap, 0);
  auto base = net.forward(pts, voxels);

  Rng shuffle_rng(7);
  std::vector<int> perm(voxels.size());
  std::iota(perm.begin(), perm.end(), 0);
  for (int i = static_cast<int>(perm.size()) - 1; i > 0; --i)
    std::swap(perm[static_cast<std::size_t>(i)],
              perm[static_cast<std::size_t>(shuffle_rng.uniform_int(i + 1))]);
  std::vector<SphericalVoxel> shuffled;
  shuffled.reserve(voxels.size());
  for (int src : perm) {
    SphericalVoxel v = voxels[static_cast<std::size_t>(src)];
    for (int i = static_cast<int>(v.member_indices.size()) - 1; i > 0; --i)
      std::swap(v.member_indices[static_cast<std::size_t>(i)],
                v.member_indices[static_cast<std::size_t>(shuffle_rng.uniform_int(i + 1))]);
    shuffled.push_back(std::move(v));
  }
  auto moved = net.forward(pts, shuffled);

  CHECK(moved.dropped_voxels == base.dropped_voxels);
  CHECK(moved.gate_guard_hits == base.gate_guard_hits);
  auto bp = base.pooled.values();
  auto mp = moved.pooled.values();
  const int d = base.pooled.dim(1);
  for (std::size_t i = 0; i < perm.size(); ++i)
    for (int c = 0; c < d; ++c)
      CHECK(std::abs(mp[i * static_cast<std::size_t>(d) + c] -
                     bp[static_cast<std::size_t>(perm[i]) * d + c]) < 1e-9);
  auto bb = base.bev.values();
  auto mb = moved.bev.values();
  for (std::size_t i = 0; i < bb.size(); ++i) CHECK(std::abs(bb[i] - mb[i]) < 1e-9);
}

TEST_CASE("forward gradients agree with finite differences") {
  TrainConfig cfg = small_cfg();
  cfg.point_mlp = {4, 4};
  cfg.attn_mlp = {{4, 4}, {4, 6}};
  ParamRegistry reg;
  Rng rng(37);
  VgNet net(cfg, reg, rng);

  Rng cloud_rng(55);
  std::vector<Point> pts = grid_cloud(cloud_rng, 14);
  auto voxels = build_voxels(pts, 5, cfg.radius, 4, 0);

  Rng probe_rng(71);
  std::vector<double> cp, cb;
  auto build = [&]() {
    auto fwd = net.forward(pts, voxels);
    if (cp.empty()) {
      for (std::size_t i = 0; i < fwd.pooled.numel(); ++i) cp.push_back(probe_rng.uniform(-1, 1));
      for (std::size_t i = 0; i < fwd.bev.numel(); ++i) cb.push_back(probe_rng.uniform(-1, 1));
    }
    std::vector<std::size_t> all_p(fwd.pooled.numel()), all_b(fwd.bev.numel());
    std::iota(all_p.begin(), all_p.end(), 0);
    std::iota(all_b.begin(), all_b.end(), 0);
    Tensor lp = sum_all(mul(select_flat(fwd.pooled, all_p), Tensor::from({static_cast<int>(cp.size())}, cp)));
    Tensor lb = sum_all(mul(select_flat(fwd.bev, all_b), Tensor::from({static_cast<int>(cb.size())}, cb)));
    return add(lp, lb);
  };
  CHECK(max_grad_error(reg.params(), build, 1e-5) < 2e-5);
}

}  // TEST_SUITE
