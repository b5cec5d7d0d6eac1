#include <doctest.h>

#include <algorithm>
#include <set>

#include "svga/error.hpp"
#include "svga/geometry.hpp"
#include "svga/rng.hpp"
#include "testutil.hpp"

using namespace svga;

TEST_SUITE("geometry") {

TEST_CASE("farthest point sampling equals the n^2 reference on random clouds") {
  Rng rng(202);
  for (int trial = 0; trial < 100; ++trial) {
    const int count = 3 + static_cast<int>(rng.uniform_int(510));
    auto pts = testutil::random_points(rng, count);
    const int n = 1 + static_cast<int>(rng.uniform_int(std::min(count, 64)));
    auto got = farthest_point_sample(pts, n);
    auto want = testutil::fps_reference(pts, n, 0);
    CHECK(got == want);
  }
}

TEST_CASE("fps first pick is the seed and picks are distinct") {
  Rng rng(203);
  auto pts = testutil::random_points(rng, 50);
  auto picks = farthest_point_sample(pts, 20, 7);
  CHECK(picks[0] == 7);
  std::set<int> uniq(picks.begin(), picks.end());
  CHECK(uniq.size() == picks.size());
}

TEST_CASE("fps requesting every point returns a permutation") {
  Rng rng(204);
  auto pts = testutil::random_points(rng, 30);
  auto picks = farthest_point_sample(pts, 30);
  std::set<int> uniq(picks.begin(), picks.end());
  CHECK(uniq.size() == 30);
}

TEST_CASE("fps rejects invalid requests") {
  Rng rng(205);
  auto pts = testutil::random_points(rng, 5);
  CHECK_THROWS_AS(farthest_point_sample(pts, 6), InvalidArgumentError);
  CHECK_THROWS_AS(farthest_point_sample(pts, 0), InvalidArgumentError);
  CHECK_THROWS_AS(farthest_point_sample(pts, 2, 9), InvalidArgumentError);
}

TEST_CASE("hash grid radius query equals the linear scan on random clouds") {
  Rng rng(206);
  for (int trial = 0; trial < 100; ++trial) {
    const int count = 2 + static_cast<int>(rng.uniform_int(511));
    auto pts = testutil::random_points(rng, count);
    const double r = rng.uniform(0.3, 3.0);
    HashGrid grid(pts, r);
    for (int q = 0; q < std::min(count, 20); ++q) {
      auto got = grid.query_ball(q, r);
      auto want = testutil::ball_reference(pts, q, r);
      CHECK(got == want);
    }
  }
}

TEST_CASE("radius query is strict and includes the center point") {
  std::vector<Point> pts(3);
  pts[0] = {0, 0, 0, 0};
  pts[1] = {1.0, 0, 0, 0};  // exactly at distance r: excluded
  pts[2] = {0.5, 0, 0, 0};
  HashGrid grid(pts, 1.0);
  auto got = grid.query_ball(0, 1.0);
  CHECK(got == std::vector<int>{0, 2});
  CHECK(ball_query(pts, 0, 1.0) == got);
}

TEST_CASE("spherical voxels cover sampled centers and respect the cap") {
  Rng rng(207);
  for (int trial = 0; trial < 20; ++trial) {
    const int count = 40 + static_cast<int>(rng.uniform_int(200));
    auto pts = testutil::random_points(rng, count, 3.0);
    const int n = 16;
    const int cap = 8;
    const double r = 1.4;
    auto voxels = build_voxels(pts, n, r, cap);
    REQUIRE(voxels.size() == static_cast<std::size_t>(n));
    auto fps = farthest_point_sample(pts, n);
    for (std::size_t v = 0; v < voxels.size(); ++v) {
      CHECK(voxels[v].center_point_index == fps[v]);
      CHECK(static_cast<int>(voxels[v].member_indices.size()) <= cap);
      CHECK(!voxels[v].member_indices.empty());
      // Seed always kept, all members inside the strict ball.
      const auto& mem = voxels[v].member_indices;
      CHECK(std::find(mem.begin(), mem.end(), fps[v]) != mem.end());
      for (int idx : mem)
        CHECK(testutil::pdist2(pts[static_cast<std::size_t>(idx)],
                               pts[static_cast<std::size_t>(fps[v])]) < r * r);
      // Centroid is the member mean.
      double cx = 0, cy = 0, cz = 0;
      for (int idx : mem) {
        cx += pts[static_cast<std::size_t>(idx)].x;
        cy += pts[static_cast<std::size_t>(idx)].y;
        cz += pts[static_cast<std::size_t>(idx)].z;
      }
      const double m = static_cast<double>(mem.size());
      CHECK(voxels[v].centroid[0] == doctest::Approx(cx / m).epsilon(1e-12));
      CHECK(voxels[v].centroid[1] == doctest::Approx(cy / m).epsilon(1e-12));
      CHECK(voxels[v].centroid[2] == doctest::Approx(cz / m).epsilon(1e-12));
    }
  }
}

TEST_CASE("voxel membership below the cap matches the exact ball") {
  Rng rng(208);
  auto pts = testutil::random_points(rng, 120, 4.0);
  const double r = 0.9;
  auto voxels = build_voxels(pts, 24, r, 1000);
  for (const auto& v : voxels) {
    auto want = testutil::ball_reference(pts, v.center_point_index, r);
    CHECK(v.member_indices == want);
  }
}

TEST_CASE("knn graph equals the exhaustive reference") {
  Rng rng(209);
  for (int trial = 0; trial < 50; ++trial) {
    const int n = 6 + static_cast<int>(rng.uniform_int(40));
    std::vector<std::array<double, 3>> centers(static_cast<std::size_t>(n));
    for (auto& c : centers) {
      c[0] = rng.uniform(-5, 5);
      c[1] = rng.uniform(-5, 5);
      c[2] = rng.uniform(-5, 5);
    }
    const int k = 1 + static_cast<int>(rng.uniform_int(5));
    auto got = build_knn_graph(centers, k);
    CHECK(got.k == k);
    auto want = testutil::knn_reference(centers, k);
    CHECK(got.neighbors == want);
  }
}

TEST_CASE("knn graph rejects k out of range") {
  std::vector<std::array<double, 3>> centers(3, {0, 0, 0});
  centers[1] = {1, 0, 0};
  centers[2] = {2, 0, 0};
  CHECK_THROWS_AS(build_knn_graph(centers, 3), InvalidArgumentError);
  CHECK_THROWS_AS(build_knn_graph(centers, 0), InvalidArgumentError);
  CHECK_NOTHROW(build_knn_graph(centers, 2));
}

}  // TEST_SUITE
