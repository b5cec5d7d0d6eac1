#include <doctest.h>

#include <unistd.h>

#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include "svga/checkpoint.hpp"
#include "svga/error.hpp"
#include "svga/layers.hpp"
#include "svga/model.hpp"
#include "svga/rng.hpp"
#include "testutil.hpp"

using namespace svga;
namespace fs = std::filesystem;

namespace {
struct TempDir {
  fs::path path;
  TempDir() {
    path = fs::temp_directory_path() / ("svga_ckpt_" + std::to_string(::getpid()) + "_" +
                                       std::to_string(counter()++));
    fs::create_directories(path);
  }
  ~TempDir() { fs::remove_all(path); }
  static int& counter() {
    static int c = 0;
    return c;
  }
  std::string file(const std::string& name) const { return (path / name).string(); }
};

void build_small(ParamRegistry& reg, Rng& rng) {
  Linear a(reg, "enc.a", 3, 4, rng);
  Linear b(reg, "enc.b", 4, 2, rng);
  reg.add_buffer("enc.stat", Tensor::full({4}, 0.25));
}
}  // namespace

TEST_SUITE("checkpoint") {

TEST_CASE("round trip preserves names shapes and values") {
  TempDir td;
  Rng rng(7);
  ParamRegistry reg;
  build_small(reg, rng);
  const std::string cfg_text = "n_points = 64\nradius = 1.5\n";
  save_checkpoint(td.file("m.svga"), cfg_text, reg.saved_tensors());

  const CheckpointData data = load_checkpoint(td.file("m.svga"));
  CHECK(data.config_text == cfg_text);
  const auto saved = reg.saved_tensors();
  REQUIRE(data.tensors.size() == saved.size());
  for (std::size_t i = 0; i < saved.size(); ++i) {
    CHECK(data.tensors[i].first == saved[i].name());
    CHECK(data.tensors[i].second.shape() == saved[i].shape());
    const auto got = data.tensors[i].second.values();
    const auto want = saved[i].values();
    REQUIRE(got.size() == want.size());
    for (std::size_t j = 0; j < got.size(); ++j) CHECK(got[j] == want[j]);
  }
}

TEST_CASE("empty config text survives the round trip") {
  TempDir td;
  Rng rng(3);
  ParamRegistry reg;
  Linear a(reg, "only", 2, 2, rng);
  save_checkpoint(td.file("m.svga"), "", reg.saved_tensors());
  CHECK(load_checkpoint(td.file("m.svga")).config_text.empty());
}

TEST_CASE("load_into_registry transfers values into a matching registry") {
  TempDir td;
  Rng rng_a(11), rng_b(99);
  ParamRegistry src, dst;
  build_small(src, rng_a);
  build_small(dst, rng_b);
  save_checkpoint(td.file("m.svga"), "x = 1\n", src.saved_tensors());
  load_into_registry(load_checkpoint(td.file("m.svga")), dst);
  const auto a = src.saved_tensors();
  const auto b = dst.saved_tensors();
  REQUIRE(a.size() == b.size());
  for (std::size_t i = 0; i < a.size(); ++i) {
    const auto va = a[i].values();
    const auto vb = b[i].values();
    for (std::size_t j = 0; j < va.size(); ++j) CHECK(va[j] == vb[j]);
  }
}

TEST_CASE("unnamed tensor cannot be saved") {
  TempDir td;
  std::vector<Tensor> ts = {Tensor::full({2, 2}, 1.0)};
  CHECK_THROWS_AS(save_checkpoint(td.file("m.svga"), "", ts), StateError);
}

TEST_CASE("missing file raises an io error") {
  CHECK_THROWS_AS(load_checkpoint("/tmp/svga_ckpt_does_not_exist.svga"), IoError);
}

TEST_CASE("wrong magic raises a parse error") {
  TempDir td;
  {
    std::ofstream os(td.file("bad.svga"), std::ios::binary);
    os << "NOTACKPT and then some bytes";
  }
  CHECK_THROWS_AS(load_checkpoint(td.file("bad.svga")), ParseError);
}

TEST_CASE("truncated file raises a parse error") {
  TempDir td;
  Rng rng(5);
  ParamRegistry reg;
  build_small(reg, rng);
  save_checkpoint(td.file("m.svga"), "k = v\n", reg.saved_tensors());
  std::string all;
  {
    std::ifstream is(td.file("m.svga"), std::ios::binary);
    all.assign(std::istreambuf_iterator<char>(is), std::istreambuf_iterator<char>());
  }
  {
    std::ofstream os(td.file("cut.svga"), std::ios::binary);
    os.write(all.data(), static_cast<std::streamsize>(all.size() / 2));
  }
  CHECK_THROWS_AS(load_checkpoint(td.file("cut.svga")), ParseError);
}

TEST_CASE("unsupported version raises a parse error") {
  TempDir td;
  Rng rng(5);
  ParamRegistry reg;
  build_small(reg, rng);
  save_checkpoint(td.file("m.svga"), "", reg.saved_tensors());
  {
    std::fstream f(td.file("m.svga"), std::ios::in | std::ios::out | std::ios::binary);
    f.seekp(8);
    const char v2[4] = {2, 0, 0, 0};
    f.write(v2, 4);
  }
  CHECK_THROWS_AS(load_checkpoint(td.file("m.svga")), ParseError);
}

TEST_CASE("registry mismatches are rejected") {
  TempDir td;
  Rng rng(5);
  ParamRegistry reg;
  build_small(reg, rng);
  save_checkpoint(td.file("m.svga"), "", reg.saved_tensors());
  const CheckpointData data = load_checkpoint(td.file("m.svga"));

  SUBCASE("tensor count") {
    ParamRegistry small;
    Rng r2(1);
    Linear only(small, "enc.a", 3, 4, r2);
    CHECK_THROWS_AS(load_into_registry(data, small), StateError);
  }
  SUBCASE("tensor name") {
    ParamRegistry renamed;
    Rng r2(1);
    Linear a(renamed, "enc.z", 3, 4, r2);
    Linear b(renamed, "enc.b", 4, 2, r2);
    renamed.add_buffer("enc.stat", Tensor::full({4}, 0.0));
    CHECK_THROWS_AS(load_into_registry(data, renamed), StateError);
  }
  SUBCASE("tensor shape") {
    ParamRegistry reshaped;
    Rng r2(1);
    Linear a(reshaped, "enc.a", 3, 5, r2);
    Linear b(reshaped, "enc.b", 4, 2, r2);
    reshaped.add_buffer("enc.stat", Tensor::full({4}, 0.0));
    CHECK_THROWS_AS(load_into_registry(data, reshaped), ShapeError);
  }
}

TEST_CASE("model save and load round trips config and weights") {
  TempDir td;
  TrainConfig cfg = desk_preset();
  cfg.n_points = 48;
  cfg.synthetic_clutter = 40;
  SvgaModel model(cfg);
  model.save(td.file("model.svga"));

  SvgaModel back = SvgaModel::load(td.file("model.svga"));
  CHECK(serialize_config(back.config()) == serialize_config(cfg));
  const auto a = model.registry().saved_tensors();
  const auto b = back.registry().saved_tensors();
  REQUIRE(a.size() == b.size());
  for (std::size_t i = 0; i < a.size(); ++i) {
    CHECK(a[i].name() == b[i].name());
    const auto va = a[i].values();
    const auto vb = b[i].values();
    REQUIRE(va.size() == vb.size());
    for (std::size_t j = 0; j < va.size(); ++j) CHECK(va[j] == vb[j]);
  }
}

}  // TEST_SUITE
