#include <doctest.h>

#include <string>

#include "svga/config.hpp"
#include "svga/error.hpp"

using namespace svga;

TEST_SUITE("config") {

TEST_CASE("defaults validate for both class sets") {
  CHECK_NOTHROW(validate_config(config_defaults("car")));
  CHECK_NOTHROW(validate_config(config_defaults("pedcyc")));
  CHECK_NOTHROW(validate_config(desk_preset()));
  CHECK_THROWS_AS(config_defaults("boats"), ConfigError);
}

TEST_CASE("serialize then parse is the identity") {
  TrainConfig cfg = desk_preset();
  cfg.dataset_root = "/data/kitti";
  cfg.split = "train.txt";
  cfg.learning_rate = 3.25e-4;
  cfg.attn_mlp = {{8, 16}, {16, 32}, {32, 48}};
  cfg.lr_decay_epochs = {10, 20};
  const std::string text = serialize_config(cfg);
  TrainConfig back = parse_config(text);
  CHECK(serialize_config(back) == text);
  CHECK(back.learning_rate == cfg.learning_rate);
  CHECK(back.attn_mlp == cfg.attn_mlp);
  CHECK(back.lr_decay_epochs == cfg.lr_decay_epochs);
  CHECK(back.dataset_root == cfg.dataset_root);
  CHECK(back.seed == cfg.seed);
}

TEST_CASE("parser handles comments, blanks and whitespace") {
  TrainConfig back = parse_config(
      "# leading comment\n"
      "\n"
      "  class_set = car  \n"
      "n_points=512\n"
      "radius = 1.25   # trailing comment\n");
  CHECK(back.class_set == "car");
  CHECK(back.n_points == 512);
  CHECK(back.radius == 1.25);
}

TEST_CASE("class_set line applies that class's defaults before overrides") {
  TrainConfig ped = parse_config("class_set = pedcyc\n");
  TrainConfig peddef = config_defaults("pedcyc");
  CHECK(ped.n_points == peddef.n_points);
  CHECK(ped.radius == peddef.radius);
  TrainConfig overridden = parse_config("class_set = pedcyc\nradius = 2.5\n");
  CHECK(overridden.radius == 2.5);
}

TEST_CASE("parser reports unknown keys, duplicates and bad values with line numbers") {
  CHECK_THROWS_WITH_AS(parse_config("nonsense_key = 1\n"),
                       doctest::Contains("nonsense_key"), ConfigError);
  CHECK_THROWS_WITH_AS(parse_config("n_points = 128\nn_points = 256\n"),
                       doctest::Contains("duplicate"), ConfigError);
  CHECK_THROWS_AS(parse_config("n_points = banana\n"), ConfigError);
  CHECK_THROWS_WITH_AS(parse_config("n_points\n"), doctest::Contains("line 1"), ConfigError);
  CHECK_THROWS_AS(parse_config("= 5\n"), ConfigError);
}

TEST_CASE("list and pair syntax") {
  TrainConfig cfg = parse_config(
      "point_mlp = 8, 16, 24\n"
      "attn_mlp = 8,16; 16,32; 32,64\n"
      "lr_decay_epochs = 5\n");
  CHECK(cfg.point_mlp == std::vector<int>{8, 16, 24});
  REQUIRE(cfg.attn_mlp.size() == 3);
  CHECK(cfg.attn_mlp[1][0] == 16);
  CHECK(cfg.attn_mlp[1][1] == 32);
  CHECK(cfg.lr_decay_epochs == std::vector<int>{5});
  CHECK_THROWS_AS(validate_config(parse_config("point_mlp = 8, -2\n")), ConfigError);
  CHECK_THROWS_AS(parse_config("attn_mlp = 8; 16,32\n"), ConfigError);
}

TEST_CASE("grid extents derive the bev shape") {
  TrainConfig cfg = desk_preset();
  // 32 m at 0.4 m resolution.
  CHECK(cfg.grid_w() == 80);
  CHECK(cfg.grid_h() == 80);
  CHECK(cfg.head_w() == 40);
  CHECK(cfg.head_h() == 40);
  CHECK(cfg.head_cell() == doctest::Approx(0.8));
  cfg.grid_x_max = 70.4;
  cfg.grid_resolution = 0.4;
  CHECK(cfg.grid_w() == 176);
}

TEST_CASE("validation rejects out-of-range settings") {
  auto bad = [](auto&& mutate) {
    TrainConfig cfg = desk_preset();
    mutate(cfg);
    return cfg;
  };
  CHECK_THROWS_AS(validate_config(bad([](TrainConfig& c) { c.n_points = 0; })), ConfigError);
  CHECK_THROWS_AS(validate_config(bad([](TrainConfig& c) { c.knn_k = c.n_points; })), ConfigError);
  CHECK_THROWS_AS(validate_config(bad([](TrainConfig& c) { c.pos_iou = 0.3; c.neg_iou = 0.4; })),
                  ConfigError);
  CHECK_THROWS_AS(validate_config(bad([](TrainConfig& c) { c.attn_mlp.pop_back(); })), ConfigError);
  CHECK_THROWS_AS(validate_config(bad([](TrainConfig& c) { c.global_gate = "sometimes"; })),
                  ConfigError);
  CHECK_THROWS_AS(validate_config(bad([](TrainConfig& c) { c.head_variant = "xl"; })), ConfigError);
  CHECK_THROWS_AS(validate_config(bad([](TrainConfig& c) { c.sdr_block_channels = {8, 16}; })),
                  ConfigError);
  CHECK_THROWS_AS(validate_config(bad([](TrainConfig& c) { c.grid_resolution = 0.37; })),
                  ConfigError);
  CHECK_THROWS_AS(validate_config(bad([](TrainConfig& c) { c.ap_mode = 12; })), ConfigError);
  CHECK_THROWS_AS(validate_config(bad([](TrainConfig& c) { c.eval_space = "both"; })), ConfigError);
  CHECK_THROWS_AS(validate_config(bad([](TrainConfig& c) {
                    c.dataset = "kitti";
                    c.dataset_root.clear();
                  })),
                  ConfigError);
  CHECK_NOTHROW(validate_config(bad([](TrainConfig& c) { c.max_steps = 0; })));
}

TEST_CASE("anchor specs follow the class set") {
  TrainConfig car = config_defaults("car");
  auto specs = car.anchor_specs();
  REQUIRE(specs.size() == 2);
  CHECK(specs[0].cls == ObjectClass::Car);
  CHECK(specs[0].l == doctest::Approx(3.9));
  CHECK(specs[0].w == doctest::Approx(1.6));
  CHECK(specs[0].h == doctest::Approx(1.56));
  CHECK(specs[0].theta == doctest::Approx(0.0));
  CHECK(specs[1].theta == doctest::Approx(M_PI / 2));

  TrainConfig ped = config_defaults("pedcyc");
  auto pspecs = ped.anchor_specs();
  REQUIRE(pspecs.size() == 4);
  CHECK(pspecs[0].cls == ObjectClass::Pedestrian);
  CHECK(pspecs[2].cls == ObjectClass::Cyclist);
  CHECK(pspecs[2].l == doctest::Approx(1.76));
}

TEST_CASE("synthetic generator config tracks the grid") {
  TrainConfig cfg = desk_preset();
  SynthConfig s = cfg.synth_config();
  CHECK(s.n_boxes == cfg.synthetic_boxes);
  CHECK(s.clutter_x_min == cfg.grid_x_min);
  CHECK(s.clutter_x_max == cfg.grid_x_max);
  CHECK(s.center_x_min > cfg.grid_x_min);
  CHECK(s.center_x_max < cfg.grid_x_max);
  CHECK(s.cls == ObjectClass::Car);
}

TEST_CASE("training validation needs scenes and boxes") {
  TrainConfig cfg = desk_preset();
  cfg.synthetic_scenes = 0;
  CHECK_THROWS_AS(validate_for_training(cfg), ConfigError);
}

}  // TEST_SUITE
