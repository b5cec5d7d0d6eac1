#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "svga/boxes.hpp"
#include "svga/kitti.hpp"

namespace svga {

// Every field is a config-file key; the file format is flat `key = value`
// lines. Unknown keys are errors.
struct TrainConfig {
  std::string class_set = "car";      // car | pedcyc
  std::string dataset = "synthetic";  // synthetic | kitti
  std::string dataset_root;
  std::string split;

  int synthetic_scenes = 20;
  int synthetic_boxes = 3;
  int synthetic_clutter = 600;
  int synthetic_points_per_box = 160;
  double synthetic_noise = 0.02;

  int n_points = 1024;
  double radius = 1.8;
  int point_cap = 64;
  int n_layers = 3;
  int knn_k = 3;
  std::vector<int> point_mlp{64, 128, 128};
  std::vector<std::array<int, 2>> attn_mlp{{128, 128}, {128, 256}, {512, 1024}};
  std::string global_gate = "per_voxel";  // per_voxel | per_layer | off
  bool relative_coords = true;

  int bev_channels = 64;
  double grid_x_min = 0.0, grid_x_max = 70.4;
  double grid_y_min = -40.0, grid_y_max = 40.0;
  double grid_resolution = 0.4;

  std::vector<int> sdr_block_channels{64, 128, 256};
  int sdr_convs_per_block = 4;
  int sdr_branch_channels = 128;
  int sdr_fused_channels = 128;
  std::string head_variant = "sdr";  // sdr | dr | sr

  double anchor_z = -1.0;
  double pos_iou = 0.6, neg_iou = 0.45;
  double nms_iou = 0.7;
  std::string nms_space = "bev";  // bev | 3d
  double score_threshold = 0.3;
  int max_detections = 50;

  double learning_rate = 1e-3;
  std::vector<int> lr_decay_epochs{140, 160, 180};
  double lr_decay_factor = 0.1;
  int epochs = 200;
  int max_steps = 0;  // 0: run the full epoch count
  int batch_size = 2;
  std::uint64_t seed = 0;
  bool augment = false;

  int ap_mode = 11;  // 11 | 40 interpolation points
  double eval_iou = 0.7;
  std::string eval_space = "3d";  // 3d | bev

  int grid_h() const;
  int grid_w() const;
  int head_h() const { return grid_h() / 2; }
  int head_w() const { return grid_w() / 2; }
  double head_cell() const { return 2.0 * grid_resolution; }

  std::vector<AnchorSpec> anchor_specs() const;
  SynthConfig synth_config() const;
};

// Per-class-set defaults (sampling size, radius, thresholds).
TrainConfig config_defaults(const std::string& class_set);

// Small configuration sized for minutes-long CPU training on synthetic scenes.
TrainConfig desk_preset();

TrainConfig parse_config(const std::string& text);
TrainConfig load_config(const std::string& path);
std::string serialize_config(const TrainConfig& cfg);

// Structural checks shared by every entry point; throws ConfigError.
void validate_config(const TrainConfig& cfg);
// Additional constraints that only matter when training.
void validate_for_training(const TrainConfig& cfg);

}  // namespace svga
