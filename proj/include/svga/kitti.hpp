#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "svga/boxes.hpp"

namespace svga {

struct Point {
  double x = 0, y = 0, z = 0;
  double intensity = 0;  // clamped to [0,1] on load
};

struct Scene {
  std::vector<Point> points;
  std::vector<LabeledBox> labels;
  std::string id;
};

// Raw binary, four little-endian float32 per point.
std::vector<Point> load_velodyne(const std::string& path);
void save_velodyne(const std::string& path, const std::vector<Point>& points);

// Rigid LIDAR-to-camera transform (rectification folded in). Identity when no
// calib file exists, as for synthetic scenes.
struct CalibTransform {
  std::array<double, 9> r{1, 0, 0, 0, 1, 0, 0, 0, 1};  // row-major
  std::array<double, 3> t{0, 0, 0};

  std::array<double, 3> to_cam(const std::array<double, 3>& p) const;
  std::array<double, 3> to_velo(const std::array<double, 3>& p) const;
};

CalibTransform load_calib(const std::string& path);

// KITTI occlusion/truncation/2D-height buckets; Unknown without a valid box.
Difficulty assign_difficulty(double truncation, int occlusion, double bbox_height, bool bbox_valid);

// KITTI label text. Camera-frame rows are converted to LIDAR-frame boxes;
// unrecognized type strings fold into DontCare.
std::vector<LabeledBox> load_labels(const std::string& path, const CalibTransform& calib);
std::vector<Detection> load_detections(const std::string& path, const CalibTransform& calib);

void save_labels(const std::string& path, const std::vector<LabeledBox>& labels,
                 const CalibTransform& calib);
// One line per detection with a trailing score column, descending score order.
void save_detections(const std::string& path, const std::vector<Detection>& dets,
                     const CalibTransform& calib);

struct SynthConfig {
  int n_boxes = 3;
  int n_clutter = 600;
  int points_per_box = 160;
  double noise = 0.02;  // per-axis uniform surface jitter bound, meters
  double ground_z = -1.73;
  double center_x_min = 3, center_x_max = 29;
  double center_y_min = -13, center_y_max = 13;
  double l_min = 3.4, l_max = 4.4;
  double w_min = 1.4, w_max = 1.8;
  double h_min = 1.4, h_max = 1.7;
  double theta_min = -M_PI, theta_max = M_PI;
  double clutter_x_min = 0, clutter_x_max = 32;
  double clutter_y_min = -16, clutter_y_max = 16;
  double clutter_height = 0.3;
  ObjectClass cls = ObjectClass::Car;
};

// Pure function of (config, seed, id): cuboid surfaces (all faces but the
// bottom) plus ground clutter kept outside every box.
Scene generate_synthetic(const SynthConfig& cfg, std::uint64_t seed, const std::string& id);

// Scene collection: either a KITTI-layout directory (velodyne/, label_2/,
// calib/) restricted by an optional split file, or synthetic scenes generated
// on demand.
class Dataset {
 public:
  static Dataset open_kitti(const std::string& root, const std::string& split_path = "");
  static Dataset synthetic(const SynthConfig& cfg, int n_scenes, std::uint64_t seed);

  std::size_t size() const { return ids_.size(); }
  const std::string& scene_id(std::size_t i) const { return ids_.at(i); }
  Scene load(std::size_t i) const;

  // Materializes every scene in KITTI layout under root.
  void write_kitti(const std::string& root) const;

 private:
  enum class Kind { Kitti, Synthetic };
  Kind kind_ = Kind::Synthetic;
  std::string root_;
  std::vector<std::string> ids_;
  SynthConfig synth_;
  std::uint64_t seed_ = 0;
};

}  // namespace svga
