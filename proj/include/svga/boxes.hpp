#pragma once

#include <array>
#include <string>
#include <vector>

#include "svga/error.hpp"

namespace svga {

// Heading wrapped to (-pi, pi].
double normalize_angle(double a);

// 7-DOF oriented box: center, extents, heading about +z. l runs along the
// heading direction, w across it.
struct Box7 {
  double x = 0, y = 0, z = 0;
  double l = 0, w = 0, h = 0;
  double theta = 0;
};

enum class ObjectClass { Car, Pedestrian, Cyclist, DontCare };

const char* class_name(ObjectClass c);
ObjectClass class_from_name(const std::string& name);  // unknown names -> DontCare

enum class Difficulty { Easy, Moderate, Hard, Unknown };

struct LabeledBox {
  Box7 box;
  ObjectClass cls = ObjectClass::DontCare;
  Difficulty difficulty = Difficulty::Unknown;
};

struct Detection {
  Box7 box;
  double score = 0;
  ObjectClass cls = ObjectClass::Car;
};

struct Residual7 {
  double dx = 0, dy = 0, dz = 0, dw = 0, dl = 0, dh = 0, dtheta = 0;
};

// Normalized offsets between a ground-truth box and an anchor. Center offsets
// divide by the anchor's BEV diagonal (dz by its height), extents are log
// ratios, and the heading residual is sin of the difference.
Residual7 encode_residual(const Box7& gt, const Box7& anchor);

// Algebraic inverse; exact whenever |heading difference| <= pi/2. |dtheta|
// beyond 1 is clamped and counted.
Box7 decode_residual(const Residual7& res, const Box7& anchor, int* clamped = nullptr);

std::array<std::array<double, 2>, 4> box_corners_bev(const Box7& b);

double iou_bev(const Box7& a, const Box7& b);
double iou_3d(const Box7& a, const Box7& b);

// Greedy descending-score suppression; ties broken by lower index. A kept box
// suppresses any later box whose IoU with it exceeds the threshold.
std::vector<int> nms(const std::vector<Box7>& boxes, const std::vector<double>& scores,
                     double iou_thresh, bool use_3d_iou = false);

struct AnchorSpec {
  ObjectClass cls = ObjectClass::Car;
  double l = 0, w = 0, h = 0;
  double z = 0;
  double theta = 0;
};

// One anchor per (cell, spec), laid out cell-major: index (i*w1 + j)*A + s for
// row i, column j, spec s. Rows follow y, columns follow x.
struct AnchorGrid {
  int h1 = 0, w1 = 0;
  std::vector<AnchorSpec> specs;
  std::vector<Box7> boxes;
  std::vector<ObjectClass> classes;

  int anchors_per_cell() const { return static_cast<int>(specs.size()); }
  std::size_t size() const { return boxes.size(); }
};

AnchorGrid build_anchor_grid(double x_min, double y_min, double cell_size, int h1, int w1,
                             const std::vector<AnchorSpec>& specs);

// Per-anchor assignment. gt_of_anchor: index of the matched ground truth for
// positives, -1 for negatives, -2 for ignored anchors.
struct AnchorAssignment {
  std::vector<int> gt_of_anchor;
  int n_pos = 0, n_neg = 0, n_ignore = 0;

  static constexpr int kNegative = -1;
  static constexpr int kIgnore = -2;
};

// BEV-IoU threshold assignment restricted to same-class ground truths, with a
// force-match pass so every (non-DontCare) ground truth gets at least one
// positive anchor.
AnchorAssignment match_anchors(const AnchorGrid& grid, const std::vector<LabeledBox>& gts,
                               double pos_thresh, double neg_thresh);

}  // namespace svga
