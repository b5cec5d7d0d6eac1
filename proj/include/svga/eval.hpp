#pragma once

#include <optional>
#include <string>
#include <vector>

#include "svga/boxes.hpp"

namespace svga {

// Difficulty buckets are cumulative: Moderate counts Easy and Moderate ground
// truths, Hard counts all three. Overall counts every non-DontCare ground
// truth regardless of difficulty metadata.
enum class EvalBucket { Easy, Moderate, Hard, Overall };

std::string bucket_name(EvalBucket b);

struct PrPoint {
  double recall;
  double precision;
};

struct ApResult {
  double ap;  // percent
  std::vector<PrPoint> curve;
  int n_gt = 0;
  int n_tp = 0, n_fp = 0;
};

struct EvalReport {
  ObjectClass cls;
  double iou_thresh;
  bool bev_iou = false;
  int ap_points = 11;
  // Absent when the bucket holds no counted ground truth.
  std::optional<ApResult> easy, moderate, hard, overall;
};

// Score-ordered greedy matching per scene. A detection overlapping an ignored
// ground truth (DontCare or outside the bucket) above threshold counts as
// neither true nor false positive. ap_points is 11 or 40.
std::optional<ApResult> evaluate_ap(const std::vector<std::vector<Detection>>& dets_per_scene,
                                    const std::vector<std::vector<LabeledBox>>& gts_per_scene,
                                    ObjectClass cls, double iou_thresh, bool bev_iou,
                                    EvalBucket bucket, int ap_points);

EvalReport evaluate_all(const std::vector<std::vector<Detection>>& dets_per_scene,
                        const std::vector<std::vector<LabeledBox>>& gts_per_scene, ObjectClass cls,
                        double iou_thresh, bool bev_iou, int ap_points);

std::string format_report(const EvalReport& report);

}  // namespace svga
