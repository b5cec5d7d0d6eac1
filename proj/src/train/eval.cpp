#include "svga/eval.hpp"

#include <algorithm>
#include <sstream>

namespace svga {

std::string bucket_name(EvalBucket b) {
  switch (b) {
    case EvalBucket::Easy: return "easy";
    case EvalBucket::Moderate: return "moderate";
    case EvalBucket::Hard: return "hard";
    case EvalBucket::Overall: return "overall";
  }
  return "?";
}

namespace {

bool in_bucket(const LabeledBox& gt, EvalBucket bucket) {
  if (bucket == EvalBucket::Overall) return true;
  if (gt.difficulty == Difficulty::Unknown) return false;
  const int level = static_cast<int>(gt.difficulty);
  switch (bucket) {
    case EvalBucket::Easy: return level <= static_cast<int>(Difficulty::Easy);
    case EvalBucket::Moderate: return level <= static_cast<int>(Difficulty::Moderate);
    case EvalBucket::Hard: return level <= static_cast<int>(Difficulty::Hard);
    case EvalBucket::Overall: return true;
  }
  return false;
}

double overlap(const Box7& a, const Box7& b, bool bev) {
  return bev ? iou_bev(a, b) : iou_3d(a, b);
}

double interpolated_ap(const std::vector<PrPoint>& curve, int points) {
  double sum = 0.0;
  for (int i = 0; i < points; ++i) {
    // 11-point mode samples recall 0, 0.1, ... 1; 40-point mode samples
    // 1/40, 2/40, ... 1.
    const double r = points == 11 ? i / 10.0 : (i + 1) / 40.0;
    double best = 0.0;
    for (const auto& p : curve)
      if (p.recall >= r - 1e-12) best = std::max(best, p.precision);
    sum += best;
  }
  return 100.0 * sum / points;
}

}  // namespace

std::optional<ApResult> evaluate_ap(const std::vector<std::vector<Detection>>& dets_per_scene,
                                    const std::vector<std::vector<LabeledBox>>& gts_per_scene,
                                    ObjectClass cls, double iou_thresh, bool bev_iou,
                                    EvalBucket bucket, int ap_points) {
  if (dets_per_scene.size() != gts_per_scene.size())
    throw InvalidArgumentError("evaluate_ap: " + std::to_string(dets_per_scene.size()) +
                               " detection lists for " + std::to_string(gts_per_scene.size()) +
                               " scenes");
  if (ap_points != 11 && ap_points != 40)
    throw InvalidArgumentError("evaluate_ap: interpolation points must be 11 or 40");

  struct GtRef {
    const LabeledBox* gt;
    bool counted;
    bool matched = false;
  };
  std::vector<std::vector<GtRef>> gts(gts_per_scene.size());
  int n_gt = 0;
  for (std::size_t s = 0; s < gts_per_scene.size(); ++s)
    for (const auto& gt : gts_per_scene[s]) {
      if (gt.cls == ObjectClass::DontCare) {
        gts[s].push_back({&gt, false});
        continue;
      }
      if (gt.cls != cls) continue;
      const bool counted = in_bucket(gt, bucket);
      gts[s].push_back({&gt, counted});
      if (counted) ++n_gt;
    }
  if (n_gt == 0) return std::nullopt;

  struct DetRef {
    const Detection* det;
    std::size_t scene;
  };
  std::vector<DetRef> dets;
  for (std::size_t s = 0; s < dets_per_scene.size(); ++s)
    for (const auto& d : dets_per_scene[s])
      if (d.cls == cls) dets.push_back({&d, s});
  std::stable_sort(dets.begin(), dets.end(),
                   [](const DetRef& a, const DetRef& b) { return a.det->score > b.det->score; });

  ApResult res;
  res.n_gt = n_gt;
  int tp = 0, fp = 0;
  for (const auto& d : dets) {
    auto& scene_gts = gts[d.scene];
    int best = -1;
    double best_iou = iou_thresh;
    for (std::size_t g = 0; g < scene_gts.size(); ++g) {
      if (!scene_gts[g].counted || scene_gts[g].matched) continue;
      const double iou = overlap(d.det->box, scene_gts[g].gt->box, bev_iou);
      if (iou >= best_iou) {
        best_iou = iou;
        best = static_cast<int>(g);
      }
    }
    if (best >= 0) {
      scene_gts[static_cast<std::size_t>(best)].matched = true;
      ++tp;
      res.curve.push_back({static_cast<double>(tp) / n_gt, static_cast<double>(tp) / (tp + fp)});
      continue;
    }
    // A detection on an uncounted object is not a mistake.
    bool ignored = false;
    for (const auto& g : scene_gts) {
      if (g.counted) continue;
      if (overlap(d.det->box, g.gt->box, bev_iou) >= iou_thresh) {
        ignored = true;
        break;
      }
    }
    if (ignored) continue;
    ++fp;
    res.curve.push_back({static_cast<double>(tp) / n_gt, static_cast<double>(tp) / (tp + fp)});
  }
  res.n_tp = tp;
  res.n_fp = fp;
  res.ap = interpolated_ap(res.curve, ap_points);
  return res;
}

EvalReport evaluate_all(const std::vector<std::vector<Detection>>& dets_per_scene,
                        const std::vector<std::vector<LabeledBox>>& gts_per_scene, ObjectClass cls,
                        double iou_thresh, bool bev_iou, int ap_points) {
  EvalReport r;
  r.cls = cls;
  r.iou_thresh = iou_thresh;
  r.bev_iou = bev_iou;
  r.ap_points = ap_points;
  r.easy = evaluate_ap(dets_per_scene, gts_per_scene, cls, iou_thresh, bev_iou, EvalBucket::Easy,
                       ap_points);
  r.moderate = evaluate_ap(dets_per_scene, gts_per_scene, cls, iou_thresh, bev_iou,
                           EvalBucket::Moderate, ap_points);
  r.hard = evaluate_ap(dets_per_scene, gts_per_scene, cls, iou_thresh, bev_iou, EvalBucket::Hard,
                       ap_points);
  r.overall = evaluate_ap(dets_per_scene, gts_per_scene, cls, iou_thresh, bev_iou,
                          EvalBucket::Overall, ap_points);
  return r;
}

std::string format_report(const EvalReport& report) {
  std::ostringstream os;
  os.precision(2);
  os << std::fixed;
  os << class_name(report.cls) << " AP@" << report.iou_thresh << (report.bev_iou ? " bev" : " 3d")
     << " (" << report.ap_points << "-point)\n";
  auto row = [&](const char* label, const std::optional<ApResult>& r) {
    os << "  " << label << ": ";
    if (!r) {
      os << "n/a (no ground truth)\n";
      return;
    }
    os << r->ap << "  (gt " << r->n_gt << ", tp " << r->n_tp << ", fp " << r->n_fp << ")\n";
  };
  row("easy    ", report.easy);
  row("moderate", report.moderate);
  row("hard    ", report.hard);
  row("overall ", report.overall);
  return os.str();
}

}  // namespace svga
